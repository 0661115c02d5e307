//! Command-line front end: `simulate`, `fit`, `replicate` and `report`.
//!
//! Every command writes into an output directory. All files except
//! `timing.txt` are functions of the configuration alone, so reruns with
//! the same settings reproduce them byte for byte.

pub mod config;
pub mod csvio;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::dists::RngStream;
use crate::error::{Result, SvError};
use crate::metrics::{render_text, summarize_path, vol_errors, ModelKind, ParamKind, SummaryKind, VolMetric};
use crate::replicate::{fit_model, run_replications};
use crate::simgen::generate;
use config::{RunConfig, Settings};
use csvio::*;

#[derive(Debug, Parser)]
#[command(name = "semisv", version, about = "Stochastic volatility estimation with Gaussian and kernel-density (NSVM-3) samplers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Master seed; every random draw of the run derives from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override any configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    /// Total MCMC sweeps per chain, burn-in included.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Sweeps discarded from the start of each chain.
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one return series with known volatility.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit one model to a price file (date,close) or a return file (y).
    Fit {
        /// Price or return CSV.
        #[arg(long, short)]
        input: Option<PathBuf>,
        /// gaussian or nsvm3.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Paired Gaussian / NSVM-3 fits over many simulated series.
    Replicate {
        /// Number of simulated series.
        #[arg(long, short)]
        replications: Option<usize>,
        /// Worker threads (1 runs sequentially). Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Render a stored replication report as text and plot data.
    Report {
        /// Directory written by `replicate`.
        #[arg(long, short)]
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

/// Process exit status for a failure.
pub fn exit_code(e: &SvError) -> i32 {
    match e {
        SvError::Config(_) | SvError::InvalidInput(_) => 1,
        SvError::Io(_) | SvError::Ingest { .. } => 2,
        SvError::DegenerateSample(_)
        | SvError::DegenerateProposal(_)
        | SvError::DegeneratePosterior(_)
        | SvError::StuckSampler(_)
        | SvError::InvalidPilot(_) => 3,
    }
}

fn settings(common: &Common, extra: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut s = match &common.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    s.apply_overrides(common.set.iter().map(String::as_str))?;
    let mut flags: Vec<(&str, Option<String>)> = vec![
        ("output_dir", common.out.as_ref().map(|p| p.display().to_string())),
        ("seed", common.seed.map(|v| v.to_string())),
    ];
    flags.extend(extra.iter().cloned());
    for (k, v) in flags {
        if let Some(v) = v {
            s.set(k, &v)?;
        }
    }
    RunConfig::from_settings(&s)
}

fn chain_flags(c: &ChainArgs) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("total_iterations", c.iterations.map(|v| v.to_string())),
        ("burn_in", c.burn_in.map(|v| v.to_string())),
    ]
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| SvError::Io(format!("{}: {e}", p.display())))
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| SvError::Io(format!("{}: {e}", dir.display())))
}

fn run_header(command: &str, cfg: &RunConfig) -> String {
    format!("# semisv {command}\n{}", cfg.echo())
}

fn write_timing(dir: &Path, start: Instant) -> Result<()> {
    write(dir, "timing.txt", &format!("wall_seconds = {:.3}\n", start.elapsed().as_secs_f64()))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    prepare(&cfg.output_dir)?;
    let sim = generate(&mut RngStream::new(cfg.seed), &cfg.dgp)?;
    write(&cfg.output_dir, "sim.csv", &sim_csv(&sim))?;
    let meta = format!(
        "{}# y0 = {}\n# h0 = {}\n",
        run_header("simulate", cfg),
        fmt_num(sim.y0),
        fmt_num(sim.h0)
    );
    write(&cfg.output_dir, "run.txt", &meta)?;
    write_timing(&cfg.output_dir, start)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| SvError::Config("fit needs an input file".into()))?;
    let series = read_series(input)?;
    prepare(&cfg.output_dir)?;
    let fit = fit_model(&series.y, cfg.model, &cfg.fit)?;
    let path = summarize_path(&fit.chain)?;
    let dir = &cfg.output_dir;
    write(dir, "draws.csv", &draws_csv(&fit.chain, cfg.fit.main.burn_in))?;
    write(dir, "volatility.csv", &volatility_csv(&path))?;
    if let Some(h) = &series.h_true {
        let mut text = String::from("summary,srmse,mae,mape\n");
        for &s in SummaryKind::ALL {
            let e = vol_errors(h, path.get(s))?;
            text.push_str(&format!("{s},{},{},{}\n", fmt_num(e.srmse), fmt_num(e.mae), fmt_num(e.mape)));
        }
        write(dir, "errors.csv", &text)?;
    }
    let mut meta = run_header("fit", cfg);
    meta.push_str(&format!("# observations = {}\n", series.y.len()));
    if let Some(m) = &fit.semipar {
        let (bx, by) = m.kde.bandwidths();
        meta.push_str(&format!("# kde_bandwidths = {}, {}\n", fmt_num(bx), fmt_num(by)));
    }
    write(dir, "run.txt", &meta)?;
    write_timing(dir, start)
}

pub fn cmd_replicate(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    prepare(&cfg.output_dir)?;
    let run = run_replications(&cfg.replicate_config())?;
    let dir = &cfg.output_dir;
    write(dir, "report.csv", &report_csv(&run.report))?;
    write(dir, "replications.csv", &replications_csv(&run.report))?;
    write(dir, "truth.csv", &truth_csv(&run.report.truth))?;
    write(dir, "report.txt", &render_text(&run.report))?;
    let first = &run.replications[0];
    let paths = vol_paths_csv(
        first.sim.h_true.h(),
        &[(ModelKind::Gaussian, &first.gaussian_h), (ModelKind::Nsvm3, &first.nsvm3_h)],
    );
    write(dir, "vol_paths.csv", &paths)?;
    write(dir, "run.txt", &run_header("replicate", cfg))?;
    write_timing(dir, start)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<String> {
    let input = cfg
        .input
        .as_deref()
        .ok_or_else(|| SvError::Config("report needs the replicate output directory as input".into()))?;
    let report = read_report(input)?;
    prepare(&cfg.output_dir)?;
    let dir = &cfg.output_dir;
    let text = render_text(&report);
    write(dir, "report.txt", &text)?;
    for &p in ParamKind::ALL {
        write(dir, &format!("plot_{p}.csv"), &estimate_plot_csv(&report, p, SummaryKind::Mean))?;
    }
    for &m in VolMetric::ALL {
        write(dir, &format!("plot_vol_{m}.csv"), &vol_error_plot_csv(&report, m, SummaryKind::Mean))?;
    }
    Ok(text)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => cmd_simulate(&settings(&common, &[])?),
        Command::Fit {
            input,
            model,
            chain,
            common,
        } => {
            let mut extra = chain_flags(&chain);
            extra.push(("input", input.map(|p| p.display().to_string())));
            extra.push(("model", model));
            cmd_fit(&settings(&common, &extra)?)
        }
        Command::Replicate {
            replications,
            threads,
            chain,
            common,
        } => {
            let mut extra = chain_flags(&chain);
            extra.push(("replications", replications.map(|v| v.to_string())));
            extra.push(("threads", threads.map(|v| v.to_string())));
            cmd_replicate(&settings(&common, &extra)?)
        }
        Command::Report { input, common } => {
            let extra = [("input", input.map(|p| p.display().to_string()))];
            let text = cmd_report(&settings(&common, &extra)?)?;
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Diagnostics go to stderr, one line per failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("semisv: {e}");
            exit_code(&e)
        }
    }
}
