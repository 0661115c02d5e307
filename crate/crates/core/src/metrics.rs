//! Posterior summaries, accuracy metrics and the cross-replication report.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{invalid, Result, SvError};
use crate::kde::kde1d_mode;
use crate::model::ChainOutput;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Gaussian,
    Nsvm3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SummaryKind {
    Mean,
    Median,
    Mode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKind {
    Alpha,
    Delta,
    SigmaNu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VolMetric {
    Srmse,
    Mae,
    Mape,
}

/// One cell family of the report: a parameter's srMSE or a volatility
/// error averaged over replications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    ParamSrmse(ParamKind),
    Vol(VolMetric),
}

macro_rules! named_enum {
    ($ty:ty, $what:literal, [$($variant:expr => $name:literal),+ $(,)?]) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(v if v == $variant => $name,)+
                    _ => unreachable!(),
                }
            }
        }

        impl FromStr for $ty {
            type Err = SvError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(invalid(format!(concat!("unknown ", $what, " '{}'"), s))),
                }
            }
        }

        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(ModelKind, "model", [ModelKind::Gaussian => "gaussian", ModelKind::Nsvm3 => "nsvm3"]);
named_enum!(SummaryKind, "summary", [
    SummaryKind::Mean => "mean",
    SummaryKind::Median => "median",
    SummaryKind::Mode => "mode",
]);
named_enum!(ParamKind, "parameter", [
    ParamKind::Alpha => "alpha",
    ParamKind::Delta => "delta",
    ParamKind::SigmaNu => "sigma_nu",
]);
named_enum!(VolMetric, "volatility metric", [
    VolMetric::Srmse => "srmse",
    VolMetric::Mae => "mae",
    VolMetric::Mape => "mape",
]);
named_enum!(Metric, "metric", [
    Metric::ParamSrmse(ParamKind::Alpha) => "alpha_srmse",
    Metric::ParamSrmse(ParamKind::Delta) => "delta_srmse",
    Metric::ParamSrmse(ParamKind::SigmaNu) => "sigma_nu_srmse",
    Metric::Vol(VolMetric::Srmse) => "vol_srmse",
    Metric::Vol(VolMetric::Mae) => "vol_mae",
    Metric::Vol(VolMetric::Mape) => "vol_mape",
]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub mode: f64,
}

impl Summary {
    pub fn get(&self, kind: SummaryKind) -> f64 {
        match kind {
            SummaryKind::Mean => self.mean,
            SummaryKind::Median => self.median,
            SummaryKind::Mode => self.mode,
        }
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Mean, median (midpoint for even counts) and KDE mode of a set of draws.
pub fn summarize(draws: &[f64]) -> Result<Summary> {
    if draws.is_empty() {
        return Err(invalid("cannot summarize an empty sample"));
    }
    if draws.iter().any(|x| !x.is_finite()) {
        return Err(invalid("draws must be finite"));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    // a constant sample has no bandwidth; its mode is the value itself
    let mode = if sorted[0] == sorted[sorted.len() - 1] {
        sorted[0]
    } else {
        kde1d_mode(&sorted)?
    };
    Ok(Summary {
        mean,
        median: median_sorted(&sorted),
        mode,
    })
}

/// Root mean squared deviation of replicated estimates from the truth.
pub fn param_srmse(estimates: &[f64], truth: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(invalid("srMSE needs at least one estimate"));
    }
    let ss: f64 = estimates.iter().map(|e| (e - truth) * (e - truth)).sum();
    Ok((ss / estimates.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolErrors {
    pub srmse: f64,
    pub mae: f64,
    /// Mean absolute percentage error as a fraction, not times 100.
    pub mape: f64,
}

impl VolErrors {
    pub fn get(&self, metric: VolMetric) -> f64 {
        match metric {
            VolMetric::Srmse => self.srmse,
            VolMetric::Mae => self.mae,
            VolMetric::Mape => self.mape,
        }
    }
}

pub fn vol_errors(h_true: &[f64], h_est: &[f64]) -> Result<VolErrors> {
    if h_true.len() != h_est.len() {
        return Err(invalid(format!(
            "volatility series differ in length: {} vs {}",
            h_true.len(),
            h_est.len()
        )));
    }
    if h_true.is_empty() {
        return Err(invalid("empty volatility series"));
    }
    if h_true.iter().any(|h| !(*h > 0.0)) {
        return Err(invalid("true volatilities must be positive"));
    }
    let n = h_true.len() as f64;
    let (mut sq, mut abs, mut rel) = (0.0, 0.0, 0.0);
    for (h, e) in h_true.iter().zip(h_est) {
        let d = (h - e).abs();
        sq += d * d;
        abs += d;
        rel += d / h;
    }
    Ok(VolErrors {
        srmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: rel / n,
    })
}

/// Per-time-point posterior summaries of a volatility path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub mode: Vec<f64>,
}

impl PathSummary {
    pub fn get(&self, kind: SummaryKind) -> &[f64] {
        match kind {
            SummaryKind::Mean => &self.mean,
            SummaryKind::Median => &self.median,
            SummaryKind::Mode => &self.mode,
        }
    }
}

pub fn summarize_path(chain: &ChainOutput) -> Result<PathSummary> {
    let n = chain.series_len();
    let mut out = PathSummary {
        mean: Vec::with_capacity(n),
        median: Vec::with_capacity(n),
        mode: Vec::with_capacity(n),
    };
    for t in 0..n {
        let s = summarize(&chain.h_column(t))?;
        out.mean.push(s.mean);
        out.median.push(s.median);
        out.mode.push(s.mode);
    }
    Ok(out)
}

/// Summaries of the three parameters; `sigma_nu` is summarized on the
/// square roots of the `sigma_nu2` draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSummaries {
    pub alpha: Summary,
    pub delta: Summary,
    pub sigma_nu: Summary,
}

impl ParamSummaries {
    pub fn from_chain(chain: &ChainOutput) -> Result<Self> {
        Ok(Self {
            alpha: summarize(&chain.alpha_draws)?,
            delta: summarize(&chain.delta_draws)?,
            sigma_nu: summarize(&chain.sigma_nu_draws())?,
        })
    }

    pub fn get(&self, p: ParamKind) -> &Summary {
        match p {
            ParamKind::Alpha => &self.alpha,
            ParamKind::Delta => &self.delta,
            ParamKind::SigmaNu => &self.sigma_nu,
        }
    }
}

/// True parameter values of a simulation study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub alpha: f64,
    pub delta: f64,
    pub sigma_nu: f64,
}

impl Truth {
    pub fn get(&self, p: ParamKind) -> f64 {
        match p {
            ParamKind::Alpha => self.alpha,
            ParamKind::Delta => self.delta,
            ParamKind::SigmaNu => self.sigma_nu,
        }
    }
}

/// One model's fit within one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub replication: usize,
    pub model: ModelKind,
    pub params: ParamSummaries,
    /// Volatility errors of the mean, median and mode paths, in that order.
    pub vol: [VolErrors; 3],
}

impl FitRecord {
    pub fn from_chain(
        replication: usize,
        model: ModelKind,
        chain: &ChainOutput,
        h_true: &[f64],
    ) -> Result<Self> {
        Self::from_summaries(replication, model, chain, &summarize_path(chain)?, h_true)
    }

    pub fn from_summaries(
        replication: usize,
        model: ModelKind,
        chain: &ChainOutput,
        path: &PathSummary,
        h_true: &[f64],
    ) -> Result<Self> {
        Ok(Self {
            replication,
            model,
            params: ParamSummaries::from_chain(chain)?,
            vol: [
                vol_errors(h_true, &path.mean)?,
                vol_errors(h_true, &path.median)?,
                vol_errors(h_true, &path.mode)?,
            ],
        })
    }

    pub fn vol_for(&self, s: SummaryKind) -> &VolErrors {
        &self.vol[s as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub model: ModelKind,
    pub summary: SummaryKind,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationReport {
    pub truth: Truth,
    /// Sorted by model, then replication.
    pub records: Vec<FitRecord>,
    /// Sorted by model, summary, metric.
    pub cells: Vec<Cell>,
}

impl ReplicationReport {
    pub fn models(&self) -> Vec<ModelKind> {
        let mut m: Vec<ModelKind> = self.records.iter().map(|r| r.model).collect();
        m.dedup();
        m
    }

    pub fn replications(&self) -> usize {
        let models = self.models().len().max(1);
        self.records.len() / models
    }

    pub fn cell(&self, model: ModelKind, summary: SummaryKind, metric: Metric) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.summary == summary && c.metric == metric)
            .map(|c| c.value)
    }
}

/// Parameter srMSE across replications and mean volatility errors for every
/// model, summary and metric. Records may arrive in any order.
pub fn aggregate(records: Vec<FitRecord>, truth: Truth) -> Result<ReplicationReport> {
    let mut records = records;
    records.sort_by_key(|r| (r.model, r.replication));
    if records.is_empty() {
        return Err(invalid("no replications to aggregate"));
    }
    let models: Vec<ModelKind> = {
        let mut m: Vec<ModelKind> = records.iter().map(|r| r.model).collect();
        m.dedup();
        m
    };
    let reps_of = |m: ModelKind| -> Vec<usize> {
        records.iter().filter(|r| r.model == m).map(|r| r.replication).collect()
    };
    let first = reps_of(models[0]);
    if first.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("duplicate replication index"));
    }
    for m in &models[1..] {
        if reps_of(*m) != first {
            return Err(invalid(format!("model {m} covers different replications")));
        }
    }

    let mut cells = Vec::new();
    for &model in &models {
        let mine: Vec<&FitRecord> = records.iter().filter(|r| r.model == model).collect();
        for &summary in SummaryKind::ALL {
            for &metric in Metric::ALL {
                let value = match metric {
                    Metric::ParamSrmse(p) => {
                        let est: Vec<f64> = mine.iter().map(|r| r.params.get(p).get(summary)).collect();
                        param_srmse(&est, truth.get(p))?
                    }
                    Metric::Vol(v) => {
                        mine.iter().map(|r| r.vol_for(summary).get(v)).sum::<f64>() / mine.len() as f64
                    }
                };
                cells.push(Cell {
                    model,
                    summary,
                    metric,
                    value,
                });
            }
        }
    }
    Ok(ReplicationReport {
        truth,
        records,
        cells,
    })
}

/// Human-readable tables of the aggregate cells.
pub fn render_text(report: &ReplicationReport) -> String {
    let mut out = String::new();
    let models = report.models();
    let _ = writeln!(
        out,
        "Parameter srMSE over {} replications (truth: alpha = {}, delta = {}, sigma_nu = {})",
        report.replications(),
        report.truth.alpha,
        report.truth.delta,
        report.truth.sigma_nu
    );
    let _ = writeln!(out, "{:<10} {:<8} {:>12} {:>12} {:>12}", "model", "summary", "alpha", "delta", "sigma_nu");
    for &m in &models {
        for &s in SummaryKind::ALL {
            let _ = write!(out, "{:<10} {:<8}", m.name(), s.name());
            for &p in ParamKind::ALL {
                let v = report.cell(m, s, Metric::ParamSrmse(p)).unwrap_or(f64::NAN);
                let _ = write!(out, " {v:>12.6}");
            }
            out.push('\n');
        }
    }
    out.push('\n');
    let _ = writeln!(out, "Volatility errors, averaged over replications");
    let _ = writeln!(out, "{:<10} {:<8} {:>12} {:>12} {:>12}", "model", "summary", "srmse", "mae", "mape");
    for &m in &models {
        for &s in SummaryKind::ALL {
            let _ = write!(out, "{:<10} {:<8}", m.name(), s.name());
            for &v in VolMetric::ALL {
                let x = report.cell(m, s, Metric::Vol(v)).unwrap_or(f64::NAN);
                let _ = write!(out, " {x:>12.6}");
            }
            out.push('\n');
        }
    }
    out
}
