//! Flat `key = value` run configuration. Values come from an optional file
//! and are then overridden by command-line settings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Result, SvError};
use crate::metrics::ModelKind;
use crate::model::{McmcConfig, PriorSpec};
use crate::replicate::{FitSettings, ReplicateConfig};
use crate::semipar::{Nsvm3Options, ParamTargetMode, VolResidualScale, VolTargetForm};
use crate::simgen::{DgpSpec, ErrorFamily};

/// Every recognised key, in the order they are echoed.
pub const KEYS: &[&str] = &[
    "input",
    "output_dir",
    "model",
    "seed",
    "total_iterations",
    "burn_in",
    "pilot_total_iterations",
    "pilot_burn_in",
    "c_star",
    "replications",
    "threads",
    "alpha",
    "delta",
    "sigma_nu",
    "rho",
    "n",
    "error_family",
    "df",
    "ln_h0_mean",
    "ln_h0_sd",
    "delta0",
    "sigma_delta2",
    "alpha0",
    "sigma_alpha2",
    "nu0",
    "s0",
    "param_target",
    "vol_target",
    "vol_scale",
    "warm_start",
];

fn config_err(msg: impl Into<String>) -> SvError {
    SvError::Config(msg.into())
}

/// Raw settings before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", i + 1)))?;
            s.set(k.trim(), v.trim())
                .map_err(|e| config_err(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SvError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_err(format!("{}: {}", path.display(), strip(e))))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(config_err(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies `key=value` overrides on top of the current values.
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for p in pairs {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| config_err(format!("expected key=value, got '{p}'")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| config_err(format!("bad value '{v}' for {key}"))),
        }
    }

    fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.values
            .get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| config_err(format!("bad value '{v}' for {key}")))
            })
            .transpose()
    }
}

fn strip(e: SvError) -> String {
    match e {
        SvError::Config(m) => m,
        other => other.to_string(),
    }
}

/// Interpreted configuration shared by all commands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub model: ModelKind,
    pub seed: u64,
    pub dgp: DgpSpec,
    pub fit: FitSettings,
    pub replications: usize,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let seed: u64 = s.get("seed", 1)?;
        let main = McmcConfig {
            total_iterations: s.get("total_iterations", 10_000)?,
            burn_in: s.get("burn_in", 5_000)?,
            c_star: s.get("c_star", 1.2)?,
            seed,
        };
        let pilot = McmcConfig {
            total_iterations: s.get("pilot_total_iterations", main.total_iterations)?,
            burn_in: s.get("pilot_burn_in", main.burn_in)?,
            ..main
        };
        let d = DgpSpec::default();
        let error_family = match s.get_str("error_family").unwrap_or("gaussian") {
            "gaussian" => ErrorFamily::Gaussian,
            "student_t" => ErrorFamily::StudentT { df: s.get("df", 10.0)? },
            other => return Err(config_err(format!("bad value '{other}' for error_family"))),
        };
        let dgp = DgpSpec {
            alpha: s.get("alpha", d.alpha)?,
            delta: s.get("delta", d.delta)?,
            sigma_nu: s.get("sigma_nu", d.sigma_nu)?,
            rho: s.get("rho", d.rho)?,
            n: s.get("n", d.n)?,
            error_family,
            ln_h0_mean: s.get("ln_h0_mean", d.ln_h0_mean)?,
            ln_h0_sd: s.get("ln_h0_sd", d.ln_h0_sd)?,
        };
        let p = PriorSpec::default();
        let prior = PriorSpec {
            delta0: s.get("delta0", p.delta0)?,
            sigma_delta2: s.get("sigma_delta2", p.sigma_delta2)?,
            alpha0: s.get("alpha0", p.alpha0)?,
            sigma_alpha2: s.get("sigma_alpha2", p.sigma_alpha2)?,
            nu0: s.get("nu0", p.nu0)?,
            s0: s.get("s0", p.s0)?,
        };
        let param_target = match s.get_str("param_target").unwrap_or("semiparametric") {
            "semiparametric" => ParamTargetMode::Semiparametric,
            "parametric" => ParamTargetMode::Parametric,
            other => return Err(config_err(format!("bad value '{other}' for param_target"))),
        };
        let vol_target = match s.get_str("vol_target").unwrap_or("paired") {
            "two_sided" => VolTargetForm::TwoSided,
            "paired" => VolTargetForm::Paired,
            other => return Err(config_err(format!("bad value '{other}' for vol_target"))),
        };
        let vol_scale = match s.get_str("vol_scale").unwrap_or("conditional") {
            "conditional" => VolResidualScale::Conditional,
            "sigma_nu" => VolResidualScale::SigmaNu,
            other => return Err(config_err(format!("bad value '{other}' for vol_scale"))),
        };
        let model = s
            .get_str("model")
            .unwrap_or("gaussian")
            .parse::<ModelKind>()
            .map_err(|e| config_err(strip(e)))?;
        let threads: Option<usize> = s.get_opt("threads")?;
        if threads == Some(0) {
            return Err(config_err("threads must be at least 1"));
        }
        let cfg = RunConfig {
            input: s.get_str("input").map(PathBuf::from),
            output_dir: PathBuf::from(s.get_str("output_dir").unwrap_or("out")),
            model,
            seed,
            dgp,
            fit: FitSettings {
                prior,
                main,
                pilot,
                nsvm3: Nsvm3Options {
                    param_target,
                    vol_target,
                    vol_scale,
                    warm_start: s.get("warm_start", true)?,
                },
            },
            replications: s.get("replications", 100)?,
            threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| config_err(e.to_string()));
        wrap(self.dgp.validate())?;
        wrap(self.fit.prior.validate())?;
        wrap(self.fit.main.validate())?;
        wrap(self.fit.pilot.validate())?;
        if self.replications == 0 {
            return Err(config_err("replications must be at least 1"));
        }
        Ok(())
    }

    pub fn replicate_config(&self) -> ReplicateConfig {
        ReplicateConfig {
            dgp: self.dgp,
            fit: self.fit,
            replications: self.replications,
            seed: self.seed,
            threads: self.threads,
        }
    }

    /// The resolved configuration in config-file syntax. Paths and the
    /// thread count are left out so the echo depends only on what shapes
    /// the results.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let (family, df) = match self.dgp.error_family {
            ErrorFamily::Gaussian => ("gaussian", None),
            ErrorFamily::StudentT { df } => ("student_t", Some(df)),
        };
        let p = &self.fit.prior;
        let o = &self.fit.nsvm3;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("model", self.model.to_string());
        kv("seed", self.seed.to_string());
        kv("total_iterations", self.fit.main.total_iterations.to_string());
        kv("burn_in", self.fit.main.burn_in.to_string());
        kv("pilot_total_iterations", self.fit.pilot.total_iterations.to_string());
        kv("pilot_burn_in", self.fit.pilot.burn_in.to_string());
        kv("c_star", self.fit.main.c_star.to_string());
        kv("replications", self.replications.to_string());
        kv("alpha", self.dgp.alpha.to_string());
        kv("delta", self.dgp.delta.to_string());
        kv("sigma_nu", self.dgp.sigma_nu.to_string());
        kv("rho", self.dgp.rho.to_string());
        kv("n", self.dgp.n.to_string());
        kv("error_family", family.to_string());
        if let Some(df) = df {
            kv("df", df.to_string());
        }
        kv("ln_h0_mean", self.dgp.ln_h0_mean.to_string());
        kv("ln_h0_sd", self.dgp.ln_h0_sd.to_string());
        kv("delta0", p.delta0.to_string());
        kv("sigma_delta2", p.sigma_delta2.to_string());
        kv("alpha0", p.alpha0.to_string());
        kv("sigma_alpha2", p.sigma_alpha2.to_string());
        kv("nu0", p.nu0.to_string());
        kv("s0", p.s0.to_string());
        let pt = match o.param_target {
            ParamTargetMode::Semiparametric => "semiparametric",
            ParamTargetMode::Parametric => "parametric",
        };
        kv("param_target", pt.to_string());
        let vt = match o.vol_target {
            VolTargetForm::TwoSided => "two_sided",
            VolTargetForm::Paired => "paired",
        };
        kv("vol_target", vt.to_string());
        let vs = match o.vol_scale {
            VolResidualScale::Conditional => "conditional",
            VolResidualScale::SigmaNu => "sigma_nu",
        };
        kv("vol_scale", vs.to_string());
        kv("warm_start", o.warm_start.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::from_settings(&Settings::default()).unwrap();
        assert_eq!(c.fit.main.total_iterations, 10_000);
        assert_eq!(c.fit.main.burn_in, 5_000);
        assert_eq!(c.fit.main.c_star, 1.2);
        assert_eq!(c.replications, 100);
        assert_eq!(c.dgp, DgpSpec::default());
        assert_eq!(c.fit.prior, PriorSpec::default());
        assert_eq!(c.fit.pilot, c.fit.main);
    }

    #[test]
    fn file_then_overrides() {
        let mut s = Settings::parse("# study\nseed = 7\nerror_family = student_t\ndf = 5 # heavy\nreplications=3\n").unwrap();
        s.apply_overrides(["seed=9", "burn_in = 10", "total_iterations=20"]).unwrap();
        let c = RunConfig::from_settings(&s).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.fit.main.seed, 9);
        assert_eq!(c.dgp.error_family, ErrorFamily::StudentT { df: 5.0 });
        assert_eq!(c.replications, 3);
        assert_eq!((c.fit.pilot.total_iterations, c.fit.pilot.burn_in), (20, 10));
    }

    #[test]
    fn echo_parses_back_to_the_same_config() {
        let mut s = Settings::default();
        s.apply_overrides(["model=nsvm3", "error_family=student_t", "df=7", "rho=-0.3", "vol_scale=sigma_nu", "vol_target=paired"])
            .unwrap();
        let c = RunConfig::from_settings(&s).unwrap();
        let back = RunConfig::from_settings(&Settings::parse(&c.echo()).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_problem() {
        let e = Settings::parse("seed = 1\nbogus = 2\n").unwrap_err();
        assert_eq!(e, SvError::Config("line 2: unknown key 'bogus'".into()));
        let e = Settings::parse("seed 1\n").unwrap_err();
        assert!(matches!(e, SvError::Config(m) if m.starts_with("line 1")));
        let mut s = Settings::default();
        s.set("seed", "x").unwrap();
        assert!(matches!(RunConfig::from_settings(&s), Err(SvError::Config(_))));
        let mut s = Settings::default();
        s.set("burn_in", "20000").unwrap();
        assert!(matches!(RunConfig::from_settings(&s), Err(SvError::Config(_))));
    }
}
