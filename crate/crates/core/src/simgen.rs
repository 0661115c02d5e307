//! Simulated return series from the SV model with correlated errors.

use crate::dists::{draw_bivariate_normal, draw_bivariate_t, RngStream};
use crate::error::{invalid, Result};
use crate::model::{ReturnSeries, VolPath};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorFamily {
    Gaussian,
    StudentT { df: f64 },
}

/// Parameters of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub alpha: f64,
    pub delta: f64,
    pub sigma_nu: f64,
    pub rho: f64,
    pub n: usize,
    pub error_family: ErrorFamily,
    pub ln_h0_mean: f64,
    pub ln_h0_sd: f64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            alpha: -0.10,
            delta: 0.985,
            sigma_nu: 0.15,
            rho: -0.5,
            n: 500,
            error_family: ErrorFamily::Gaussian,
            ln_h0_mean: -10.0,
            ln_h0_sd: 0.87,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.delta.is_finite()) {
            return Err(invalid("alpha and delta must be finite"));
        }
        // zero is allowed and gives a deterministic recursion
        if !(self.sigma_nu >= 0.0 && self.sigma_nu.is_finite()) {
            return Err(invalid(format!("sigma_nu must be non-negative, got {}", self.sigma_nu)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(invalid(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if self.n < 3 {
            return Err(invalid(format!("n must be at least 3, got {}", self.n)));
        }
        if !(self.ln_h0_mean.is_finite() && self.ln_h0_sd > 0.0 && self.ln_h0_sd.is_finite()) {
            return Err(invalid("initial log-volatility needs a finite mean and positive sd"));
        }
        if let ErrorFamily::StudentT { df } = self.error_family {
            if !(df > 0.0 && df.is_finite()) {
                return Err(invalid(format!("degrees of freedom must be positive, got {df}")));
            }
        }
        Ok(())
    }
}

/// One simulated path. `y`, `h_true`, `u` and `v` cover indices `1..=n`;
/// the initial state is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub y: ReturnSeries,
    pub h_true: VolPath,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub y0: f64,
    pub h0: f64,
}

pub fn generate(rng: &mut RngStream, spec: &DgpSpec) -> Result<SimPath> {
    spec.validate()?;
    let ln_h0 = rng.normal(spec.ln_h0_mean, spec.ln_h0_sd);
    let h0 = ln_h0.exp();
    let y0 = h0.sqrt() * rng.std_normal();

    let mut u = Vec::with_capacity(spec.n);
    let mut v = Vec::with_capacity(spec.n);
    let mut ln_h = Vec::with_capacity(spec.n);
    let mut prev = ln_h0;
    for _ in 0..spec.n {
        let (ui, vi) = match spec.error_family {
            ErrorFamily::Gaussian => draw_bivariate_normal(rng, spec.rho)?,
            ErrorFamily::StudentT { df } => draw_bivariate_t(rng, df, spec.rho)?,
        };
        let l = spec.alpha + spec.delta * prev + spec.sigma_nu * vi;
        u.push(ui);
        v.push(vi);
        ln_h.push(l);
        prev = l;
    }
    let h_true = VolPath::from_ln_h(ln_h)?;
    let y = h_true.h().iter().zip(&u).map(|(h, ui)| h.sqrt() * ui).collect();
    Ok(SimPath {
        y: ReturnSeries::new(y)?,
        h_true,
        u,
        v,
        y0,
        h0,
    })
}
