//! Seedable random streams and the handful of densities and samplers the
//! estimators need.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Deterministic random stream. The same seed and call sequence always
/// reproduce the same draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream for replication `index`: the base seed xor the
    /// index, expanded by the generator's seeding function.
    pub fn for_replication(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.std_normal()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Inverse gamma with shape `lambda` and scale `phi`:
/// density `phi^lambda / Gamma(lambda) x^-(lambda+1) exp(-phi/x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvGammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl InvGammaParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()) {
            return Err(invalid(format!(
                "inverse gamma needs positive finite shape and scale, got ({shape}, {scale})"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn mode(&self) -> f64 {
        self.scale / (self.shape + 1.0)
    }
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(invalid("normal sd must be positive"));
    }
    Ok(normal_log_pdf_unchecked(x, mean, sd).exp())
}

pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> Result<f64> {
    if !(sd > 0.0) {
        return Err(invalid("normal sd must be positive"));
    }
    Ok(normal_log_pdf_unchecked(x, mean, sd))
}

#[inline]
pub(crate) fn normal_log_pdf_unchecked(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Log density; `-inf` off the support.
pub fn invgamma_log_pdf(x: f64, p: &InvGammaParams) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    p.shape * p.scale.ln() - ln_gamma(p.shape) - (p.shape + 1.0) * x.ln() - p.scale / x
}

/// Density; zero for `x <= 0`.
pub fn invgamma_pdf(x: f64, p: &InvGammaParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    invgamma_log_pdf(x, p).exp()
}

/// `phi / G` with `G ~ Gamma(lambda, 1)`.
pub fn draw_invgamma(rng: &mut RngStream, p: &InvGammaParams) -> f64 {
    // shape/scale are validated by InvGammaParams::new
    let g = Gamma::new(p.shape, 1.0).expect("validated gamma shape");
    p.scale / g.sample(rng)
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(invalid(format!("correlation must lie in (-1, 1), got {rho}")));
    }
    Ok(())
}

/// Standard normal pair with correlation `rho`.
pub fn draw_bivariate_normal(rng: &mut RngStream, rho: f64) -> Result<(f64, f64)> {
    check_rho(rho)?;
    let z1 = rng.std_normal();
    let z2 = rng.std_normal();
    Ok((z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2))
}

/// Bivariate Student-t with unit-diagonal scale matrix and off-diagonal
/// `rho`. Marginals are standard `t(df)`, so their variance is
/// `df / (df - 2)`; nothing is rescaled to unit variance.
pub fn draw_bivariate_t(rng: &mut RngStream, df: f64, rho: f64) -> Result<(f64, f64)> {
    if !(df > 0.0 && df.is_finite()) {
        return Err(invalid(format!("degrees of freedom must be positive, got {df}")));
    }
    let (z1, z2) = draw_bivariate_normal(rng, rho)?;
    let w: f64 = ChiSquared::new(df).expect("validated df").sample(rng);
    let k = (w / df).sqrt();
    Ok((z1 / k, z2 / k))
}
