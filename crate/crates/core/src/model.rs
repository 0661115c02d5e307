//! Domain types shared by the samplers, the simulator and the reports.

use crate::error::{invalid, Result};

/// Observed returns `y_1..y_N` on the log-return scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    values: Vec<f64>,
}

impl ReturnSeries {
    /// Smallest usable series: the interior volatility update needs both
    /// neighbours for at least one index.
    pub const MIN_LEN: usize = 3;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < Self::MIN_LEN {
            return Err(invalid(format!(
                "return series needs at least {} values, got {}",
                Self::MIN_LEN,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("return {} is not finite", i + 1)));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        sample_variance(&self.values)
    }
}

/// `(alpha, delta, sigma_nu2)` of the log-volatility recursion
/// `ln h_t = alpha + delta ln h_{t-1} + sigma_nu nu_t`.
///
/// `|delta| < 1` is deliberately not enforced: the conditional posterior of
/// `delta` is a full-support normal and chains legitimately visit values at
/// or above one when the true persistence is close to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub alpha: f64,
    pub delta: f64,
    pub sigma_nu2: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, delta: f64, sigma_nu2: f64) -> Result<Self> {
        let p = Self {
            alpha,
            delta,
            sigma_nu2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.delta.is_finite() && self.sigma_nu2.is_finite()) {
            return Err(invalid("model parameters must be finite"));
        }
        if self.sigma_nu2 <= 0.0 {
            return Err(invalid("sigma_nu2 must be positive"));
        }
        Ok(())
    }

    pub fn sigma_nu(&self) -> f64 {
        self.sigma_nu2.sqrt()
    }
}

/// Hyperparameters of the priors `delta ~ N(delta0, sigma_delta2)`,
/// `alpha ~ N(alpha0, sigma_alpha2)` and `sigma_nu2 ~ IG(nu0/2, s0/2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub delta0: f64,
    pub sigma_delta2: f64,
    pub alpha0: f64,
    pub sigma_alpha2: f64,
    pub nu0: f64,
    pub s0: f64,
}

impl Default for PriorSpec {
    /// Weakly informative defaults.
    fn default() -> Self {
        Self {
            delta0: 0.9,
            sigma_delta2: 10.0,
            alpha0: 0.0,
            sigma_alpha2: 10.0,
            nu0: 2.0,
            s0: 0.05,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.delta0,
            self.sigma_delta2,
            self.alpha0,
            self.sigma_alpha2,
            self.nu0,
            self.s0,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(invalid("prior hyperparameters must be finite"));
        }
        if self.sigma_delta2 <= 0.0 || self.sigma_alpha2 <= 0.0 || self.nu0 <= 0.0 || self.s0 <= 0.0
        {
            return Err(invalid(
                "prior variances, nu0 and s0 must be strictly positive",
            ));
        }
        Ok(())
    }
}

/// A latent volatility trajectory with its cached logarithm.
///
/// The two vectors are kept in lockstep by the setters; the chain owning the
/// path is the only writer.
#[derive(Debug, Clone, PartialEq)]
pub struct VolPath {
    h: Vec<f64>,
    ln_h: Vec<f64>,
}

impl VolPath {
    pub fn from_h(h: Vec<f64>) -> Result<Self> {
        if let Some(i) = h.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid(format!("volatility {} is not positive", i + 1)));
        }
        let ln_h = h.iter().map(|v| v.ln()).collect();
        Ok(Self { h, ln_h })
    }

    pub fn from_ln_h(ln_h: Vec<f64>) -> Result<Self> {
        if ln_h.iter().any(|v| !v.is_finite()) {
            return Err(invalid("log volatility must be finite"));
        }
        let h = ln_h.iter().map(|v| v.exp()).collect::<Vec<_>>();
        if h.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(invalid("log volatility out of representable range"));
        }
        Ok(Self { h, ln_h })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        Self::from_h(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn ln_h(&self) -> &[f64] {
        &self.ln_h
    }

    pub fn set_h(&mut self, t: usize, h: f64) {
        debug_assert!(h > 0.0);
        self.h[t] = h;
        self.ln_h[t] = h.ln();
    }

    pub fn set_ln_h(&mut self, t: usize, ln_h: f64) {
        self.ln_h[t] = ln_h;
        self.h[t] = ln_h.exp();
    }

    /// True when every cached log agrees with `ln(h)` to one ulp.
    pub fn is_consistent(&self) -> bool {
        self.h.iter().zip(&self.ln_h).all(|(h, l)| {
            let exact = h.ln();
            (exact - l).abs() <= f64::EPSILON * exact.abs().max(1.0)
        })
    }
}

/// Length and tuning of one MCMC run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    /// Sweeps including burn-in.
    pub total_iterations: usize,
    pub burn_in: usize,
    /// Envelope inflation, must exceed one.
    pub c_star: f64,
    pub seed: u64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            total_iterations: 10_000,
            burn_in: 5_000,
            c_star: 1.2,
            seed: 1,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iterations == 0 {
            return Err(invalid("total_iterations must be positive"));
        }
        if self.burn_in >= self.total_iterations {
            return Err(invalid("burn_in must be smaller than total_iterations"));
        }
        if !(self.c_star > 1.0 && self.c_star.is_finite()) {
            return Err(invalid("c_star must exceed 1"));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        self.total_iterations - self.burn_in
    }
}

/// Post burn-in draws of one chain. `h_draws` is row-major, one row per
/// retained sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub alpha_draws: Vec<f64>,
    pub delta_draws: Vec<f64>,
    pub sigma_nu2_draws: Vec<f64>,
    h_draws: Vec<f64>,
    n: usize,
}

impl ChainOutput {
    pub(crate) fn with_capacity(rows: usize, n: usize) -> Self {
        Self {
            alpha_draws: Vec::with_capacity(rows),
            delta_draws: Vec::with_capacity(rows),
            sigma_nu2_draws: Vec::with_capacity(rows),
            h_draws: Vec::with_capacity(rows * n),
            n,
        }
    }

    /// Assembles a chain from explicit draws; `h_rows` holds one path per
    /// retained draw.
    pub fn from_parts(
        alpha_draws: Vec<f64>,
        delta_draws: Vec<f64>,
        sigma_nu2_draws: Vec<f64>,
        h_rows: &[Vec<f64>],
    ) -> Result<Self> {
        let rows = alpha_draws.len();
        if delta_draws.len() != rows || sigma_nu2_draws.len() != rows || h_rows.len() != rows {
            return Err(invalid("draw vectors differ in length"));
        }
        let n = h_rows.first().map_or(0, Vec::len);
        if h_rows.iter().any(|r| r.len() != n) {
            return Err(invalid("volatility rows differ in length"));
        }
        if h_rows.iter().flatten().any(|h| !(*h > 0.0)) {
            return Err(invalid("volatility draws must be positive"));
        }
        if sigma_nu2_draws.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("sigma_nu2 draws must be positive"));
        }
        Ok(Self {
            alpha_draws,
            delta_draws,
            sigma_nu2_draws,
            h_draws: h_rows.concat(),
            n,
        })
    }

    pub(crate) fn push(&mut self, params: &ModelParams, path: &VolPath) {
        debug_assert_eq!(path.len(), self.n);
        self.alpha_draws.push(params.alpha);
        self.delta_draws.push(params.delta);
        self.sigma_nu2_draws.push(params.sigma_nu2);
        self.h_draws.extend_from_slice(path.h());
    }

    /// Number of retained draws.
    pub fn rows(&self) -> usize {
        self.alpha_draws.len()
    }

    /// Length of the volatility path.
    pub fn series_len(&self) -> usize {
        self.n
    }

    pub fn h_row(&self, draw: usize) -> &[f64] {
        &self.h_draws[draw * self.n..(draw + 1) * self.n]
    }

    /// All retained draws of `h_t` (zero-based `t`).
    pub fn h_column(&self, t: usize) -> Vec<f64> {
        self.h_draws.iter().skip(t).step_by(self.n).copied().collect()
    }

    pub fn sigma_nu_draws(&self) -> Vec<f64> {
        self.sigma_nu2_draws.iter().map(|v| v.sqrt()).collect()
    }

    /// Posterior mean of each `h_t`.
    pub fn mean_h(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.n];
        for row in self.h_draws.chunks_exact(self.n) {
            for (a, h) in acc.iter_mut().zip(row) {
                *a += h;
            }
        }
        let r = self.rows() as f64;
        acc.iter_mut().for_each(|a| *a /= r);
        acc
    }

    /// Posterior means as a parameter triple.
    pub fn mean_params(&self) -> ModelParams {
        ModelParams {
            alpha: mean(&self.alpha_draws),
            delta: mean(&self.delta_draws),
            sigma_nu2: mean(&self.sigma_nu2_draws),
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// `(s1, s2, s3)`: sum of `ln h`, sum of squares, and lag-one cross product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuffStats {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

pub fn suff_stats(ln_h: &[f64]) -> Result<SuffStats> {
    if ln_h.len() < 2 {
        return Err(invalid("sufficient statistics need at least two values"));
    }
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &l in ln_h {
        s1 += l;
        s2 += l * l;
    }
    let s3 = ln_h.windows(2).map(|w| w[0] * w[1]).sum();
    Ok(SuffStats { s1, s2, s3 })
}

/// Scale of the conditional posterior of `sigma_nu2`:
/// `s0` plus the AR(1) residual sum of squares, expanded in the sufficient
/// statistics.
pub fn s_quadratic(params: &ModelParams, prior: &PriorSpec, ln_h: &[f64], stats: &SuffStats) -> f64 {
    let n = ln_h.len() as f64;
    let (a, d) = (params.alpha, params.delta);
    let first = ln_h[0];
    let last = ln_h[ln_h.len() - 1];
    prior.s0 + (n - 1.0) * a * a + (1.0 + d * d) * stats.s2
        - d * d * last * last
        - first * first
        - 2.0 * a * ((1.0 - d) * stats.s1 - first + d * last)
        - 2.0 * d * stats.s3
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rss(alpha: f64, delta: f64, ln_h: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in 1..ln_h.len() {
            let e = ln_h[t] - alpha - delta * ln_h[t - 1];
            acc += e * e;
        }
        acc
    }

    #[test]
    fn suff_stats_small_cases() {
        let z = suff_stats(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((z.s1, z.s2, z.s3), (0.0, 0.0, 0.0));
        let s = suff_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.s1, s.s2, s.s3), (6.0, 14.0, 8.0));
        assert!(suff_stats(&[1.0]).is_err());
    }

    #[test]
    fn suff_stats_matches_naive_loop() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = suff_stats(&xs).unwrap();
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in 0..xs.len() {
            a += xs[i];
            b += xs[i].powi(2);
            if i > 0 {
                c += xs[i] * xs[i - 1];
            }
        }
        assert!((s.s1 - a).abs() <= 1e-12 * a.abs().max(1.0));
        assert!((s.s2 - b).abs() <= 1e-12 * b.abs());
        assert!((s.s3 - c).abs() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn s_quadratic_examples() {
        let prior = PriorSpec {
            s0: 1.0,
            ..PriorSpec::default()
        };
        let p = ModelParams::new(0.0, 0.0, 1.0).unwrap();
        let ln_h = [1.0, 1.0, 1.0];
        let s = s_quadratic(&p, &prior, &ln_h, &suff_stats(&ln_h).unwrap());
        assert!((s - 3.0).abs() < 1e-14);

        // s0 = 0 is outside the prior contract but exercises the algebra.
        let prior0 = PriorSpec { s0: 0.0, ..prior };
        let p1 = ModelParams::new(0.0, 1.0, 1.0).unwrap();
        for c in [-7.3, 0.0, 2.5] {
            let ln_h = [c, c, c];
            let s = s_quadratic(&p1, &prior0, &ln_h, &suff_stats(&ln_h).unwrap());
            assert!(s.abs() < 1e-12, "c = {c}: {s}");
        }
    }

    proptest! {
        #[test]
        fn s_quadratic_is_s0_plus_residual_sum(
            alpha in -2.0f64..2.0,
            delta in -1.5f64..1.5,
            s0 in 0.001f64..5.0,
            ln_h in prop::collection::vec(-12.0f64..3.0, 2..60),
        ) {
            let prior = PriorSpec { s0, ..PriorSpec::default() };
            let p = ModelParams { alpha, delta, sigma_nu2: 1.0 };
            let s = s_quadratic(&p, &prior, &ln_h, &suff_stats(&ln_h).unwrap());
            let oracle = s0 + rss(alpha, delta, &ln_h);
            // expanded form cancels large terms; scale tolerance by their size
            let scale = oracle.abs().max(suff_stats(&ln_h).unwrap().s2 * (1.0 + delta * delta));
            prop_assert!((s - oracle).abs() <= 1e-10 * scale, "{s} vs {oracle}");
        }

        #[test]
        fn s1_s2_permutation_invariant(mut ln_h in prop::collection::vec(-5.0f64..5.0, 2..40)) {
            let a = suff_stats(&ln_h).unwrap();
            ln_h.reverse();
            ln_h.rotate_left(1);
            let b = suff_stats(&ln_h).unwrap();
            prop_assert!((a.s1 - b.s1).abs() < 1e-9);
            prop_assert!((a.s2 - b.s2).abs() < 1e-9);
        }
    }

    #[test]
    fn s_quadratic_random_n50() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        let ln_h: Vec<f64> = (0..50).map(|_| rng.random_range(-9.0..-4.0)).collect();
        let p = ModelParams::new(-0.1, 0.985, 0.02).unwrap();
        let prior = PriorSpec::default();
        let s = s_quadratic(&p, &prior, &ln_h, &suff_stats(&ln_h).unwrap());
        let oracle = prior.s0 + rss(p.alpha, p.delta, &ln_h);
        assert!((s - oracle).abs() <= 1e-10 * oracle, "{s} vs {oracle}");
    }

    #[test]
    fn validation() {
        assert!(ReturnSeries::new(vec![0.1, 0.2]).is_err());
        assert!(ReturnSeries::new(vec![0.1, f64::NAN, 0.2]).is_err());
        assert!(ModelParams::new(0.0, 0.5, 0.0).is_err());
        assert!(PriorSpec { s0: 0.0, ..PriorSpec::default() }.validate().is_err());
        let bad = McmcConfig { burn_in: 10, total_iterations: 10, ..McmcConfig::default() };
        assert!(bad.validate().is_err());
        assert!(VolPath::from_h(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn vol_path_setters_keep_logs_in_sync() {
        let mut p = VolPath::constant(4, 0.5).unwrap();
        p.set_h(1, 3.0);
        p.set_ln_h(2, -1.25);
        assert!(p.is_consistent());
        assert_eq!(p.ln_h()[1], 3.0f64.ln());
        assert_eq!(p.h()[2], (-1.25f64).exp());
    }
}
