//! Gaussian product-kernel density estimation.
//!
//! Bandwidths come from the normal-reference rule
//! `1.06 * min(sd, IQR / 1.34) * n^(-1/5)` and are used directly as the
//! kernel standard deviations. Quartiles use linear interpolation between
//! order statistics at position `1 + (n - 1) p` ("type 7").
//!
//! Evaluation is the exact `O(n)` kernel sum; no grid.

use std::f64::consts::PI;

use crate::error::{invalid, Result, SvError};
use crate::fastexp::{exp_nonpos, MIN_ARG};

/// Log densities are never reported below this value, so Metropolis ratios
/// stay finite deep in the tails.
pub const LOG_DENSITY_FLOOR: f64 = -745.0;

// Kernel sums below this are recomputed in log space.
const LINEAR_SUM_MIN: f64 = 1e-280;

/// Type-7 quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Normal-reference bandwidth.
pub fn bandwidth_nrd(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(invalid("bandwidth needs at least two observations"));
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(invalid("bandwidth sample must be finite"));
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let sd = (sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(SvError::DegenerateSample(
            "sample has zero variance".to_string(),
        ));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    Ok(1.06 * spread * (n as f64).powf(-0.2))
}

/// Fitted bivariate density
/// `k(x, y) = 1/(n bx by) sum_i phi((x - x_i)/bx) phi((y - y_i)/by)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateKde {
    xs: Vec<f64>,
    ys: Vec<f64>,
    bx: f64,
    by: f64,
    inv_bx2: f64,
    inv_by2: f64,
    log_norm: f64,
}

impl BivariateKde {
    /// Fits bandwidths to each margin with [`bandwidth_nrd`].
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        check_pairs(xs, ys)?;
        let bx = bandwidth_nrd(xs)?;
        let by = bandwidth_nrd(ys)?;
        Self::with_bandwidths(xs.to_vec(), ys.to_vec(), bx, by)
    }

    /// Builds the estimator with explicit bandwidths. A single point is
    /// allowed here.
    pub fn with_bandwidths(xs: Vec<f64>, ys: Vec<f64>, bx: f64, by: f64) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(invalid("kde needs equally long, non-empty samples"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(invalid("kde sample must be finite"));
        }
        if !(bx > 0.0 && by > 0.0 && bx.is_finite() && by.is_finite()) {
            return Err(invalid("bandwidths must be positive"));
        }
        let n = xs.len() as f64;
        Ok(Self {
            xs,
            ys,
            bx,
            by,
            inv_bx2: 1.0 / (bx * bx),
            inv_by2: 1.0 / (by * by),
            log_norm: -(2.0 * PI * n * bx * by).ln(),
        })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn bandwidths(&self) -> (f64, f64) {
        (self.bx, self.by)
    }

    #[inline]
    fn kernel_sum(&self, x: f64, y: f64) -> f64 {
        #[cfg(target_arch = "x86_64")]
        {
            // Same operations in the same order, only wider registers, so
            // every path returns identical bits.
            if std::arch::is_x86_feature_detected!("avx512f") {
                // SAFETY: the feature was detected at runtime.
                return unsafe { kernel_sum_avx512(&self.xs, &self.ys, x, y, self.inv_bx2, self.inv_by2) };
            }
            if std::arch::is_x86_feature_detected!("avx2") {
                // SAFETY: the feature was detected at runtime.
                return unsafe { kernel_sum_avx2(&self.xs, &self.ys, x, y, self.inv_bx2, self.inv_by2) };
            }
        }
        kernel_sum_portable(&self.xs, &self.ys, x, y, self.inv_bx2, self.inv_by2)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.kernel_sum(x, y) * self.log_norm.exp()
    }

    /// `ln k(x, y)`, via log-sum-exp when the linear sum underflows, floored
    /// at [`LOG_DENSITY_FLOOR`].
    pub fn log_eval(&self, x: f64, y: f64) -> f64 {
        let s = self.kernel_sum(x, y);
        let log = if s > LINEAR_SUM_MIN {
            s.ln() + self.log_norm
        } else {
            self.log_sum_exp(x, y) + self.log_norm
        };
        if log.is_nan() {
            return LOG_DENSITY_FLOOR;
        }
        log.max(LOG_DENSITY_FLOOR)
    }

    fn log_sum_exp(&self, x: f64, y: f64) -> f64 {
        let expo = |i: usize| {
            let dx = (x - self.xs[i]) * self.inv_bx2.sqrt();
            let dy = (y - self.ys[i]) * self.inv_by2.sqrt();
            -0.5 * (dx * dx + dy * dy)
        };
        let m = (0..self.len()).map(expo).fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return f64::NEG_INFINITY;
        }
        m + (0..self.len()).map(|i| (expo(i) - m).exp()).sum::<f64>().ln()
    }
}

fn check_pairs(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(invalid(format!(
            "paired samples differ in length ({} vs {})",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(invalid("kde needs at least two pairs"));
    }
    Ok(())
}

/// The sample point with the highest univariate Gaussian KDE value
/// (normal-reference bandwidth). Ties resolve to the smallest point.
pub fn kde1d_mode(sample: &[f64]) -> Result<f64> {
    let b = bandwidth_nrd(sample)?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let a = -0.5 / (b * b);
    // Pairs further apart than this contribute an exact zero next to the
    // self term, so the scan can stop.
    let reach = (MIN_ARG / a).sqrt();
    let mut dens = vec![1.0; n];
    for j in 0..n {
        let xj = sorted[j];
        let end = j + 1 + sorted[j + 1..].partition_point(|x| x - xj <= reach);
        let acc = pair_row(&sorted[j + 1..end], &mut dens[j + 1..end], xj, a);
        dens[j] += acc;
    }
    let mut best = 0;
    for j in 1..n {
        if dens[j] > dens[best] {
            best = j;
        }
    }
    Ok(sorted[best])
}

#[inline(always)]
fn pair_row_body(xs: &[f64], dens: &mut [f64], xj: f64, a: f64) -> f64 {
    const LANES: usize = 16;
    let mut acc = [0.0f64; LANES];
    let mut cx = xs.chunks_exact(LANES);
    let mut cd = dens.chunks_exact_mut(LANES);
    for (x, d) in (&mut cx).zip(&mut cd) {
        for k in 0..LANES {
            let diff = x[k] - xj;
            let e = exp_nonpos(a * diff * diff);
            acc[k] += e;
            d[k] += e;
        }
    }
    let mut total = acc.iter().sum::<f64>();
    for (x, d) in cx.remainder().iter().zip(cd.into_remainder()) {
        let diff = x - xj;
        let e = exp_nonpos(a * diff * diff);
        total += e;
        *d += e;
    }
    total
}

/// Adds `exp(a (x_i - xj)^2)` to each `dens[i]` and returns the row total.
fn pair_row(xs: &[f64], dens: &mut [f64], xj: f64, a: f64) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { pair_row_avx512(xs, dens, xj, a) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { pair_row_avx2(xs, dens, xj, a) };
        }
    }
    pair_row_body(xs, dens, xj, a)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn pair_row_avx2(xs: &[f64], dens: &mut [f64], xj: f64, a: f64) -> f64 {
    pair_row_body(xs, dens, xj, a)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn pair_row_avx512(xs: &[f64], dens: &mut [f64], xj: f64, a: f64) -> f64 {
    pair_row_body(xs, dens, xj, a)
}

#[inline(always)]
fn kernel_sum_body(xs: &[f64], ys: &[f64], x: f64, y: f64, inv_bx2: f64, inv_by2: f64) -> f64 {
    const LANES: usize = 16;
    let (ax, ay) = (-0.5 * inv_bx2, -0.5 * inv_by2);
    let mut acc = [0.0f64; LANES];
    let cxs = xs.chunks_exact(LANES);
    let cys = ys.chunks_exact(LANES);
    let (rx, ry) = (cxs.remainder(), cys.remainder());
    for (cx, cy) in cxs.zip(cys) {
        let mut arg = [0.0f64; LANES];
        for k in 0..LANES {
            let dx = x - cx[k];
            let dy = y - cy[k];
            arg[k] = ax * dx * dx + ay * dy * dy;
        }
        for k in 0..LANES {
            acc[k] += exp_nonpos(arg[k]);
        }
    }
    let mut s = acc.iter().sum::<f64>();
    for (xi, yi) in rx.iter().zip(ry) {
        let dx = x - xi;
        let dy = y - yi;
        s += exp_nonpos(ax * dx * dx + ay * dy * dy);
    }
    s
}

fn kernel_sum_portable(xs: &[f64], ys: &[f64], x: f64, y: f64, inv_bx2: f64, inv_by2: f64) -> f64 {
    kernel_sum_body(xs, ys, x, y, inv_bx2, inv_by2)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn kernel_sum_avx2(xs: &[f64], ys: &[f64], x: f64, y: f64, inv_bx2: f64, inv_by2: f64) -> f64 {
    kernel_sum_body(xs, ys, x, y, inv_bx2, inv_by2)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn kernel_sum_avx512(xs: &[f64], ys: &[f64], x: f64, y: f64, inv_bx2: f64, inv_by2: f64) -> f64 {
    kernel_sum_body(xs, ys, x, y, inv_bx2, inv_by2)
}
