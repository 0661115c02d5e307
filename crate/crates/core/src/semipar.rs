//! NSVM-3: the semiparametric estimator with a bivariate kernel density
//! over dependent return and volatility innovations.
//!
//! Phase one is a Gaussian pilot chain. Its posterior means give return
//! residuals `u_t = y_t / sqrt(h_t)` and volatility residuals, which are
//! standardized and fed to [`BivariateKde::fit`]. Phase two reruns the sweep
//! with the kernel density in place of both Gaussian error factors:
//!
//! * `h_t` targets `h^{-3/2} k(u_t, v_t) k(u_{t+1}, v_{t+1})`, with `v` the
//!   AR(1) innovations, through the same inverse-gamma envelope as the
//!   Gaussian sampler. [`VolTargetForm::TwoSided`] instead uses the single
//!   kernel `k(y_t / sqrt(h), (ln h - mu_t) / s)`;
//! * `delta`, `alpha` and `sigma_nu2` target their prior times the kernel
//!   likelihood of the AR(1) innovations, proposed from the Gaussian
//!   conditionals and passed through the envelope accept/reject step.

use std::f64::consts::PI;

use crate::dists::{invgamma_log_pdf, normal_log_pdf_unchecked, InvGammaParams, RngStream};
use crate::envelope::{envelope_step, log_envelope_constant, NormalProposal};
use crate::error::{invalid, Result, SvError};
use crate::gauss::{
    alpha_conditional, delta_conditional, h_moments, run_chain, run_gaussian_chain,
    sample_h_with_target, sigma_nu2_conditional, GaussianMoves, HSite, SweepMoves,
};
use crate::kde::BivariateKde;
use crate::model::{
    mean, s_quadratic, suff_stats, ChainOutput, McmcConfig, ModelParams, PriorSpec, ReturnSeries,
    VolPath,
};

/// A joint density of the (return, volatility) innovation pair.
pub trait JointDensity: Sync {
    fn log_density(&self, u: f64, w: f64) -> f64;
}

impl JointDensity for BivariateKde {
    #[inline]
    fn log_density(&self, u: f64, w: f64) -> f64 {
        self.log_eval(u, w)
    }
}

/// Independent standard bivariate normal. With this density every NSVM-3
/// target reduces to its Gaussian counterpart (with `sigma_nu` scaling the
/// volatility residual), which makes it the reference oracle for the
/// semiparametric machinery.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardBivariateNormal;

impl JointDensity for StandardBivariateNormal {
    #[inline]
    fn log_density(&self, u: f64, w: f64) -> f64 {
        -0.5 * (u * u + w * w) - (2.0 * PI).ln()
    }
}

/// Pilot residuals over the interior indices `t = 2..N-1`, raw and
/// standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub u_raw: Vec<f64>,
    pub w_raw: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub w_hat: Vec<f64>,
}

/// Point estimates taken from a pilot chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSummary {
    /// Posterior means; `sigma_nu2` is the square of the mean of `sigma_nu`.
    pub params: ModelParams,
    pub sigma_nu: f64,
    /// Posterior mean of each `h_t`.
    pub h: Vec<f64>,
}

pub fn summarize_pilot(pilot: &ChainOutput) -> Result<PilotSummary> {
    if pilot.rows() == 0 {
        return Err(SvError::InvalidPilot("pilot chain has no draws".into()));
    }
    let sigma_nu = mean(&pilot.sigma_nu_draws());
    if !(sigma_nu > 0.0 && sigma_nu.is_finite()) {
        return Err(SvError::InvalidPilot(format!("pilot sigma_nu = {sigma_nu}")));
    }
    let params = ModelParams {
        alpha: mean(&pilot.alpha_draws),
        delta: mean(&pilot.delta_draws),
        sigma_nu2: sigma_nu * sigma_nu,
    };
    if !(params.alpha.is_finite() && params.delta.is_finite()) {
        return Err(SvError::InvalidPilot("pilot means are not finite".into()));
    }
    Ok(PilotSummary {
        params,
        sigma_nu,
        h: pilot.mean_h(),
    })
}

fn standardize(xs: &[f64]) -> Result<Vec<f64>> {
    let m = mean(xs);
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt();
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(SvError::InvalidPilot("residuals have zero variance".into()));
    }
    Ok(xs.iter().map(|x| (x - m) / sd).collect())
}

pub fn extract_residuals(y: &ReturnSeries, pilot: &ChainOutput) -> Result<ResidualSet> {
    let est = summarize_pilot(pilot)?;
    residuals_from_estimates(y.values(), &est)
}

pub(crate) fn residuals_from_estimates(y: &[f64], est: &PilotSummary) -> Result<ResidualSet> {
    let n = y.len();
    if est.h.len() != n {
        return Err(SvError::InvalidPilot(format!(
            "pilot path has {} points, series has {n}",
            est.h.len()
        )));
    }
    let ln_h: Vec<f64> = est.h.iter().map(|h| h.ln()).collect();
    let mut u_raw = Vec::with_capacity(n.saturating_sub(2));
    let mut w_raw = Vec::with_capacity(n.saturating_sub(2));
    for t in 1..n - 1 {
        let (mu, _) = h_moments(&est.params, ln_h[t - 1], ln_h[t + 1]);
        u_raw.push(y[t] / est.h[t].sqrt());
        w_raw.push((ln_h[t] - mu) / est.sigma_nu);
    }
    Ok(ResidualSet {
        u_hat: standardize(&u_raw)?,
        w_hat: standardize(&w_raw)?,
        u_raw,
        w_raw,
    })
}

/// Pilot residuals paired with one-sided AR(1) innovations,
/// `v_t = (ln h_t - alpha - delta ln h_{t-1}) / sigma_nu` for `t = 2..N`.
pub fn extract_innovations(y: &ReturnSeries, pilot: &ChainOutput) -> Result<ResidualSet> {
    innovations_from_estimates(y.values(), &summarize_pilot(pilot)?)
}

pub(crate) fn innovations_from_estimates(y: &[f64], est: &PilotSummary) -> Result<ResidualSet> {
    let n = y.len();
    if est.h.len() != n {
        return Err(SvError::InvalidPilot(format!(
            "pilot path has {} points, series has {n}",
            est.h.len()
        )));
    }
    let p = &est.params;
    let ln_h: Vec<f64> = est.h.iter().map(|h| h.ln()).collect();
    let u_raw: Vec<f64> = (1..n).map(|t| y[t] / est.h[t].sqrt()).collect();
    let w_raw: Vec<f64> = (1..n)
        .map(|t| (ln_h[t] - p.alpha - p.delta * ln_h[t - 1]) / est.sigma_nu)
        .collect();
    Ok(ResidualSet {
        u_hat: standardize(&u_raw)?,
        w_hat: standardize(&w_raw)?,
        u_raw,
        w_raw,
    })
}

/// The fitted semiparametric error model.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiparModel {
    pub kde: BivariateKde,
    pub pilot_estimates: ModelParams,
    pub pilot_h: Vec<f64>,
}

/// `ln` of `h^{-3/2} k(y / sqrt(h), (ln h - mu_t) / sigma_nu)`.
pub fn np_h_log_target<D: JointDensity + ?Sized>(
    h: f64,
    y: f64,
    mu_t: f64,
    sigma_nu: f64,
    density: &D,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(invalid("volatility must be positive"));
    }
    if !(sigma_nu > 0.0) {
        return Err(invalid("sigma_nu must be positive"));
    }
    Ok(np_h_log_target_unchecked(h, y, mu_t, sigma_nu, density))
}

#[inline]
fn np_h_log_target_unchecked<D: JointDensity + ?Sized>(
    h: f64,
    y: f64,
    mu_t: f64,
    sigma_nu: f64,
    density: &D,
) -> f64 {
    if !(h > 0.0 && h.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let l = h.ln();
    -1.5 * l + density.log_density(y / h.sqrt(), (l - mu_t) / sigma_nu)
}

/// Which parameter a semiparametric update targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Delta,
    Alpha,
    SigmaNu2,
}

impl Param {
    /// Update order within a sweep.
    pub const SWEEP_ORDER: [Param; 3] = [Param::SigmaNu2, Param::Alpha, Param::Delta];
}

/// The fixed-volatility state a parameter update conditions on.
#[derive(Debug, Clone, Copy)]
pub struct ParamState<'a> {
    pub y: &'a [f64],
    pub path: &'a VolPath,
    pub params: ModelParams,
}

/// Kernel-likelihood target for one parameter, with the return residuals
/// `y_t / sqrt(h_t)` computed once for the current path.
struct ParamTarget<'a, D: ?Sized> {
    u: Vec<f64>,
    ln_h: &'a [f64],
    prior: &'a PriorSpec,
    density: &'a D,
}

impl<'a, D: JointDensity + ?Sized> ParamTarget<'a, D> {
    fn new(state: &ParamState<'a>, prior: &'a PriorSpec, density: &'a D) -> Self {
        let u = state
            .y
            .iter()
            .zip(state.path.h())
            .map(|(y, h)| y / h.sqrt())
            .collect();
        Self {
            u,
            ln_h: state.path.ln_h(),
            prior,
            density,
        }
    }

    fn log_prior(&self, theta: Param, value: f64) -> f64 {
        let p = self.prior;
        match theta {
            Param::Delta => normal_log_pdf_unchecked(value, p.delta0, p.sigma_delta2.sqrt()),
            Param::Alpha => normal_log_pdf_unchecked(value, p.alpha0, p.sigma_alpha2.sqrt()),
            Param::SigmaNu2 => invgamma_log_pdf(
                value,
                &InvGammaParams {
                    shape: p.nu0 / 2.0,
                    scale: p.s0 / 2.0,
                },
            ),
        }
    }

    fn log_target(&self, theta: Param, value: f64, params: &ModelParams) -> f64 {
        if !value.is_finite() {
            return f64::NEG_INFINITY;
        }
        let mut p = *params;
        match theta {
            Param::Delta => p.delta = value,
            Param::Alpha => p.alpha = value,
            Param::SigmaNu2 => {
                if value <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                p.sigma_nu2 = value
            }
        }
        let sd = p.sigma_nu2.sqrt();
        let inv_sd = 1.0 / sd;
        let mut acc = 0.0;
        for t in 1..self.ln_h.len() {
            let e = self.ln_h[t] - p.alpha - p.delta * self.ln_h[t - 1];
            acc += self.density.log_density(self.u[t], e * inv_sd);
        }
        acc - (self.ln_h.len() - 1) as f64 * sd.ln() + self.log_prior(theta, value)
    }
}

/// Log prior of `theta = value` plus the kernel log likelihood of the AR(1)
/// innovations `(ln h_t - alpha - delta ln h_{t-1}) / sigma_nu`, paired with
/// the return residuals of the current path, minus `ln sigma_nu` per term.
pub fn np_param_log_target<D: JointDensity + ?Sized>(
    theta: Param,
    value: f64,
    state: &ParamState<'_>,
    prior: &PriorSpec,
    density: &D,
) -> Result<f64> {
    if !value.is_finite() || (theta == Param::SigmaNu2 && value <= 0.0) {
        return Err(invalid(format!("{theta:?} = {value} outside its domain")));
    }
    if state.y.len() != state.path.len() || state.y.len() < 2 {
        return Err(invalid("state series and path differ in length"));
    }
    Ok(ParamTarget::new(state, prior, density).log_target(theta, value, &state.params))
}

enum ParamProposal {
    Normal(NormalProposal),
    InvGamma(InvGammaParams),
}

fn gaussian_conditional(theta: Param, state: &ParamState<'_>, prior: &PriorSpec) -> Result<ParamProposal> {
    let ln_h = state.path.ln_h();
    let stats = suff_stats(ln_h)?;
    let p = &state.params;
    Ok(match theta {
        Param::Delta => {
            let (mean, var) = delta_conditional(prior, &stats, ln_h, p.alpha, p.sigma_nu2)?;
            ParamProposal::Normal(NormalProposal { mean, sd: var.sqrt() })
        }
        Param::Alpha => {
            let (mean, var) = alpha_conditional(prior, &stats, ln_h, p.delta, p.sigma_nu2)?;
            ParamProposal::Normal(NormalProposal { mean, sd: var.sqrt() })
        }
        Param::SigmaNu2 => {
            let s = s_quadratic(p, prior, ln_h, &stats);
            ParamProposal::InvGamma(sigma_nu2_conditional(prior, s, ln_h.len())?)
        }
    })
}

fn current_value(theta: Param, p: &ModelParams) -> f64 {
    match theta {
        Param::Delta => p.delta,
        Param::Alpha => p.alpha,
        Param::SigmaNu2 => p.sigma_nu2,
    }
}

fn envelope_param_step<D: JointDensity + ?Sized>(
    rng: &mut RngStream,
    theta: Param,
    state: &ParamState<'_>,
    prior: &PriorSpec,
    target: &ParamTarget<'_, D>,
    c_star: f64,
) -> Result<f64> {
    let current = current_value(theta, &state.params);
    let log_p = |v: f64| target.log_target(theta, v, &state.params);
    match gaussian_conditional(theta, state, prior)? {
        ParamProposal::Normal(q) => {
            let log_c = log_envelope_constant(&q, log_p, c_star)?;
            Ok(envelope_step(rng, &q, log_p, log_c, current)?.value)
        }
        ParamProposal::InvGamma(q) => {
            let log_c = log_envelope_constant(&q, log_p, c_star)?;
            Ok(envelope_step(rng, &q, log_p, log_c, current)?.value)
        }
    }
}

/// One envelope/MH update of `theta`: proposal is the Gaussian-model
/// conditional at the current state, target is [`np_param_log_target`].
pub fn mh_param_step<D: JointDensity + ?Sized>(
    rng: &mut RngStream,
    theta: Param,
    state: &ParamState<'_>,
    prior: &PriorSpec,
    density: &D,
    c_star: f64,
) -> Result<f64> {
    if state.y.len() != state.path.len() || state.y.len() < 2 {
        return Err(invalid("state series and path differ in length"));
    }
    let target = ParamTarget::new(state, prior, density);
    envelope_param_step(rng, theta, state, prior, &target, c_star)
}

/// How the phase-two parameter draws are targeted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParamTargetMode {
    /// Prior times the kernel likelihood, proposed from the Gaussian
    /// conditional.
    #[default]
    Semiparametric,
    /// The Gaussian conditionals themselves (direct draws); only the
    /// volatility updates use the kernel density.
    Parametric,
}

/// Shape of the kernel target for an interior `h_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolTargetForm {
    /// One kernel evaluation at the two-sided residual `(ln h - mu_t)`,
    /// with the density fitted to two-sided pilot residuals. Under a
    /// dependent density this and the parameter targets are not full
    /// conditionals of one joint target.
    TwoSided,
    /// The exact full conditional of the kernel likelihood: kernels at the
    /// AR(1) innovations of `t` and `t + 1`, with the density fitted to
    /// one-sided pilot innovations. Consistent with the parameter targets.
    #[default]
    Paired,
}

/// Scale dividing `ln h - mu_t` in the volatility update's kernel argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VolResidualScale {
    /// `sigma_nu / sqrt(1 + delta^2)`, the sd of `ln h_t` given both
    /// neighbours. With a standard normal density the update is then exactly
    /// the Gaussian-model update.
    #[default]
    Conditional,
    /// `sigma_nu` itself. Widens the conditional by a factor of about
    /// `sqrt(1 + delta^2)` relative to the Gaussian model.
    SigmaNu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nsvm3Options {
    pub param_target: ParamTargetMode,
    pub vol_target: VolTargetForm,
    pub vol_scale: VolResidualScale,
    /// Start phase two from the pilot posterior means instead of the
    /// Gaussian cold start.
    pub warm_start: bool,
}

impl Default for Nsvm3Options {
    fn default() -> Self {
        Self {
            param_target: ParamTargetMode::Semiparametric,
            vol_target: VolTargetForm::Paired,
            vol_scale: VolResidualScale::Conditional,
            warm_start: true,
        }
    }
}

struct SemiparMoves<'a, D: ?Sized> {
    density: &'a D,
    mode: ParamTargetMode,
    vol_target: VolTargetForm,
    vol_scale: VolResidualScale,
}

impl<D: JointDensity + ?Sized> SweepMoves for SemiparMoves<'_, D> {
    fn update_h(&self, rng: &mut RngStream, site: &HSite, params: &ModelParams, c_star: f64) -> Result<f64> {
        let (mu_t, sigma2) = h_moments(params, site.ln_h_prev, site.ln_h_next);
        let y = site.y;
        match self.vol_target {
            VolTargetForm::TwoSided => {
                let scale = match self.vol_scale {
                    VolResidualScale::Conditional => sigma2.sqrt(),
                    VolResidualScale::SigmaNu => params.sigma_nu(),
                };
                sample_h_with_target(rng, y, mu_t, sigma2, site.h_current, c_star, |h| {
                    np_h_log_target_unchecked(h, y, mu_t, scale, self.density)
                })
            }
            VolTargetForm::Paired => {
                let inv_sd = 1.0 / params.sigma_nu();
                let u_next = site.y_next * (-0.5 * site.ln_h_next).exp();
                let base = params.alpha + params.delta * site.ln_h_prev;
                sample_h_with_target(rng, y, mu_t, sigma2, site.h_current, c_star, |h| {
                    if !(h > 0.0 && h.is_finite()) {
                        return f64::NEG_INFINITY;
                    }
                    let l = h.ln();
                    let here = (l - base) * inv_sd;
                    let ahead = (site.ln_h_next - params.alpha - params.delta * l) * inv_sd;
                    -1.5 * l
                        + self.density.log_density(y / h.sqrt(), here)
                        + self.density.log_density(u_next, ahead)
                })
            }
        }
    }

    fn update_params(
        &self,
        rng: &mut RngStream,
        y: &[f64],
        prior: &PriorSpec,
        params: ModelParams,
        path: &VolPath,
        c_star: f64,
    ) -> Result<ModelParams> {
        if self.mode == ParamTargetMode::Parametric {
            return GaussianMoves.update_params(rng, y, prior, params, path, c_star);
        }
        let mut state = ParamState { y, path, params };
        let target = ParamTarget::new(&state, prior, self.density);
        for theta in Param::SWEEP_ORDER {
            let v = envelope_param_step(rng, theta, &state, prior, &target, c_star)?;
            match theta {
                Param::Delta => state.params.delta = v,
                Param::Alpha => state.params.alpha = v,
                Param::SigmaNu2 => state.params.sigma_nu2 = v,
            }
        }
        Ok(state.params)
    }
}

/// Phase two of NSVM-3 against an arbitrary joint error density, starting
/// from `(params, path)`.
pub fn run_semipar_chain<D: JointDensity + ?Sized>(
    y: &ReturnSeries,
    prior: &PriorSpec,
    cfg: &McmcConfig,
    density: &D,
    params: ModelParams,
    path: VolPath,
    opts: &Nsvm3Options,
) -> Result<ChainOutput> {
    let moves = SemiparMoves {
        density,
        mode: opts.param_target,
        vol_target: opts.vol_target,
        vol_scale: opts.vol_scale,
    };
    run_chain(y, prior, cfg, params, path, &moves)
}

/// Builds the kernel model from an existing Gaussian chain on `y` and runs
/// phase two.
pub fn run_nsvm3_from_pilot(
    y: &ReturnSeries,
    prior: &PriorSpec,
    pilot: &ChainOutput,
    cfg_main: &McmcConfig,
    opts: Nsvm3Options,
) -> Result<(SemiparModel, ChainOutput)> {
    let est = summarize_pilot(pilot)?;
    let res = match opts.vol_target {
        VolTargetForm::TwoSided => residuals_from_estimates(y.values(), &est)?,
        VolTargetForm::Paired => innovations_from_estimates(y.values(), &est)?,
    };
    let kde = BivariateKde::fit(&res.u_hat, &res.w_hat)?;
    let (params, path) = if opts.warm_start {
        (est.params, VolPath::from_h(est.h.clone())?)
    } else {
        crate::gauss::cold_start(y)?
    };
    let chain = run_semipar_chain(y, prior, cfg_main, &kde, params, path, &opts)?;
    Ok((
        SemiparModel {
            kde,
            pilot_estimates: est.params,
            pilot_h: est.h,
        },
        chain,
    ))
}

/// Gaussian pilot, residual kernel fit, then the semiparametric chain.
pub fn run_nsvm3(
    y: &ReturnSeries,
    prior: &PriorSpec,
    cfg_pilot: &McmcConfig,
    cfg_main: &McmcConfig,
    opts: Nsvm3Options,
) -> Result<(SemiparModel, ChainOutput)> {
    let pilot = run_gaussian_chain(y, prior, cfg_pilot)?;
    run_nsvm3_from_pilot(y, prior, &pilot, cfg_main, opts)
}
