//! Accept/reject sampling against an inflated proposal envelope, followed
//! by a Metropolis-Hastings correction wherever the target pierces the
//! envelope.
//!
//! The envelope is `c q(x)` with `c = c_star p(m) / q(m)` anchored at the
//! proposal mode `m`. Draws are retried until one passes the accept/reject
//! test. The candidate `y` then replaces the current state `x` with
//! probability
//!
//! * 1 if `p(x) <= c q(x)`;
//! * `c q(x) / p(x)` if only `x` pierces the envelope;
//! * `min(1, p(y) q(x) / (p(x) q(y)))` if both do,
//!
//! which leaves `p` invariant however badly the envelope fits. All
//! arithmetic is in log space.

use crate::dists::{draw_invgamma, invgamma_log_pdf, normal_log_pdf_unchecked, InvGammaParams, RngStream};
use crate::error::{Result, SvError};

/// Consecutive envelope rejections tolerated before giving up.
pub const MAX_ENVELOPE_TRIES: usize = 10_000;

pub trait Proposal {
    fn draw(&self, rng: &mut RngStream) -> f64;
    fn log_pdf(&self, x: f64) -> f64;
    fn mode(&self) -> f64;
}

impl Proposal for InvGammaParams {
    fn draw(&self, rng: &mut RngStream) -> f64 {
        draw_invgamma(rng, self)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        invgamma_log_pdf(x, self)
    }

    fn mode(&self) -> f64 {
        InvGammaParams::mode(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalProposal {
    pub mean: f64,
    pub sd: f64,
}

impl Proposal for NormalProposal {
    fn draw(&self, rng: &mut RngStream) -> f64 {
        rng.normal(self.mean, self.sd)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        normal_log_pdf_unchecked(x, self.mean, self.sd)
    }

    fn mode(&self) -> f64 {
        self.mean
    }
}

/// `ln c = ln c_star + ln p(m) - ln q(m)`.
pub fn log_envelope_constant<P, F>(proposal: &P, log_target: F, c_star: f64) -> Result<f64>
where
    P: Proposal,
    F: Fn(f64) -> f64,
{
    let m = proposal.mode();
    let log_c = c_star.ln() + log_target(m) - proposal.log_pdf(m);
    if !log_c.is_finite() {
        return Err(SvError::DegenerateProposal(format!(
            "envelope constant is not finite at proposal mode {m}"
        )));
    }
    Ok(log_c)
}

/// What one envelope step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeStep {
    pub value: f64,
    /// Proposals drawn before one passed the accept/reject test.
    pub proposals: usize,
    /// The current state pierced the envelope, so the MH correction ran.
    pub corrected: bool,
    /// The MH correction rejected the move and `value` is the current state.
    pub stayed: bool,
}

pub fn envelope_step<P, F>(
    rng: &mut RngStream,
    proposal: &P,
    log_target: F,
    log_c: f64,
    current: f64,
) -> Result<EnvelopeStep>
where
    P: Proposal,
    F: Fn(f64) -> f64,
{
    for tries in 1..=MAX_ENVELOPE_TRIES {
        let x = proposal.draw(rng);
        let lp = log_target(x);
        let lq = proposal.log_pdf(x);
        let log_accept1 = lp - log_c - lq;
        let roll = rng.uniform();
        if roll > log_accept1.exp() {
            continue;
        }
        // how far the current state pierces the envelope
        let log_excess_current = log_target(current) - log_c - proposal.log_pdf(current);
        if log_excess_current <= 0.0 {
            return Ok(EnvelopeStep {
                value: x,
                proposals: tries,
                corrected: false,
                stayed: false,
            });
        }
        let log_accept2 = if log_accept1 < 0.0 {
            -log_excess_current
        } else {
            log_accept1 - log_excess_current
        };
        let roll = rng.uniform();
        let stayed = roll > log_accept2.exp();
        return Ok(EnvelopeStep {
            value: if stayed { current } else { x },
            proposals: tries,
            corrected: true,
            stayed,
        });
    }
    Err(SvError::StuckSampler(MAX_ENVELOPE_TRIES))
}
