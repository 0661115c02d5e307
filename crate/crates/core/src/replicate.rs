//! Paired Monte Carlo study: each replication simulates one path and fits
//! both the Gaussian model and NSVM-3 to it.

use rand::RngCore;

use crate::dists::RngStream;
use crate::error::Result;
use crate::gauss::run_gaussian_chain;
use crate::metrics::{aggregate, summarize_path, FitRecord, ModelKind, ReplicationReport, Truth};
use crate::model::{ChainOutput, McmcConfig, PriorSpec, ReturnSeries};
use crate::par::try_map_indexed;
use crate::semipar::{run_nsvm3_from_pilot, Nsvm3Options, SemiparModel};
use crate::simgen::{generate, DgpSpec, SimPath};

/// Chain settings shared by single fits and replications.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitSettings {
    pub prior: PriorSpec,
    /// Gaussian model chain and NSVM-3 phase two. The seed is ignored in
    /// replications, which derive their own.
    pub main: McmcConfig,
    /// NSVM-3 phase one.
    pub pilot: McmcConfig,
    pub nsvm3: Nsvm3Options,
}

impl FitSettings {
    /// When pilot and main chains are configured identically, a Gaussian fit
    /// of the same data doubles as the NSVM-3 pilot.
    fn pilot_matches_main(&self) -> bool {
        self.pilot.total_iterations == self.main.total_iterations
            && self.pilot.burn_in == self.main.burn_in
            && self.pilot.c_star == self.main.c_star
    }
}

pub struct Fit {
    pub chain: ChainOutput,
    pub semipar: Option<SemiparModel>,
}

/// Fits one model to `y`; NSVM-3 runs its own Gaussian pilot.
pub fn fit_model(y: &ReturnSeries, model: ModelKind, s: &FitSettings) -> Result<Fit> {
    match model {
        ModelKind::Gaussian => Ok(Fit {
            chain: run_gaussian_chain(y, &s.prior, &s.main)?,
            semipar: None,
        }),
        ModelKind::Nsvm3 => {
            let pilot = run_gaussian_chain(y, &s.prior, &s.pilot)?;
            let (model, chain) = run_nsvm3_from_pilot(y, &s.prior, &pilot, &s.main, s.nsvm3)?;
            Ok(Fit {
                chain,
                semipar: Some(model),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateConfig {
    pub dgp: DgpSpec,
    pub fit: FitSettings,
    pub replications: usize,
    pub seed: u64,
    /// Worker count; `None` lets the pool decide. Results do not depend on it.
    pub threads: Option<usize>,
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        Self {
            dgp: DgpSpec::default(),
            fit: FitSettings::default(),
            replications: 100,
            seed: 1,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub index: usize,
    pub sim: SimPath,
    pub gaussian: FitRecord,
    pub nsvm3: FitRecord,
    /// Posterior-mean volatility paths.
    pub gaussian_h: Vec<f64>,
    pub nsvm3_h: Vec<f64>,
}

pub struct ReplicationRun {
    pub report: ReplicationReport,
    pub replications: Vec<Replication>,
}

/// Simulates and fits replication `index`. Everything random in it flows
/// from `RngStream::for_replication(seed, index)`.
pub fn run_replication(cfg: &ReplicateConfig, index: usize) -> Result<Replication> {
    let mut rng = RngStream::for_replication(cfg.seed, index as u64);
    let sim = generate(&mut rng, &cfg.dgp)?;
    let main = McmcConfig {
        seed: rng.next_u64(),
        ..cfg.fit.main
    };
    let semi = McmcConfig {
        seed: rng.next_u64(),
        ..cfg.fit.main
    };
    let pilot_seed = rng.next_u64();

    let g_chain = run_gaussian_chain(&sim.y, &cfg.fit.prior, &main)?;
    let pilot_own;
    let pilot = if cfg.fit.pilot_matches_main() {
        &g_chain
    } else {
        let pc = McmcConfig {
            seed: pilot_seed,
            ..cfg.fit.pilot
        };
        pilot_own = run_gaussian_chain(&sim.y, &cfg.fit.prior, &pc)?;
        &pilot_own
    };
    let (_, n_chain) = run_nsvm3_from_pilot(&sim.y, &cfg.fit.prior, pilot, &semi, cfg.fit.nsvm3)?;

    let h_true = sim.h_true.h();
    let g_path = summarize_path(&g_chain)?;
    let n_path = summarize_path(&n_chain)?;
    Ok(Replication {
        index,
        gaussian: FitRecord::from_summaries(index, ModelKind::Gaussian, &g_chain, &g_path, h_true)?,
        nsvm3: FitRecord::from_summaries(index, ModelKind::Nsvm3, &n_chain, &n_path, h_true)?,
        gaussian_h: g_path.mean,
        nsvm3_h: n_path.mean,
        sim,
    })
}

pub fn run_replications(cfg: &ReplicateConfig) -> Result<ReplicationRun> {
    cfg.dgp.validate()?;
    cfg.fit.prior.validate()?;
    cfg.fit.main.validate()?;
    cfg.fit.pilot.validate()?;
    let replications = try_map_indexed(cfg.replications, cfg.threads, |i| run_replication(cfg, i))?;
    let records = replications
        .iter()
        .flat_map(|r| [r.gaussian.clone(), r.nsvm3.clone()])
        .collect();
    let truth = Truth {
        alpha: cfg.dgp.alpha,
        delta: cfg.dgp.delta,
        sigma_nu: cfg.dgp.sigma_nu,
    };
    Ok(ReplicationRun {
        report: aggregate(records, truth)?,
        replications,
    })
}
