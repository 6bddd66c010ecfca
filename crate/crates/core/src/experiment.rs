//! Simulated measurement: realize M phase draws, simulate the system over
//! `transient + P` periods, add output noise and collect the spectra.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bla::{ExperimentRecord, RecordMeta};
use crate::error::Result;
use crate::seed::{self, tag};
use crate::signal::{realize_multisine, MultisineSpec};
use crate::sysmodels::{add_noise, SimOptions, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub n_samples: usize,
    pub fs: f64,
    pub excited_harmonics: Vec<usize>,
    pub dc: f64,
    pub std: f64,
    /// Phase realizations `M`.
    pub realizations: usize,
    /// Retained periods `P` per realization.
    pub periods: usize,
    /// Output noise standard deviation.
    pub noise_std: f64,
    pub sim: SimOptions,
}

impl ExperimentSetup {
    pub fn with_level(&self, dc: f64, std: f64) -> Self {
        ExperimentSetup { dc, std, ..self.clone() }
    }

    /// Multisine definition of realization `m` under experiment seed `seed`.
    pub fn signal_spec(&self, seed: u64, m: usize) -> MultisineSpec {
        MultisineSpec {
            n_samples: self.n_samples,
            fs: self.fs,
            excited_harmonics: self.excited_harmonics.clone(),
            dc: self.dc,
            std: self.std,
            seed: seed::derive(seed, &[m as u64, tag::PHASES]),
        }
    }
}

/// Simulates one realization; returns the retained `(u, y)` time records.
pub fn simulate_realization(
    model: &SystemModel,
    setup: &ExperimentSetup,
    seed: u64,
    m: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let spec = setup.signal_spec(seed, m);
    let total = setup.sim.transient_periods + setup.periods;
    let sig = realize_multisine(&spec, total)?;
    let y = model.simulate(sig.samples(), setup.n_samples, setup.fs, &setup.sim)?;
    let y = add_noise(&y, setup.noise_std, seed::derive(seed, &[m as u64, tag::NOISE]))?;
    let mut u = sig.into_samples();
    u.drain(..setup.sim.transient_periods * setup.n_samples);
    Ok((u, y))
}

/// Runs all `M` realizations (concurrently) and assembles the record.
pub fn run_experiment(
    model: &SystemModel,
    setup: &ExperimentSetup,
    seed: u64,
) -> Result<ExperimentRecord> {
    let records: Vec<(Vec<f64>, Vec<f64>)> = (0..setup.realizations)
        .into_par_iter()
        .map(|m| simulate_realization(model, setup, seed, m))
        .collect::<Result<_>>()?;
    let meta = RecordMeta {
        n_samples: setup.n_samples,
        fs: setup.fs,
        excited_harmonics: setup.excited_harmonics.clone(),
        dc: setup.dc,
        std: setup.std,
        seeds: (0..setup.realizations).map(|m| setup.signal_spec(seed, m).seed).collect(),
    };
    ExperimentRecord::from_time_records(meta, &records)
}
