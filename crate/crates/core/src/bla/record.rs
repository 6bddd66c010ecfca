use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

/// Excitation settings a record was measured under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub n_samples: usize,
    pub fs: f64,
    pub excited_harmonics: Vec<usize>,
    pub dc: f64,
    pub std: f64,
    /// Phase seed of each realization.
    pub seeds: Vec<u64>,
}

impl RecordMeta {
    pub fn freqs(&self) -> Vec<f64> {
        let df = self.fs / self.n_samples as f64;
        self.excited_harmonics.iter().map(|&k| k as f64 * df).collect()
    }
}

/// Input and output spectra at the excited bins, `M` realizations by `P`
/// periods. Stored flat in `[m][p][k]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    m: usize,
    p: usize,
    u: Vec<Complex64>,
    y: Vec<Complex64>,
    freqs: Vec<f64>,
    meta: RecordMeta,
}

impl ExperimentRecord {
    /// Wraps precomputed spectra. `u` and `y` hold `m * p * n_bins` values.
    pub fn from_spectra(
        m: usize,
        p: usize,
        u: Vec<Complex64>,
        y: Vec<Complex64>,
        meta: RecordMeta,
    ) -> Result<Self> {
        let k = meta.excited_harmonics.len();
        if k == 0 {
            return Err(Error::Dimension("record has no excited bins".into()));
        }
        if u.len() != m * p * k || y.len() != m * p * k {
            return Err(Error::Dimension(format!(
                "expected {m}x{p}x{k} spectra, got {} input and {} output values",
                u.len(),
                y.len()
            )));
        }
        let freqs = meta.freqs();
        Ok(ExperimentRecord { m, p, u, y, freqs, meta })
    }

    /// Slices each realization's aligned steady-state input/output time
    /// records into periods and keeps the excited DFT bins.
    pub fn from_time_records(meta: RecordMeta, records: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let n = meta.n_samples;
        if records.is_empty() {
            return Err(Error::Dimension("record needs at least one realization".into()));
        }
        let len = records[0].0.len();
        if n == 0 || len == 0 || !len.is_multiple_of(n) {
            return Err(Error::Dimension(format!(
                "time record length {len} is not a positive multiple of N = {n}"
            )));
        }
        if records.iter().any(|(u, y)| u.len() != len || y.len() != len) {
            return Err(Error::Dimension("time records differ in length".into()));
        }
        if let Some(&k) = meta.excited_harmonics.iter().find(|&&k| k == 0 || 2 * k >= n) {
            return Err(Error::invalid(format!("excited harmonic {k} outside 0 < k < N/2")));
        }
        let p = len / n;
        let bins = &meta.excited_harmonics;
        let per: Vec<(Vec<Complex64>, Vec<Complex64>)> = records
            .par_iter()
            .map(|(u, y)| {
                let mut us = Vec::with_capacity(p * bins.len());
                let mut ys = Vec::with_capacity(p * bins.len());
                for q in 0..p {
                    us.extend(dsp::spectrum_at(&u[q * n..(q + 1) * n], bins));
                    ys.extend(dsp::spectrum_at(&y[q * n..(q + 1) * n], bins));
                }
                (us, ys)
            })
            .collect();
        let (u, y): (Vec<_>, Vec<_>) = per.into_iter().unzip();
        let m = records.len();
        Self::from_spectra(m, p, u.concat(), y.concat(), meta)
    }

    pub fn n_realizations(&self) -> usize {
        self.m
    }

    pub fn n_periods(&self) -> usize {
        self.p
    }

    pub fn n_bins(&self) -> usize {
        self.freqs.len()
    }

    /// Excited frequencies, Hz.
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn meta(&self) -> &RecordMeta {
        &self.meta
    }

    /// `U^[m,p]` over the excited bins (0-based indices).
    pub fn u(&self, m: usize, p: usize) -> &[Complex64] {
        let k = self.n_bins();
        let o = (m * self.p + p) * k;
        &self.u[o..o + k]
    }

    pub fn y(&self, m: usize, p: usize) -> &[Complex64] {
        let k = self.n_bins();
        let o = (m * self.p + p) * k;
        &self.y[o..o + k]
    }

    /// New record built from the listed realizations (repeats allowed).
    pub fn select(&self, realizations: &[usize]) -> Result<Self> {
        if let Some(&bad) = realizations.iter().find(|&&r| r >= self.m) {
            return Err(Error::Dimension(format!("realization {bad} out of range")));
        }
        let block = self.p * self.n_bins();
        let mut u = Vec::with_capacity(realizations.len() * block);
        let mut y = Vec::with_capacity(realizations.len() * block);
        let mut seeds = Vec::with_capacity(realizations.len());
        for &r in realizations {
            u.extend_from_slice(&self.u[r * block..(r + 1) * block]);
            y.extend_from_slice(&self.y[r * block..(r + 1) * block]);
            if let Some(&s) = self.meta.seeds.get(r) {
                seeds.push(s);
            }
        }
        let meta = RecordMeta { seeds, ..self.meta.clone() };
        Self::from_spectra(realizations.len(), self.p, u, y, meta)
    }

    /// Concatenates the realizations of two records with matching grids.
    pub fn merge(&self, other: &ExperimentRecord) -> Result<Self> {
        if self.p != other.p || self.meta.excited_harmonics != other.meta.excited_harmonics {
            return Err(Error::Dimension("records differ in periods or excited bins".into()));
        }
        let mut meta = self.meta.clone();
        meta.seeds.extend_from_slice(&other.meta.seeds);
        let u = [self.u.as_slice(), &other.u].concat();
        let y = [self.y.as_slice(), &other.y].concat();
        Self::from_spectra(self.m + other.m, self.p, u, y, meta)
    }
}
