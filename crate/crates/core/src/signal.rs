//! Random-phase multisine excitations.
//!
//! A realization is `dc + A * sum_k cos(2 pi k n / N + phi_k)` over the excited
//! harmonics, with `A = std * sqrt(2 / N_ex)` so the zero-mean part has the
//! requested standard deviation exactly over every period.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

/// Definition of a multisine excitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultisineSpec {
    /// Samples per period (`N`).
    pub n_samples: usize,
    /// Sampling frequency in Hz.
    pub fs: f64,
    /// Strictly increasing harmonic indices, all in `0 < k < N/2`.
    pub excited_harmonics: Vec<usize>,
    /// Signal mean.
    pub dc: f64,
    /// Standard deviation of the zero-mean part.
    pub std: f64,
    pub seed: u64,
}

impl MultisineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 3 {
            return Err(Error::invalid("n_samples must be at least 3"));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::invalid("fs must be positive"));
        }
        if self.excited_harmonics.is_empty() {
            return Err(Error::invalid("excited harmonics must be non-empty"));
        }
        if self.excited_harmonics.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "excited harmonics must be strictly increasing without duplicates",
            ));
        }
        let first = self.excited_harmonics[0];
        let last = *self.excited_harmonics.last().unwrap();
        if first == 0 || 2 * last >= self.n_samples {
            return Err(Error::invalid(format!(
                "excited harmonics must satisfy 0 < k < N/2 (got {first}..{last} for N = {})",
                self.n_samples
            )));
        }
        if !(self.std.is_finite() && self.std >= 0.0) {
            return Err(Error::invalid("std must be finite and >= 0"));
        }
        if !self.dc.is_finite() {
            return Err(Error::invalid("dc must be finite"));
        }
        Ok(())
    }

    /// Frequency resolution `fs / N`.
    pub fn f0(&self) -> f64 {
        self.fs / self.n_samples as f64
    }

    /// Excited frequencies in Hz.
    pub fn freqs(&self) -> Vec<f64> {
        let f0 = self.f0();
        self.excited_harmonics.iter().map(|&k| k as f64 * f0).collect()
    }

    /// Per-line cosine amplitude giving the requested standard deviation.
    pub fn amplitude(&self) -> f64 {
        self.std * (2.0 / self.excited_harmonics.len() as f64).sqrt()
    }
}

/// Expands `first:step:last` into harmonic indices.
pub fn harmonic_grid(first: i64, step: i64, last: i64) -> Result<Vec<usize>> {
    if first <= 0 {
        return Err(Error::invalid("first harmonic must be >= 1"));
    }
    if step <= 0 {
        return Err(Error::invalid("harmonic step must be >= 1"));
    }
    if last < first {
        return Err(Error::invalid("last harmonic must be >= first"));
    }
    Ok((first..=last).step_by(step as usize).map(|k| k as usize).collect())
}

/// Parses the `first:step:last` notation (or `first:last` with unit step).
pub fn parse_harmonic_grid(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<&str> = s.trim().trim_matches(['[', ']']).split(':').collect();
    let num = |p: &str| {
        p.trim()
            .parse::<i64>()
            .map_err(|_| Error::invalid(format!("bad harmonic grid `{s}`")))
    };
    match parts.as_slice() {
        [a, b] => harmonic_grid(num(a)?, 1, num(b)?),
        [a, b, c] => harmonic_grid(num(a)?, num(b)?, num(c)?),
        _ => Err(Error::invalid(format!("bad harmonic grid `{s}`"))),
    }
}

/// One sampled realization of a [`MultisineSpec`].
#[derive(Debug, Clone)]
pub struct SignalRealization {
    samples: Vec<f64>,
    spec: MultisineSpec,
    phases: Vec<f64>,
    periods: usize,
    // Unit-amplitude zero-mean period shared between rescaled copies.
    shape: Arc<Vec<f64>>,
}

impl SignalRealization {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn spec(&self) -> &MultisineSpec {
        &self.spec
    }

    /// Drawn phase per excited harmonic, radians in `[0, 2 pi)`.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn period_len(&self) -> usize {
        self.spec.n_samples
    }

    /// Samples of period `p` (0-based).
    pub fn period(&self, p: usize) -> &[f64] {
        let n = self.spec.n_samples;
        &self.samples[p * n..(p + 1) * n]
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    fn assemble(
        spec: MultisineSpec,
        phases: Vec<f64>,
        shape: Arc<Vec<f64>>,
        periods: usize,
    ) -> Self {
        let a = spec.amplitude();
        let dc = spec.dc;
        let one: Vec<f64> = shape.iter().map(|&u| dc + a * u).collect();
        let mut samples = Vec::with_capacity(one.len() * periods);
        for _ in 0..periods {
            samples.extend_from_slice(&one);
        }
        SignalRealization { samples, spec, phases, periods, shape }
    }
}

/// Draws phases from the seeded generator and samples `periods` periods.
pub fn realize_multisine(spec: &MultisineSpec, periods: usize) -> Result<SignalRealization> {
    spec.validate()?;
    if periods < 1 {
        return Err(Error::invalid("periods must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phases: Vec<f64> = spec
        .excited_harmonics
        .iter()
        .map(|_| rng.random::<f64>() * TAU)
        .collect();

    let n = spec.n_samples;
    let mut lines = vec![Complex64::new(0.0, 0.0); n];
    for (&k, &phi) in spec.excited_harmonics.iter().zip(&phases) {
        let c = Complex64::from_polar(0.5, phi);
        lines[k] = c;
        lines[n - k] = c.conj();
    }
    // synthesize() undoes the 1/N forward convention, so each line yields a
    // unit-amplitude cosine.
    let shape = Arc::new(dsp::synthesize(&lines));
    Ok(SignalRealization::assemble(spec.clone(), phases, shape, periods))
}

/// Reuses the phase draw of `real` with a new mean and standard deviation.
pub fn rescale(real: &SignalRealization, dc: f64, std: f64) -> Result<SignalRealization> {
    if !(std.is_finite() && std >= 0.0) || !dc.is_finite() {
        return Err(Error::invalid("rescale target must have finite dc and std >= 0"));
    }
    if real.spec.std == 0.0 && std > 0.0 {
        return Err(Error::invalid("cannot rescale a zero-std realization to std > 0"));
    }
    let spec = MultisineSpec { dc, std, ..real.spec.clone() };
    Ok(SignalRealization::assemble(
        spec,
        real.phases.clone(),
        Arc::clone(&real.shape),
        real.periods,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(harm: Vec<usize>, dc: f64, std: f64) -> MultisineSpec {
        MultisineSpec { n_samples: 256, fs: 256.0, excited_harmonics: harm, dc, std, seed: 3 }
    }

    #[test]
    fn grid_examples() {
        assert_eq!(harmonic_grid(3, 2, 399).unwrap().len(), 199);
        assert_eq!(harmonic_grid(1, 2, 4999).unwrap().len(), 2500);
        assert_eq!(harmonic_grid(5, 1, 5).unwrap(), vec![5]);
        assert!(harmonic_grid(0, 1, 5).is_err());
        assert!(harmonic_grid(-1, 1, 5).is_err());
        assert_eq!(parse_harmonic_grid("[3:2:9]").unwrap(), vec![3, 5, 7, 9]);
    }

    #[test]
    fn spec_validation_rejects_bad_grids() {
        assert!(spec(vec![], 0.0, 1.0).validate().is_err());
        assert!(spec(vec![0, 2], 0.0, 1.0).validate().is_err());
        assert!(spec(vec![3, 3], 0.0, 1.0).validate().is_err());
        assert!(spec(vec![128], 0.0, 1.0).validate().is_err());
        assert!(spec(vec![4, 3], 0.0, 1.0).validate().is_err());
        assert!(spec(vec![3], 0.0, -1.0).validate().is_err());
        assert!(realize_multisine(&spec(vec![3], 0.0, 1.0), 0).is_err());
    }

    #[test]
    fn zero_std_zero_dc_is_all_zero() {
        let r = realize_multisine(&spec(vec![3, 5, 9], 0.0, 0.0), 2).unwrap();
        assert!(r.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_tone_amplitude_and_phase() {
        let s = 0.7;
        let r = realize_multisine(&spec(vec![10], 0.0, s), 1).unwrap();
        let x = dsp::spectrum(r.samples());
        let amp = 2.0 * x[10].norm();
        assert!((amp - s * 2f64.sqrt()).abs() < 1e-12);
        let phase = x[10].arg().rem_euclid(TAU);
        assert!((phase - r.phases()[0]).abs() < 1e-9);
    }

    #[test]
    fn rescale_rules() {
        let base = realize_multisine(&spec(vec![3, 5, 7, 11], 0.2, 0.5), 2).unwrap();
        let same = rescale(&base, 0.2, 0.5).unwrap();
        assert_eq!(same.samples(), base.samples());

        let shifted = rescale(&base, 0.2 + 0.25, 0.5).unwrap();
        for (a, b) in shifted.samples().iter().zip(base.samples()) {
            assert!((a - b - 0.25).abs() < 1e-15);
        }
        assert_eq!(shifted.phases(), base.phases());

        let z = rescale(&base, 0.0, 0.5).unwrap();
        let d = rescale(&base, 0.0, 1.0).unwrap();
        for (a, b) in d.samples().iter().zip(z.samples()) {
            assert_eq!(*a, 2.0 * b);
        }

        let flat = rescale(&base, 0.1, 0.0).unwrap();
        assert!(flat.samples().iter().all(|&x| x == 0.1));
        assert!(rescale(&flat, 0.1, 1.0).is_err());
    }
}
