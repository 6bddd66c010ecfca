//! Nonlinear mass-spring-damper `m y'' + d y' + k1 y + k3 y^3 = r(t)`.

use serde::{Deserialize, Serialize};

use super::block::{check_record, run_to_steady_state, FeedbackLoop, SimOptions, UpsampledInput};
use super::lti::LtiSystem;
use super::static_nl::StaticNl;
use crate::error::{Error, Result};
use crate::signal::{harmonic_grid, SignalRealization};

/// State norm treated as a numerical blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlMsdParams {
    pub m: f64,
    pub d: f64,
    pub k1: f64,
    pub k3: f64,
}

impl NlMsdParams {
    /// Stand-in constants: 70 Hz resonance, 5% damping, and a cubic term
    /// scaled so that `k3 sigma_y^2 / k1 = 0.1` for a 0.11 std flat multisine
    /// over harmonics 3:2:399 of N = 4883 at fs = 2440 Hz.
    pub fn device_default() -> Self {
        let w0 = std::f64::consts::TAU * 70.0;
        let mut p = NlMsdParams { m: 1.0, d: 2.0 * 0.05 * w0, k1: w0 * w0, k3: 0.0 };
        let n = 4883.0;
        let fs = 2440.0;
        let grid = harmonic_grid(3, 2, 399).expect("static grid");
        let lin = p.linear_part();
        let mean_g2 = grid
            .iter()
            .map(|&k| lin.response_at_hz(k as f64 * fs / n).norm_sqr())
            .sum::<f64>()
            / grid.len() as f64;
        let sigma_y2 = 0.11 * 0.11 * mean_g2;
        p.k3 = 0.1 * p.k1 / sigma_y2;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.m, self.d, self.k1, self.k3].iter().all(|v| v.is_finite());
        if !finite || self.m <= 0.0 {
            return Err(Error::invalid("NL-MSD parameters must be finite with m > 0"));
        }
        Ok(())
    }

    /// `1 / (m s^2 + d s + k1)`.
    pub fn linear_part(&self) -> LtiSystem {
        LtiSystem::new(vec![1.0], vec![self.k1, self.d, self.m]).expect("m > 0")
    }

    /// The same system drawn as a feedback loop: the cubic spring force fed
    /// back around the linear part.
    pub fn as_feedback_loop(&self) -> FeedbackLoop {
        FeedbackLoop {
            forward: self.linear_part(),
            fb_front: LtiSystem::unity(),
            nl: StaticNl::new(vec![0.0, 0.0, 0.0, self.k3]).expect("cubic"),
            fb_back: LtiSystem::unity(),
        }
    }

    fn accel(&self, r: f64, y: f64, v: f64) -> f64 {
        (r - self.d * v - self.k1 * y - self.k3 * y * y * y) / self.m
    }
}

/// Integrates the oscillator over the realization and drops one transient
/// period.
pub fn simulate_nl_msd(
    params: &NlMsdParams,
    r: &SignalRealization,
    oversample: usize,
) -> Result<Vec<f64>> {
    let opts = SimOptions { oversample, ..SimOptions::default() };
    simulate_nl_msd_samples(params, r.samples(), r.period_len(), r.spec().fs, &opts)
}

/// Classical RK4 at `fs * oversample`. The input is resampled band-limited
/// at twice that rate so the half-step stages see the exact multisine.
pub fn simulate_nl_msd_samples(
    params: &NlMsdParams,
    x: &[f64],
    n: usize,
    fs: f64,
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    params.validate()?;
    if opts.oversample < 4 {
        return Err(Error::invalid("oversample must be >= 4"));
    }
    let periods = check_record(x, n, opts.transient_periods)?;
    let os = opts.oversample;
    let h = 1.0 / (fs * os as f64);
    let input = UpsampledInput::new(x, n, 2 * os);
    let (mut y, mut v) = (0.0f64, 0.0f64);
    let mut sample = 0usize;
    run_to_steady_state(periods, opts.transient_periods, input.is_periodic(), |p| {
        let fine = input.period(p);
        let steps = n * os;
        let mut out = Vec::with_capacity(n);
        for i in 0..steps {
            if i % os == 0 {
                out.push(y);
            }
            let r0 = fine[2 * i];
            let rh = fine[2 * i + 1];
            let r1 = if 2 * i + 2 < fine.len() { fine[2 * i + 2] } else { input.next_start(p) };
            let k1y = v;
            let k1v = params.accel(r0, y, v);
            let k2y = v + 0.5 * h * k1v;
            let k2v = params.accel(rh, y + 0.5 * h * k1y, v + 0.5 * h * k1v);
            let k3y = v + 0.5 * h * k2v;
            let k3v = params.accel(rh, y + 0.5 * h * k2y, v + 0.5 * h * k2v);
            let k4y = v + h * k3v;
            let k4v = params.accel(r1, y + h * k3y, v + h * k3v);
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            if !(y.hypot(v) <= BLOWUP_LIMIT) {
                return Err(Error::IntegrationBlewUp { sample: sample + i / os });
            }
        }
        sample += n;
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp;
    use crate::signal::{realize_multisine, rescale, MultisineSpec};
    use num_complex::Complex64;

    fn params(k3: f64) -> NlMsdParams {
        let w0 = std::f64::consts::TAU * 20.0;
        NlMsdParams { m: 1.0, d: 2.0 * 0.1 * w0, k1: w0 * w0, k3 }
    }

    fn excitation(std: f64) -> SignalRealization {
        let spec = MultisineSpec {
            n_samples: 512,
            fs: 256.0,
            excited_harmonics: (1..100).step_by(2).collect(),
            dc: 0.0,
            std,
            seed: 3,
        };
        realize_multisine(&spec, 2).unwrap()
    }

    #[test]
    fn linear_case_matches_analytic_frf() {
        let p = params(0.0);
        let u = excitation(1.0);
        let y = simulate_nl_msd(&p, &u, 10).unwrap();
        let uk = dsp::spectrum(u.period(0));
        let yk = dsp::spectrum(&y);
        for &k in &u.spec().excited_harmonics {
            let w = std::f64::consts::TAU * k as f64 * 0.5;
            let g = 1.0 / Complex64::new(p.k1 - p.m * w * w, p.d * w);
            let est = yk[k] / uk[k];
            assert!((est - g).norm() / g.norm() < 1e-3, "k={k}");
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let u = excitation(0.0);
        let y = simulate_nl_msd(&params(1e6), &u, 4).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_case_is_homogeneous() {
        let p = params(0.0);
        let u = excitation(0.5);
        let u2 = rescale(&u, 0.0, 1.0).unwrap();
        let y = simulate_nl_msd(&p, &u, 8).unwrap();
        let y2 = simulate_nl_msd(&p, &u2, 8).unwrap();
        let scale = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in y.iter().zip(&y2) {
            assert!((b - 2.0 * a).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn low_oversample_rejected() {
        assert!(simulate_nl_msd(&params(0.0), &excitation(1.0), 3).is_err());
    }

    #[test]
    fn device_default_sets_ratio() {
        let p = NlMsdParams::device_default();
        assert!((p.k1 - (std::f64::consts::TAU * 70.0).powi(2)).abs() < 1e-9);
        assert!(p.k3 > 0.0);
    }
}
