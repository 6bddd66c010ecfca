//! Block-oriented nonlinear models: Wiener-Hammerstein, parallel
//! Wiener-Hammerstein, nonlinear feedback and multiplicative feedback.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::discrete::{Df2t, DiscreteTf};
use super::lti::{filter_periodic, LtiSystem};
use super::static_nl::StaticNl;
use crate::dsp;
use crate::error::{Error, Result};
use crate::signal::SignalRealization;

/// Newton tolerance for closing the algebraic loop at each time step.
const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITERS: usize = 50;
/// Period-to-period relative RMS difference accepted as steady state.
pub const STEADY_STATE_TOL: f64 = 1e-6;
const MAX_EXTRA_PERIODS: usize = 50;

/// Simulation knobs shared by the time-stepped models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Integration steps per output sample.
    pub oversample: usize,
    /// Leading periods discarded before the response is returned.
    pub transient_periods: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { oversample: 10, transient_periods: 1 }
    }
}

/// `front -> nl -> back`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhBranch {
    pub front: LtiSystem,
    pub nl: StaticNl,
    pub back: LtiSystem,
}

/// `y = forward (u - fb_back(nl(fb_front(y))))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLoop {
    pub forward: LtiSystem,
    #[serde(default = "LtiSystem::unity")]
    pub fb_front: LtiSystem,
    pub nl: StaticNl,
    #[serde(default = "LtiSystem::unity")]
    pub fb_back: LtiSystem,
}

/// `y = forward (u - gain * square_filter(u^2) * y)`: a linear forward path
/// whose feedback is multiplied by a low-passed square of the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XfbLoop {
    pub forward: LtiSystem,
    pub square_filter: LtiSystem,
    pub gain: f64,
}

impl XfbLoop {
    /// Behavioral stand-in for the multiplicative-feedback device: band-pass
    /// forward path (zero at DC) around 800 Hz and a 50 Hz second-order
    /// low-pass after the squarer.
    pub fn device_default() -> Self {
        let tau = std::f64::consts::TAU;
        XfbLoop {
            forward: LtiSystem::second_order_bandpass(tau * 800.0, 0.2, 1.0),
            square_filter: LtiSystem::second_order_lowpass(tau * 50.0, 0.707, 1.0),
            gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockModel {
    WienerHammerstein(WhBranch),
    ParallelWh(Vec<WhBranch>),
    NlFeedback(FeedbackLoop),
    MultiplicativeFeedback(XfbLoop),
}

/// Simulates with default oversampling and the given number of transient
/// periods.
pub fn simulate_block_model(
    model: &BlockModel,
    u: &SignalRealization,
    transient_periods: usize,
) -> Result<Vec<f64>> {
    let opts = SimOptions { transient_periods, ..SimOptions::default() };
    simulate_block_model_with(model, u, &opts)
}

pub fn simulate_block_model_with(
    model: &BlockModel,
    u: &SignalRealization,
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    simulate_samples(model, u.samples(), u.period_len(), u.spec().fs, opts)
}

/// Simulates a raw record of whole periods of length `n` sampled at `fs`.
pub fn simulate_samples(
    model: &BlockModel,
    x: &[f64],
    n: usize,
    fs: f64,
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    let periods = check_record(x, n, opts.transient_periods)?;
    match model {
        BlockModel::WienerHammerstein(b) => {
            let y = branch_response(b, x, n, fs)?;
            Ok(y[opts.transient_periods * n..].to_vec())
        }
        BlockModel::ParallelWh(branches) => {
            if branches.is_empty() {
                return Err(Error::invalid("parallel model needs at least one branch"));
            }
            let mut acc = vec![0.0; x.len()];
            for b in branches {
                for (a, v) in acc.iter_mut().zip(branch_response(b, x, n, fs)?) {
                    *a += v;
                }
            }
            Ok(acc.split_off(opts.transient_periods * n))
        }
        BlockModel::NlFeedback(l) => simulate_feedback(l, x, n, fs, periods, opts),
        BlockModel::MultiplicativeFeedback(l) => simulate_xfb(l, x, n, fs, periods, opts),
    }
}

pub(crate) fn check_record(x: &[f64], n: usize, transient: usize) -> Result<usize> {
    if n == 0 || !x.len().is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "record length {} is not a multiple of the period {n}",
            x.len()
        )));
    }
    let periods = x.len() / n;
    if periods < transient + 1 {
        return Err(Error::Dimension(format!(
            "record has {periods} periods, need at least {} (transient {transient} + 1)",
            transient + 1
        )));
    }
    Ok(periods)
}

fn branch_response(b: &WhBranch, x: &[f64], n: usize, fs: f64) -> Result<Vec<f64>> {
    let v = filter_periodic(&b.front, x, n, fs)?;
    let w = if b.nl.is_identity() { v } else { b.nl.apply(&v) };
    filter_periodic(&b.back, &w, n, fs)
}

/// Input resampled on the integration grid, one entry per distinct period.
pub(crate) struct UpsampledInput {
    periods: Vec<Vec<f64>>,
}

impl UpsampledInput {
    pub(crate) fn new(x: &[f64], n: usize, factor: usize) -> Self {
        let count = x.len() / n;
        let first = &x[..n];
        let periodic = (1..count).all(|p| &x[p * n..(p + 1) * n] == first);
        let periods = if periodic {
            vec![dsp::periodic_upsample(first, factor)]
        } else {
            (0..count)
                .map(|p| dsp::periodic_upsample(&x[p * n..(p + 1) * n], factor))
                .collect()
        };
        UpsampledInput { periods }
    }

    pub(crate) fn is_periodic(&self) -> bool {
        self.periods.len() == 1
    }

    pub(crate) fn period(&self, p: usize) -> &[f64] {
        &self.periods[p % self.periods.len()]
    }

    /// First fine sample of the period after `p`.
    pub(crate) fn next_start(&self, p: usize) -> f64 {
        let next = if self.is_periodic() { 0 } else { (p + 1).min(self.periods.len() - 1) };
        self.periods[next][0]
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn periodicity_defect(prev: Option<&Vec<f64>>, window: &VecDeque<Vec<f64>>) -> f64 {
    let seq: Vec<&Vec<f64>> = prev.into_iter().chain(window.iter()).collect();
    if seq.len() < 2 {
        return 0.0;
    }
    let scale = window.iter().map(|p| rms(p)).fold(0.0, f64::max);
    if scale == 0.0 {
        return seq
            .windows(2)
            .map(|w| rms(&w[1].iter().zip(w[0].iter()).map(|(a, b)| a - b).collect::<Vec<_>>()))
            .fold(0.0, f64::max);
    }
    seq.windows(2)
        .map(|w| {
            let d: Vec<f64> = w[1].iter().zip(w[0].iter()).map(|(a, b)| a - b).collect();
            rms(&d) / scale
        })
        .fold(0.0, f64::max)
}

/// Runs `run_period` over the record, discards the transient, and when the
/// input is periodic keeps integrating until consecutive retained periods
/// agree to [`STEADY_STATE_TOL`].
pub(crate) fn run_to_steady_state(
    periods: usize,
    transient: usize,
    periodic_input: bool,
    mut run_period: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut prev = None;
    for p in 0..transient {
        prev = Some(run_period(p)?);
    }
    let mut window: VecDeque<Vec<f64>> = VecDeque::with_capacity(periods - transient);
    for p in transient..periods {
        window.push_back(run_period(p)?);
    }
    if periodic_input {
        let mut defect = periodicity_defect(prev.as_ref(), &window);
        let mut best = defect;
        let mut stalled = 0;
        let mut next = periods;
        while defect > STEADY_STATE_TOL {
            if next - periods >= MAX_EXTRA_PERIODS || stalled >= 8 {
                return Err(Error::LoopDiverged(format!(
                    "no periodic steady state (period-to-period defect {defect:.3e})"
                )));
            }
            window.push_back(run_period(next)?);
            prev = window.pop_front();
            next += 1;
            defect = periodicity_defect(prev.as_ref(), &window);
            if defect < best {
                best = defect;
                stalled = 0;
            } else {
                stalled += 1;
            }
        }
    }
    Ok(window.into_iter().flatten().collect())
}

fn simulate_feedback(
    l: &FeedbackLoop,
    x: &[f64],
    n: usize,
    fs: f64,
    periods: usize,
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    let os = opts.oversample.max(1);
    let dt = 1.0 / (fs * os as f64);
    let input = UpsampledInput::new(x, n, os);
    let mut fwd = Df2t::new(DiscreteTf::bilinear(&l.forward, dt));
    let mut h1 = Df2t::new(DiscreteTf::bilinear(&l.fb_front, dt));
    let mut h2 = Df2t::new(DiscreteTf::bilinear(&l.fb_back, dt));
    let mut y_prev = 0.0;
    let mut step_index = 0usize;
    run_to_steady_state(periods, opts.transient_periods, input.is_periodic(), |p| {
        let up = input.period(p);
        let mut out = Vec::with_capacity(n);
        for (i, &u) in up.iter().enumerate() {
            let (bf, sf) = (fwd.direct(), fwd.offset());
            let (b1, s1) = (h1.direct(), h1.offset());
            let (b2, s2) = (h2.direct(), h2.offset());
            let mut y = y_prev;
            let mut converged = false;
            for _ in 0..NEWTON_MAX_ITERS {
                let w = b1 * y + s1;
                let r = y - bf * (u - b2 * l.nl.eval(w) - s2) - sf;
                let dr = 1.0 + bf * b2 * b1 * l.nl.derivative(w);
                let dy = r / dr;
                if !dy.is_finite() {
                    break;
                }
                y -= dy;
                if dy.abs() <= NEWTON_TOL * (1.0 + y.abs()) {
                    converged = true;
                    break;
                }
            }
            if !converged || !y.is_finite() {
                return Err(Error::LoopDiverged(format!(
                    "Newton iteration failed at step {step_index}"
                )));
            }
            let v = l.nl.eval(b1 * y + s1);
            let z = b2 * v + s2;
            fwd.step(u - z);
            h1.step(y);
            h2.step(v);
            y_prev = y;
            step_index += 1;
            if i % os == 0 {
                out.push(y);
            }
        }
        Ok(out)
    })
}

fn simulate_xfb(
    l: &XfbLoop,
    x: &[f64],
    n: usize,
    fs: f64,
    periods: usize,
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    let os = opts.oversample.max(1);
    let fs_fine = fs * os as f64;
    let dt = 1.0 / fs_fine;
    let input = UpsampledInput::new(x, n, os);
    let distinct = if input.is_periodic() { 1 } else { periods };
    let mut modulation = Vec::with_capacity(distinct);
    for p in 0..distinct {
        let sq: Vec<f64> = input.period(p).iter().map(|u| u * u).collect();
        modulation.push(filter_periodic(&l.square_filter, &sq, n * os, fs_fine)?);
    }
    let mut fwd = Df2t::new(DiscreteTf::bilinear(&l.forward, dt));
    run_to_steady_state(periods, opts.transient_periods, input.is_periodic(), |p| {
        let up = input.period(p);
        let w = &modulation[p % modulation.len()];
        let mut out = Vec::with_capacity(n);
        for (i, (&u, &wi)) in up.iter().zip(w).enumerate() {
            let bf = fwd.direct();
            let den = 1.0 + bf * l.gain * wi;
            let y = (bf * u + fwd.offset()) / den;
            if !y.is_finite() {
                return Err(Error::LoopDiverged("multiplicative loop is singular".into()));
            }
            fwd.step(u - l.gain * wi * y);
            if i % os == 0 {
                out.push(y);
            }
        }
        Ok(out)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{realize_multisine, MultisineSpec};

    fn excitation(dc: f64, std: f64, periods: usize) -> SignalRealization {
        let spec = MultisineSpec {
            n_samples: 256,
            fs: 256.0,
            excited_harmonics: (1..40).collect(),
            dc,
            std,
            seed: 11,
        };
        realize_multisine(&spec, periods).unwrap()
    }

    #[test]
    fn wh_with_identity_collapses_to_cascade() {
        let g1 = LtiSystem::first_order_lowpass(60.0);
        let g2 = LtiSystem::second_order_lowpass(150.0, 0.3, 2.0);
        let model = BlockModel::WienerHammerstein(WhBranch {
            front: g1.clone(),
            nl: StaticNl::identity(),
            back: g2.clone(),
        });
        let u = excitation(0.2, 1.0, 3);
        let y = simulate_block_model(&model, &u, 1).unwrap();
        let lin = filter_periodic(&g2.series(&g1), u.samples(), 256, 256.0).unwrap();
        assert_eq!(y.len(), 2 * 256);
        for (a, b) in y.iter().zip(&lin[256..]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_parallel_branches_double_output() {
        let b = WhBranch {
            front: LtiSystem::first_order_lowpass(80.0),
            nl: StaticNl::new(vec![0.0, 1.0, 0.3, 0.5]).unwrap(),
            back: LtiSystem::first_order_lowpass(200.0),
        };
        let u = excitation(0.1, 0.5, 2);
        let one = simulate_block_model(&BlockModel::WienerHammerstein(b.clone()), &u, 1).unwrap();
        let two = simulate_block_model(&BlockModel::ParallelWh(vec![b.clone(), b]), &u, 1).unwrap();
        for (a, b) in two.iter().zip(&one) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn linear_feedback_matches_closed_loop_transfer_function() {
        // forward G, unity feedback with gain k: Y = G / (1 + k G) U
        let g = LtiSystem::second_order_lowpass(2.0 * std::f64::consts::PI * 12.0, 0.4, 1.0);
        let k = 0.8;
        let model = BlockModel::NlFeedback(FeedbackLoop {
            forward: g.clone(),
            fb_front: LtiSystem::unity(),
            nl: StaticNl::new(vec![0.0, k]).unwrap(),
            fb_back: LtiSystem::unity(),
        });
        let u = excitation(0.0, 1.0, 3);
        let opts = SimOptions { oversample: 20, transient_periods: 1 };
        let y = simulate_block_model_with(&model, &u, &opts).unwrap();
        let uk = dsp::spectrum(u.period(0));
        let yk = dsp::spectrum(&y[..256]);
        for h in [1usize, 5, 12, 30] {
            let s = num_complex::Complex64::new(0.0, std::f64::consts::TAU * h as f64);
            let gcl = g.eval(s) / (1.0 + k * g.eval(s));
            let est = yk[h] / uk[h];
            assert!((est - gcl).norm() / gcl.norm() < 2e-3, "h={h} {est} {gcl}");
        }
    }

    #[test]
    fn too_few_periods_rejected() {
        let b = WhBranch {
            front: LtiSystem::unity(),
            nl: StaticNl::identity(),
            back: LtiSystem::unity(),
        };
        let u = excitation(0.0, 1.0, 1);
        assert!(matches!(
            simulate_block_model(&BlockModel::WienerHammerstein(b), &u, 1),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn unstable_feedback_reports_divergence() {
        // Positive feedback through a strong cubic drives the loop away.
        let model = BlockModel::NlFeedback(FeedbackLoop {
            forward: LtiSystem::first_order_lowpass(50.0),
            fb_front: LtiSystem::unity(),
            nl: StaticNl::new(vec![0.0, -3.0, 0.0, -5.0]).unwrap(),
            fb_back: LtiSystem::unity(),
        });
        let u = excitation(0.0, 1.0, 3);
        assert!(matches!(simulate_block_model(&model, &u, 1), Err(Error::LoopDiverged(_))));
    }

    #[test]
    fn xfb_runs_and_is_periodic() {
        let spec = MultisineSpec {
            n_samples: 2048,
            fs: 9770.0,
            excited_harmonics: (1..400).step_by(2).collect(),
            dc: 0.2,
            std: 0.5,
            seed: 5,
        };
        let u = realize_multisine(&spec, 3).unwrap();
        let model = BlockModel::MultiplicativeFeedback(XfbLoop::device_default());
        let y = simulate_block_model(&model, &u, 1).unwrap();
        let d: f64 = y[..2048].iter().zip(&y[2048..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-5);
    }
}
