//! System simulators: LTI blocks, block-oriented nonlinear models and the two
//! device stand-ins (nonlinear mass-spring-damper, multiplicative feedback).

mod block;
mod discrete;
mod lti;
mod msd;
mod noise;
mod static_nl;

use serde::{Deserialize, Serialize};

pub use block::{
    simulate_block_model, simulate_block_model_with, simulate_samples, BlockModel, FeedbackLoop,
    SimOptions, WhBranch, XfbLoop, STEADY_STATE_TOL,
};
pub use lti::{filter_periodic, lti_response, LtiSystem};
pub use msd::{simulate_nl_msd, simulate_nl_msd_samples, NlMsdParams, BLOWUP_LIMIT};
pub use noise::add_noise;
pub use static_nl::{gaussian_moment, StaticNl, MAX_DEGREE};

use crate::error::Result;

/// Declarative model description, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemModel {
    Lti(LtiSystem),
    WienerHammerstein(WhBranch),
    ParallelWh { branches: Vec<WhBranch> },
    NlFeedback(FeedbackLoop),
    NlXfb(XfbOverrides),
    NlMsd(MsdOverrides),
}

/// NL-MSD parameters; omitted fields take the device defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsdOverrides {
    pub m: Option<f64>,
    pub d: Option<f64>,
    pub k1: Option<f64>,
    pub k3: Option<f64>,
}

impl MsdOverrides {
    pub fn resolve(&self) -> NlMsdParams {
        let def = NlMsdParams::device_default();
        NlMsdParams {
            m: self.m.unwrap_or(def.m),
            d: self.d.unwrap_or(def.d),
            k1: self.k1.unwrap_or(def.k1),
            k3: self.k3.unwrap_or(def.k3),
        }
    }
}

/// Multiplicative-feedback blocks; omitted fields take the device defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct XfbOverrides {
    pub forward: Option<LtiSystem>,
    pub square_filter: Option<LtiSystem>,
    pub gain: Option<f64>,
}

impl XfbOverrides {
    pub fn resolve(&self) -> XfbLoop {
        let def = XfbLoop::device_default();
        XfbLoop {
            forward: self.forward.clone().unwrap_or(def.forward),
            square_filter: self.square_filter.clone().unwrap_or(def.square_filter),
            gain: self.gain.unwrap_or(def.gain),
        }
    }
}

impl SystemModel {
    /// Simulates a record of whole periods of length `n`; the first
    /// `opts.transient_periods` periods are dropped from the output.
    pub fn simulate(&self, x: &[f64], n: usize, fs: f64, opts: &SimOptions) -> Result<Vec<f64>> {
        match self {
            SystemModel::Lti(g) => {
                block::check_record(x, n, opts.transient_periods)?;
                let y = filter_periodic(g, x, n, fs)?;
                Ok(y[opts.transient_periods * n..].to_vec())
            }
            SystemModel::WienerHammerstein(b) => {
                simulate_samples(&BlockModel::WienerHammerstein(b.clone()), x, n, fs, opts)
            }
            SystemModel::ParallelWh { branches } => {
                simulate_samples(&BlockModel::ParallelWh(branches.clone()), x, n, fs, opts)
            }
            SystemModel::NlFeedback(l) => {
                simulate_samples(&BlockModel::NlFeedback(l.clone()), x, n, fs, opts)
            }
            SystemModel::NlXfb(o) => {
                simulate_samples(&BlockModel::MultiplicativeFeedback(o.resolve()), x, n, fs, opts)
            }
            SystemModel::NlMsd(o) => simulate_nl_msd_samples(&o.resolve(), x, n, fs, opts),
        }
    }
}

/// Model file contents: the model plus optional simulation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(flatten)]
    pub model: SystemModel,
    #[serde(default)]
    pub sim: SimOptions,
}
