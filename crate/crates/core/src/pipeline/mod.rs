//! End-to-end pipelines behind the `bla-lab` binary: single experiment,
//! DC/STD sweep with structure detection, and CCD experiment design.

pub mod config;
pub mod io;
pub mod manifest;
mod run;

pub use config::{Axis, Mode, PipelineConfig};
pub use manifest::Artifacts;
pub use run::{
    measure_level, point_summary, run_design, run_single, run_sweep, with_jobs, DesignOutcome,
    DesignReport, LevelOutcome, PointSummary, SweepOutcome,
};
