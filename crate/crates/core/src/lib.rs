//! Toolkit for measuring the best linear approximation (BLA) of nonlinear
//! systems with random-phase multisines.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`signal`] builds and realizes multisine excitations,
//! * [`sysmodels`] simulates block-oriented systems and the mass-spring-damper
//!   and multiplicative-feedback devices,
//! * [`experiment`] runs simulated M x P measurements,
//! * [`bla`] implements the robust BLA estimator and its distortion split,
//! * [`ratfit`] fits rational transfer functions and extracts poles and zeros,
//! * [`structdetect`] classifies the block structure from pole/zero movement,
//! * [`ccd`] designs DC/STD experiments with a central composite design,
//! * [`pipeline`] wires everything together for the `bla-lab` binary.

pub mod bla;
pub mod ccd;
pub mod dsp;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod poly;
pub mod ratfit;
pub mod seed;
pub mod signal;
pub mod structdetect;
pub mod sysmodels;

pub use error::{Error, Result};
pub use num_complex::Complex64;
