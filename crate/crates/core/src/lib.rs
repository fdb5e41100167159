//! Weighted sum-rate beamforming for multicell MU-MIMO downlinks.
//!
//! The crate provides the classical WMMSE block-coordinate-descent solver, the
//! GCN-WMMSE unrolled network built on top of it, a derivative-free trainer for
//! the network parameters, scenario generation and an experiment harness.
//!
//! All numerical code is generic over the real scalar type ([`Real`], i.e.
//! `f32` or `f64`). The aliases at the crate root fix the scalar to `f64`,
//! which is what the trainer, the harness and the file formats use.

pub mod error;
pub mod harness;
pub mod numerics;
pub mod scalar;
pub mod rates;
pub mod scenario;
pub mod training;
pub mod unrolled;
pub mod wmmse;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Matrix = numerics::ComplexMatrix<f64>;
pub type Matrix32 = numerics::ComplexMatrix<f32>;
pub type Realization = scenario::ScenarioRealization<f64>;
pub type Beamformers = rates::BeamformerSet<f64>;
pub type Trajectory = wmmse::SolverTrajectory<f64>;
pub type Params = unrolled::ParameterSet<f64>;
pub type PgdParams = unrolled::PgdParameterSet<f64>;
