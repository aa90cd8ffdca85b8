//! Noisy discrete-time quantum walks and witnesses of non-Markovian
//! dephasing.
//!
//! The crate is organised bottom-up: [`qops`] holds the linear algebra,
//! [`walk`] and [`noise`] build the dynamics, [`divisibility`] analyses the
//! intermediate maps, [`witness`] evaluates correlation and
//! distinguishability measures along a walk, and [`spectral`] separates
//! slow backflow from position-induced oscillations.

pub mod divisibility;
pub mod error;
pub mod noise;
pub mod par;
pub mod qops;
pub mod spectral;
pub mod walk;
pub mod witness;

pub use error::{Error, Result};
pub use noise::NoiseModel;
pub use par::Exec;
pub use spectral::{MfbfFamily, TimeSeries};
pub use walk::{EvolutionMode, WalkConfig};
pub use witness::{WitnessKind, WitnessSeries};
