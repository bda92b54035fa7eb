//! Simulation of Micro–Macro entanglement produced by a quantum-injected
//! optical parametric amplifier: the amplified Macro-states, their photon
//! statistics, lossy detection with the Orthogonality Filter, and the
//! separability witness built from the measured visibilities.

pub mod concurrence;
pub mod dense;
pub mod detection;
pub mod error;
pub mod experiment;
pub mod gain;
pub mod logspace;
pub mod macrostate;
pub mod oracle;
pub mod sampling;
pub mod stats;

pub use error::{Error, Result};
pub use gain::GainParams;
pub use macrostate::{EquatorialBasis, FockOccupation, MacroLabel};
