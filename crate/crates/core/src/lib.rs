//! Spin-electric Berry phases of the chiral qubit in triangular
//! antiferromagnetic molecular magnets.
//!
//! The crate contains the exact three-spin model ([`spin_full`]), the
//! four-level chiral ⊗ spin model ([`effective_model`]), a unitary
//! time-propagation engine ([`propagation`]), Berry/dynamical phase
//! extraction ([`berry_engine`]), the spin-echo compound sequence
//! ([`echo_sequencer`]) and batch drivers for sweeps and validation
//! ([`cli_sweep`]).
//!
//! Units throughout: meV for energies, ps for times, radians for angles.

pub mod berry_engine;
pub mod cli_sweep;
pub mod echo_sequencer;
pub mod effective_model;
pub mod error;
pub mod linalg;
pub mod params;
pub mod propagation;
pub mod spin_full;

pub use error::{Error, Result};
pub use params::{ModelParams, HBAR};
