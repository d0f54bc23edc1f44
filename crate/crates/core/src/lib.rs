//! Rotational dynamics of polar asymmetric-top molecules in parallel DC and
//! non-resonant laser fields.
//!
//! The crate builds symmetry-adapted rigid-rotor bases, assembles the rotor
//! Hamiltonian and the angular coupling operators, diagonalizes frozen-field
//! Hamiltonians to obtain adiabatic (pendular) states and propagates the
//! time-dependent Schrödinger equation through a Gaussian laser pulse with a
//! short iterative Lanczos integrator.
//!
//! ```no_run
//! use rotodyn::basis::{Parity, SymmetryBlock};
//! use rotodyn::dynamics::{run, RunConfig};
//! use rotodyn::units::{MoleculeSpec, PulseSpec};
//!
//! let config = RunConfig::new(
//!     MoleculeSpec::benzonitrile(),
//!     SymmetryBlock::m0(Parity::Even, Parity::Even),
//!     "0_00_0".parse()?,
//!     300.0,
//!     PulseSpec::new(7e11, 1.0)?,
//! )?;
//! let trajectory = run(&config)?;
//! println!("<cos theta> at the peak: {:.3}", trajectory.last().cos_theta);
//! # Ok::<(), rotodyn::Error>(())
//! ```

// Negated comparisons reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod dynamics;
pub mod error;
pub mod operators;
pub mod oracle;
pub mod propagator;
pub mod sparse;
pub mod spectrum;
pub mod units;
pub mod wigner;

pub use error::{Error, Result};
