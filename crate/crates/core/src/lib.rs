//! Design and simulation kernels for interferometric mass spectrometry.
//!
//! A multi-path matter-wave interferometer sorts mass species into separate
//! output ports when every path length difference puts each species on the
//! right phase lattice. This crate solves those sorting conditions, models
//! the sorter as a mass-controlled shift gate between two qudits, propagates
//! path-length fluctuations into channel leakage, and simulates counting
//! experiments end to end.
//!
//! Module map:
//!
//! - [`qudit`]: dense gate matrices (DFT coupler, controlled-Z, controlled-X).
//! - [`sorter`]: de Broglie kinematics, two-species and N-path design solvers,
//!   coupler geometry, tolerance budget.
//! - [`error_model`]: phase errors, imperfect gates, leakage matrices and the
//!   closed-form three-species amplitudes.
//! - [`spectrometry`]: counting simulation, spectrum unfolding and the
//!   magnetic-sector reference formulas.

pub mod constants;
pub mod error;
pub mod error_model;
pub mod qudit;
pub mod rational;
pub mod sorter;
pub mod spectrometry;

pub use error::{Error, Result};
