//! Finite-stage Fraïssé constructions for finite-dimensional real normed
//! spaces, function systems and matrix states.
//!
//! Every space carries an explicit finite norming family, so norms,
//! operator norms and distortions reduce to linear programs. The crate is
//! `no_std` and only needs `alloc`.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod amalgamation;
pub mod certificate;
pub mod error;
pub mod function_systems;
pub mod limit_builder;
pub mod linalg;
pub mod lp;
pub mod matrix_states;
pub mod normed_core;
pub mod real;
pub mod sample;
pub mod universal_maps;

mod assign;

pub use certificate::{Certificate, Witness};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lp::LpEngine;
pub use normed_core::{LinearMap, MarkedSpace, Modulus, NormedSpace};

/// Default numerical tolerance for feasibility and isometry checks.
pub const TOL: f64 = 1e-9;
