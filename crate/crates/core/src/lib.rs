//! Numerical laboratory for singularity analysis of incompressible
//! Navier-Stokes flow on the torus.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod report;
pub mod cone;
pub mod config;
pub mod dynamics;
pub mod flows;
pub mod heat;
pub mod leray;
pub mod rescale;
pub mod singularity;
pub mod snapshot;
pub mod spectral;

pub use error::{Error, Result};
