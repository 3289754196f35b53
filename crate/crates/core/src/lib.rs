//! Canard cycles of slow-fast systems on the two-torus.
//!
//! The crate is organised bottom-up: [`system`] holds the vector field, its
//! fold points and the genericity checks, [`flow`] integrates transits
//! between horizontal sections together with their log-Jacobians,
//! [`retmap`] builds the Poincare map and its landmarks, [`windows`] locates
//! the parameter windows where canard cycles exist, and [`wayinout`] holds
//! the slow-manifold asymptotics.

// `!(x > 0.0)` is used on purpose so that NaN fails positivity checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod flow;
pub mod numerics;
pub mod retmap;
pub mod system;
pub mod wayinout;
pub mod windows;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use flow::{transit, IntegratorConfig, TransitResult};
pub use system::{
    CosineOval, Jet, LiftedPoint, Offsets, SectionGeometry, SlowFastSystem, TorusModel, TorusPoint, ValidationReport,
};
