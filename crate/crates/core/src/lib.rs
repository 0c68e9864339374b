//! Simulation of spatially structured networks of jump-diffusion delay
//! equations and of their McKean–Vlasov mean-field limits.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over small fixed dimensions read closer to the formulas.
#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod chaos;
pub mod config;
pub mod disorder;
pub mod error;
pub mod grid;
pub mod hypothesis;
pub mod layout;
pub mod meanfield;
pub mod model;
pub mod network;
pub mod noise;
pub mod presets;
pub mod sdde;
pub mod stats;

pub use error::{Error, Result};
