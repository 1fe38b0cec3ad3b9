//! Generative-prior downlink channel estimation for FDD massive MIMO.
//!
//! A mode-regularized GAN learns the distribution of frequency-independent
//! path parameters (gain, delay, angle). Uplink pilots are then fitted by
//! least squares in the generator's latent space, and the per-path downlink
//! phases by least squares on a short downlink pilot.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod channel;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod gan;
pub mod linalg;
pub mod nn;

pub use error::{Error, Result};
