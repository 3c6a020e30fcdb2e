//! Control-aware semantic image transmission for lunar landing.
//!
//! Synthetic terrain and camera rendering, a sparsifying token codec and a
//! DCT baseline, a Rician link model, compute/transmission timing and energy
//! analytics, and a POMDP lander with a tabular Q-learning controller.

pub mod baseline;
pub mod bits;
pub mod channel;
pub mod codec;
pub mod error;
pub mod experiments;
pub mod lander;
pub mod latency;
pub mod metrics;
pub mod pgm;
pub mod quadrature;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
