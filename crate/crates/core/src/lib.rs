#![cfg_attr(not(any(feature = "std", test)), no_std)]
//! Spike-and-slab panel data models: closed-form means model, Gibbs samplers
//! for the dynamic panel (M1) and state-space (M2) models, Monte Carlo risk
//! experiments and forecast evaluation.

extern crate alloc;

pub mod blocks;
pub mod chain;
pub mod distributions;
pub mod error;
pub mod forecast;
pub mod linalg;
pub mod m1;
pub mod m2;
pub mod math;
pub mod mc;
pub mod means;
pub mod panel;
pub mod rng;

pub use chain::ChainOutput;
pub use error::{Error, Result};
pub use panel::PanelData;
pub use rng::RngStream;

pub use nalgebra;
pub use rand;
