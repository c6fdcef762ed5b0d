//! Toolkit for fine-grained subjective quality studies of high-fidelity
//! compressed images.
//!
//! The crate covers the whole chain: boosted stimulus preparation
//! ([`boost`]), triplet-question designs ([`design`]), a crowdsourcing
//! service ([`service`]), a synthetic observer ([`sim`]) and the scale
//! analysis ([`analysis`]) that turns responses into impairment scales in
//! JND units with bootstrap confidence intervals.

pub mod analysis;
pub mod boost;
pub mod design;
pub mod error;
pub mod pipeline;
pub mod raster;
pub mod responses;
pub mod service;
pub mod sim;
pub mod stimulus;

pub use error::{Error, Result};
