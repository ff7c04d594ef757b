//! Self-supervised test-time adaptation for video super-resolution.
//!
//! A small multi-frame SR network is pre-trained on synthetic clips, then
//! fine-tuned on a test clip using pseudo pairs cut from its own initial
//! restorations ([`adapt::self_adapt`]), or a small student is fine-tuned on
//! a frozen teacher's restorations ([`adapt::distill_adapt`]).

// Checks are written as `!(a < b)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod checkpoint;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pseudo;
pub mod resample;
pub mod synth;
pub mod video;

pub use error::{Error, Result};
