//! Few-shot detectors for a single rare bird species.
//!
//! The pipeline preprocesses field audio ([`audio`], [`preprocess`]),
//! estimates call statistics ([`analysis`]), finds candidate call events with
//! Morlet wavelet features ([`detect`]), embeds calls ([`embed`]), scores
//! embedding spaces with clustering indices ([`cluster`]) and classifies calls
//! by cosine similarity to species centroids ([`classify`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod annotations;
pub mod audio;
pub mod classify;
pub mod cluster;
pub mod config;
pub mod detect;
pub mod dsp;
pub mod embed;
pub mod error;
pub mod pipeline;
pub mod preprocess;
pub mod profile;
pub mod render;
pub mod synth;

pub use error::{BridgeError, Error, Result};
