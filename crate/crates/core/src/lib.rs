//! Latent prototype toolkit.
//!
//! Trains small neural networks on dual-modality image samples, taps a
//! late layer as a latent vector, condenses latents into labeled cluster
//! centers and classifies new inputs by nearest center. On top of that
//! sit chained training (a second network fed with the first one's
//! latents), merging of prototype sets into a single predictor and a
//! prototype-guided loss for networks that only see the weak modality.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configs
//! and the command line live in the `protolatent` companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod adapt;
pub mod cluster;
pub mod data;
mod error;
pub mod net;
pub mod proto;
pub mod rng;
pub mod tensor;
pub mod transfer;

pub use error::{Error, Result};
pub use tensor::Tensor;
