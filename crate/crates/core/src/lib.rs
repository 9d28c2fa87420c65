//! Vibro-tactile perception through held objects.
//!
//! Spike-stream and analog sensor models, the four feature families
//! (binned counts, FFT magnitudes, autoencoder codes, event spike tensors),
//! from-scratch learners (SMO support-vector machines, MLP, GRU), the
//! repeated split / grid-search evaluation protocol, and a rod-vibration
//! simulator used as data generator and oracle.

pub mod cli;
pub mod error;
pub mod features;
pub mod harness;
pub mod learn;
pub mod model;
pub mod nn;
pub mod simulate;

pub use error::{Error, Result};
