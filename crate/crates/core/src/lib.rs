//! Seedable simulator for BB84, B92 and EPR quantum key distribution.
//!
//! Photons are explicit complex state vectors; every measurement is a single
//! draw from a per-actor ChaCha stream, so a session is a pure function of
//! its configuration and seed.

pub mod alphabets;
pub mod channel;
pub mod eavesdrop;
pub mod error;
pub mod hilbert;
pub mod nogo;
pub mod postprocess;
pub mod protocols;
pub mod rng;

pub use error::{Error, Result};
