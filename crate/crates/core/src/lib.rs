//! Cooperative carrier synchronization for multi-satellite reception of
//! short polar-coded BPSK bursts.
//!
//! Each satellite sees the same burst with its own frequency offset, phase
//! offset and noise. A cross-entropy search over quantized offsets gives a
//! coarse joint estimate ([`ice`]); a cooperative expectation-maximization
//! loop that decodes the coherently combined frame refines it ([`cem`]).

pub mod cem;
pub mod channel;
pub mod error;
pub mod ice;
pub mod metrics;
pub mod polar;
pub mod receiver;
pub mod softcombine;
pub mod txchain;

pub use error::{Error, Result};
