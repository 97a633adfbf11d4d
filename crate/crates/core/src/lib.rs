//! Full-duplex mm-wave transceiver analysis.
//!
//! The crate has two halves that are meant to be checked against each other:
//!
//! * [`budget`] is a closed-form link-budget solver working purely in dB/dBm.
//!   It derives the uplink PA output requirement and the four
//!   self-interference-cancellation (SIC) depths of the UE receiver, and it
//!   produces an analytic per-node power track.
//! * [`waveform`], [`blocks`] and [`chain`] simulate the same transceiver at
//!   complex baseband with an OFDM 64-QAM signal: nonlinear amplifiers,
//!   noise, cancellers and an ADC, measuring EVM and per-node component
//!   powers.
//!
//! Monte-Carlo frames run on rayon when the `parallel` feature is enabled
//! (the default); see [`exec`].

pub mod blocks;
pub mod budget;
pub mod chain;
mod error;
pub mod exec;
pub mod waveform;

pub use error::{Error, Result};
