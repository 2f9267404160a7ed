//! Automotive FMCW radar interference simulation and mitigation.

pub mod config;
pub mod coordmac;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod dsv;
pub mod fmcw;
pub mod interference;
pub mod netgeom;
pub mod ofdm;
pub mod quad;
pub mod rng;
pub mod scenario;
pub mod slowchirp;
pub mod units;

pub use error::{Error, Result};
