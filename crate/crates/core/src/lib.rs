//! Simulation and analysis toolkit for double-modulation ODMR in flowing
//! microdroplets.
//!
//! The library synthesizes photoluminescence traces in which a droplet train
//! (rate `f_D`) and a microwave amplitude modulation (rate `f_MW`) are
//! imprinted multiplicatively, then recovers the ODMR contrast ratiometrically
//! from windowed Fourier amplitudes at `f_D`, `f_MW`, and the `f_MW ± f_D`
//! sidebands. Supporting modules provide a conventional single lock-in
//! baseline, Allan-deviation stability analytics, intra-droplet Brownian
//! kinetics, and titration / limit-of-detection pipelines.
//!
//! Everything stochastic draws from substreams of one master seed, so any
//! result is reproducible bit-for-bit, with or without the `parallel` feature.

pub mod brownian;
pub mod config;
pub mod dsp;
pub mod duallock;
pub mod error;
pub mod exec;
mod fit;
pub mod formats;
pub mod lockin;
pub mod reference;
pub mod rng;
pub mod series;
pub mod stability;
pub mod synth;
pub mod titration;

pub use error::{Error, Result};
