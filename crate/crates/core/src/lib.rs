//! Online sound speed estimation from a single observation microphone
//! during multichannel playback, and sound zone control filters kept
//! matched to the estimated speed.
//!
//! - [`frames`]: boundary-exact frame convolution with tail buffers.
//! - [`sicer`]: sinc resampling of impulse responses to a new sound speed.
//! - [`roomsim`]: image-source room impulse responses.
//! - [`szc`]: VAST sound zone filter design.
//! - [`estimator`]: grid-search speed estimation and the filter controller.
//! - [`experiment`]: configuration, metrics and the closed-loop runner.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod error;
pub mod estimator;
pub mod experiment;
pub mod frames;
pub mod io;
pub mod ir;
pub mod roomsim;
pub mod sicer;
pub mod szc;

pub use error::{Error, Result};
pub use ir::{ImpulseResponse, IrBank};
