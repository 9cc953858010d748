//! Event-related potential decoding without the standard library.
//!
//! The crate covers the numerical side of a P300 oddball decoder:
//!
//! - [`sigproc`]: windowed-sinc FIR design, zero-phase filtering, integer decimation
//!   and stimulus-locked epoch extraction.
//! - [`nn`]: a spatial + two-stage temporal convolutional network with a single
//!   sigmoid output, exact backpropagation, SGD and a finite-difference checker.
//! - [`ensemble`]: the balanced-partition ensemble. Non-target epochs are split into
//!   groups, each group is paired with the full target set, and per-group gradients
//!   are averaged before every update.
//! - [`eval`]: rank AUC, ROC curves, paired t-tests and grand averages.
//! - [`synth`]: a deterministic oddball-paradigm generator used for testing.
//!
//! Everything here needs only `alloc`. File formats and the command-line driver
//! live in the companion `erp` crate.
#![cfg_attr(all(not(feature = "std"), not(test)), no_std)]

extern crate alloc;

pub mod ensemble;
mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod signal;
pub mod sigproc;
pub mod synth;

pub use error::{Error, Result};
pub use signal::{ContinuousRecording, EpochSet, Event, EventList, Label, Montage};
