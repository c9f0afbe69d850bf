//! Modulating-function state estimation and feedback for linear systems.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod heat;
pub mod io;
pub mod lti;
pub mod pair;
pub mod signal;
pub mod wave;

pub use engine::{
    estimate_functional, estimate_series, run_closed_loop, Estimator, FeedbackRealizer, LtiPlant, Plant,
    Reconstruction,
};
pub use error::{Error, Result};
pub use lti::{adjoint_null_control, observability_gramian, simulate, LtiSystem, Trajectory};
pub use pair::{ModulatingPair, Target};
pub use signal::{convolve_impulsive, convolve_sampled, ImpulsiveSignal, SampledSignal, SignalBuffer};
