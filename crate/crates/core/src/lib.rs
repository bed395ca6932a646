//! Personalised EEG authentication.
//!
//! The pipeline goes from raw three-channel recordings to a per-user
//! classifier. Each stage lives in its own module:
//!
//! * [`signal`]: recordings, zero-phase band-pass filtering, random 4 s segmentation
//! * [`features`]: Welch PSD and the 15 band-power features (3 channels x 5 bands)
//! * [`synth`]: seeded synthetic cohorts with known spectral targets
//! * [`dataset`]: balanced genuine/impostor datasets and stratified folds
//! * [`classifiers`]: the learner zoo and the versioned model envelope
//! * [`autoselect`]: time-budgeted algorithm + hyperparameter search
//! * [`evaluation`]: confusion metrics, kappa, cohort reports, significance tests
//! * [`pipeline`]: cohort-level orchestration shared by the CLI and the tests
//!
//! Data-parallel loops go through [`exec::ExecMode`]. With the `parallel`
//! feature (on by default) they run on rayon; without it every mode runs
//! sequentially and produces identical results.

pub mod autoselect;
pub mod classifiers;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod features;
mod linalg;
pub mod pipeline;
pub mod seed;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
pub use exec::ExecMode;
