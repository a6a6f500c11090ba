//! fundascreen: a desk-scale pipeline for predicting hemoglobin levels and
//! anemia from retinal fundus images.
//!
//! The crate generates a synthetic patient cohort whose fundus images carry a
//! plantable, tunable hemoglobin signal, trains three predictor families on it
//! (metadata-only baselines, fundus-only conv nets, and late-fusion combined
//! nets), evaluates them with clinically standard statistics (MAE, R², AUC,
//! sensitivity at fixed specificity, bootstrap confidence intervals), and runs
//! a masking/blur ablation harness that locates where in the image the
//! predictive signal lives.
//!
//! Everything is deterministic given a root seed: cohort sampling, rendering,
//! training, bootstrap resampling, and the ablation grid all draw from named
//! substreams derived from it.

pub mod ablation;
pub mod cli;
pub mod cohort;
pub mod error;
pub mod image;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod synthgen;
pub mod tensornet;

pub use error::{Error, Result};
