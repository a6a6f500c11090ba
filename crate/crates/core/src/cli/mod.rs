//! Command-line front end binding the pipeline together.
//!
//! Six subcommands cover the workflow: `synth` renders a dataset, `split`
//! assigns patients to train/tune/validation, `train` fits one family on one
//! task and writes its bundle plus validation predictions, `eval` scores a
//! predictions file with bootstrap confidence intervals, `ablate` runs a
//! masking/blur grid, and `report` consolidates a run directory into
//! plot-ready tables.
//!
//! Configuration merges three layers, last writer wins: defaults, a JSON
//! config file (or the `resolved_config.json` left in the directory by an
//! earlier command), then command-line flags. The fully resolved result is
//! serialized into every output directory, so each one records exactly what
//! produced it. One root seed — from `--seed`, the config, or the
//! `FUNDASCREEN_SEED` environment fallback — feeds every random stream by
//! named derivation, which makes whole runs reproducible bit for bit.
//!
//! Failures exit nonzero after printing a single machine-parsable
//! `ERROR:<code>:` line on stderr.

mod commands;
mod config;
mod evaluate;

pub use commands::run;
pub use config::{RunConfig, RESOLVED_CONFIG_FILE, SEED_ENV};
pub use evaluate::{AGREEMENT_HEADER, AUC_HEADER, SENSITIVITY_HEADER};
