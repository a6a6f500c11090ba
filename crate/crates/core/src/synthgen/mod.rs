//! Synthetic cohort generator. Samples patient records with a controllable
//! hemoglobin signal, renders fundus-like images that encode it, and
//! reads/writes the dataset directory layout.

mod config;
mod dataset;
mod render;
mod sample;

pub use config::GeneratorConfig;
pub use dataset::{read_dataset, read_latents, write_dataset, GeneratorSidecar, SIDECAR_FILE};
pub use render::{
    disc_rim_energy, mean_brightness, render_fundus, render_fundus_with_masks,
    signal_energy_split, stripe_bounds, vessel_contrast, RenderMasks,
};
pub use sample::{sample_cohort, SampledCohort, StoredLatent, VisitLatent};
