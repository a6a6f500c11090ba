//! Input ablations and the grid harness that measures their cost.
//!
//! An [`AblationSpec`] names a deterministic image transform: masking a
//! horizontal stripe or band pair, masking inside or outside a centered
//! circle of prescribed area, or Gaussian blur whose sigma is expressed at a
//! reference resolution and rescaled to the actual image side. Masked pixels
//! are overwritten with [`MASK_FILL`], the mid-gray that maps to zero in
//! network input space.
//!
//! [`run_ablation_grid`] trains fresh fundus-only members under each
//! transform and scores them on identically transformed validation eyes, so
//! an arm's AUC drop reflects the information the region carried rather than
//! a train/test mismatch. The untransformed `none` arm anchors the deltas;
//! per-arm spec hashes tie the training and evaluation phases together.

mod blur;
mod grid;
mod mask;

pub use blur::{effective_sigma, gaussian_blur, REFERENCE_SIDE};
pub use grid::{
    eval_arm, read_ablation_summary_csv, run_ablation_grid, spec_hash, train_arm,
    write_ablation_csv, write_ablation_summary_csv, write_phase_manifest, AblationReport,
    ArmResult, GridOptions, TrainedArm, ABLATION_HEADER, ABLATION_SUMMARY_HEADER,
};
pub use mask::{masked_fraction, parse_grid, AblationSpec, MASK_FILL};
