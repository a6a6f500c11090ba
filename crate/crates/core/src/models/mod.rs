//! Model families and the training pipeline.
//!
//! Three families cover the modality ablation: `metadata_only` fits
//! closed-form baselines (ridge-stabilized least squares, logistic
//! regression), `fundus_only` trains a small convolutional ensemble on eye
//! images, and `combined` fuses standardized metadata into the conv net after
//! global average pooling. Tasks are either regression on CBC panel targets
//! or binary classification against a hemoglobin cutoff.
//!
//! Ensemble members train independently from named substreams of the root
//! seed, so results are reproducible bit for bit. Predictions aggregate
//! member outputs per eye, then eyes per patient; classification averages
//! probabilities, never logits. The tuning split drives early stopping, the
//! validation split is touched only at prediction time, and each member's
//! training log records the patient ids it consumed so that isolation is
//! checkable after the fact.

mod baseline;
mod data;
pub(crate) mod pipeline;
mod predict;
mod task;
mod train;

pub use baseline::{
    fit_metadata_logistic, fit_metadata_regression, predict_linear, predict_logistic,
    LinearModel, LogisticModel, RIDGE_EPS,
};
pub use data::{
    first_eligible_visit, image_to_input, load_examples, metadata_columns,
    metadata_feature_names, metadata_features, ExampleTarget, TrainExample,
};
pub use pipeline::{
    read_predictions_csv, read_visit_predictions_csv, train_pipeline, write_predictions_csv,
    write_visit_predictions_csv, PredictionRow, TrainOptions, TrainOutcome, PREDICTIONS_HEADER,
    SPLIT_FILE, VISIT_PREDICTIONS_HEADER,
};
pub use predict::{
    load_bundle, save_bundle, softmax, BaselineParams, BundleMeta, EyePrediction, ModelBundle,
    NetArch, PatientPrediction, BUNDLE_FILE,
};
pub use task::{Family, TaskSpec, CLASSIFICATION_TARGETS};
pub use train::{
    apply_named_params, build_network, default_layer_specs, train_member, ImageTransform,
    TrainContext, TrainLog, TrainedMember,
};
