//! Data model for patients and visits, anemia labels, the stratified split,
//! feature standardization, and the on-disk manifest format.

mod labels;
mod manifest;
mod split;
mod standardize;
mod types;
mod views;

pub use labels::{classify_anemia, AnemiaLabels, Severity};
pub use manifest::{read_manifest, write_manifest, MANIFEST_HEADER};
pub use split::{read_split, stratified_split, write_split, Split, SplitAssignment};
pub use standardize::Standardizer;
pub use types::{Ethnicity, Eye, EyeImage, PatientRecord, Sex, Visit, NUMERIC_METADATA_NAMES};
pub use views::{first_visit_view, is_eligible, multi_visit_pairs};
