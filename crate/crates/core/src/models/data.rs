use std::path::Path;
use std::sync::Arc;

use crate::cohort::{
    is_eligible, PatientRecord, Standardizer, Visit, NUMERIC_METADATA_NAMES,
};
use crate::error::{Error, Result};
use crate::image::FundusImage;
use crate::models::task::TaskSpec;

/// Metadata feature layout fed to baselines and the combined family: the
/// nine numeric fields plus a one-hot ethnicity block.
pub fn metadata_feature_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = NUMERIC_METADATA_NAMES.to_vec();
    names.extend(["eth_white", "eth_black", "eth_asian", "eth_other"]);
    names
}

pub fn metadata_features(patient: &PatientRecord) -> Vec<f64> {
    let mut row = patient.numeric_metadata().to_vec();
    for eth in crate::cohort::Ethnicity::ALL {
        row.push(if patient.ethnicity == eth { 1.0 } else { 0.0 });
    }
    row
}

/// Column-major metadata matrix, for fitting a [`Standardizer`].
pub fn metadata_columns(patients: &[&PatientRecord]) -> Vec<Vec<f64>> {
    let width = metadata_feature_names().len();
    let mut columns = vec![Vec::with_capacity(patients.len()); width];
    for p in patients {
        for (col, v) in columns.iter_mut().zip(metadata_features(p)) {
            col.push(v);
        }
    }
    columns
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExampleTarget {
    Class(usize),
    /// Regression targets, standardized when a target scaler is supplied.
    Values(Vec<f64>),
}

/// One per-eye training or evaluation example for the net families.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub patient_id: String,
    pub image: Arc<FundusImage>,
    pub side: Option<Vec<f64>>,
    pub target: ExampleTarget,
}

pub fn first_eligible_visit(patient: &PatientRecord) -> Result<&Visit> {
    patient
        .visits
        .iter()
        .find(|v| is_eligible(v))
        .ok_or_else(|| {
            Error::MissingInput(format!(
                "patient {} has no visit with both an image and an hb value",
                patient.patient_id
            ))
        })
}

/// Build per-eye examples for a set of patients, one per image of each
/// patient's first eligible visit. Images stay in [0,1]; the input shift
/// happens at the network boundary.
pub fn load_examples(
    data_dir: &Path,
    patients: &[&PatientRecord],
    task: &TaskSpec,
    meta_std: Option<&Standardizer>,
    target_std: Option<&Standardizer>,
) -> Result<Vec<TrainExample>> {
    let mut examples = Vec::new();
    for patient in patients {
        let visit = first_eligible_visit(patient)?;
        let target = if task.is_classification() {
            ExampleTarget::Class(task.class_of(patient, visit)?)
        } else {
            let raw = task.target_values(visit)?;
            ExampleTarget::Values(match target_std {
                Some(std) => std.apply(&raw)?,
                None => raw,
            })
        };
        let side = match meta_std {
            Some(std) => Some(std.apply(&metadata_features(patient))?),
            None => None,
        };
        for eye in &visit.eyes {
            let image = Arc::new(FundusImage::read_ppm(&data_dir.join(&eye.image_path))?);
            examples.push(TrainExample {
                patient_id: patient.patient_id.clone(),
                image,
                side: side.clone(),
                target: target.clone(),
            });
        }
    }
    Ok(examples)
}

/// Flatten an image into the network's input space: planar RGB shifted to
/// [-0.5, 0.5].
pub fn image_to_input(image: &FundusImage) -> Vec<f64> {
    image.data().iter().map(|v| v - 0.5).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Ethnicity, Eye, EyeImage, Sex};
    
    use tempfile::tempdir;

    fn patient(id: &str, hb: f64, n_eyes: usize) -> PatientRecord {
        let eyes = [Eye::Left, Eye::Right][..n_eyes]
            .iter()
            .map(|&eye| EyeImage {
                eye,
                image_path: format!("images/{id}-{}.ppm", eye.as_str()).into(),
            })
            .collect();
        PatientRecord {
            patient_id: id.to_string(),
            sex: Sex::Female,
            age: 60.0,
            ethnicity: Ethnicity::Asian,
            smoker: true,
            sbp: 140.0,
            dbp: 85.0,
            pulse: 72.0,
            height: 160.0,
            weight: 64.0,
            bmi: 25.0,
            visits: vec![Visit {
                visit_id: format!("{id}-v0"),
                visit_index: 0,
                hb: Some(hb),
                hct: Some(2.94 * hb),
                rbc: Some(0.32 * hb),
                extra_cbc: vec![],
                eyes,
            }],
        }
    }

    #[test]
    fn feature_row_matches_name_layout() {
        let p = patient("p0", 13.0, 0);
        let names = metadata_feature_names();
        let row = metadata_features(&p);
        assert_eq!(names.len(), 13);
        assert_eq!(row.len(), 13);
        assert_eq!(row[0], 60.0);
        assert_eq!(row[1], 1.0);
        assert_eq!(row[8], 0.0);
        let eth = &row[9..];
        assert_eq!(eth, [0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn examples_expand_per_eye_and_standardize() {
        let dir = tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        let patients = vec![patient("p0", 11.0, 2), patient("p1", 14.0, 1)];
        for p in &patients {
            for eye in &p.visits[0].eyes {
                let mut img = FundusImage::new(32);
                img.data_mut().fill(0.4);
                img.write_ppm(&dir.path().join(&eye.image_path)).unwrap();
            }
        }
        let refs: Vec<&PatientRecord> = patients.iter().collect();
        let task = TaskSpec::parse("hb").unwrap();
        let target_std = Standardizer::fit(&["hb"], &[vec![11.0, 14.0]]).unwrap();
        let examples = load_examples(dir.path(), &refs, &task, None, Some(&target_std)).unwrap();
        assert_eq!(examples.len(), 3);
        assert_eq!(examples[0].patient_id, "p0");
        let ExampleTarget::Values(v) = &examples[0].target else {
            panic!("expected regression target")
        };
        // 11.0 standardized against mean 12.5, sd sqrt(4.5).
        assert!((v[0] - (11.0 - 12.5) / 4.5f64.sqrt()).abs() < 1e-12);
        assert!(examples[0].side.is_none());

        let input = image_to_input(&examples[0].image);
        assert_eq!(input.len(), 3 * 32 * 32);
        assert!(input.iter().all(|v| (*v - (0.4 - 0.5)).abs() < 3e-3));
    }

    #[test]
    fn classification_examples_carry_class_indices() {
        let dir = tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("images")).unwrap();
        let patients = vec![patient("p0", 11.0, 1), patient("p1", 14.0, 1)];
        for p in &patients {
            for eye in &p.visits[0].eyes {
                FundusImage::new(32)
                    .write_ppm(&dir.path().join(&eye.image_path))
                    .unwrap();
            }
        }
        let refs: Vec<&PatientRecord> = patients.iter().collect();
        let task = TaskSpec::parse("anemia").unwrap();
        let examples = load_examples(dir.path(), &refs, &task, None, None).unwrap();
        assert_eq!(examples[0].target, ExampleTarget::Class(1));
        assert_eq!(examples[1].target, ExampleTarget::Class(0));
    }

    #[test]
    fn missing_image_file_is_reported() {
        let dir = tempdir().unwrap();
        let patients = vec![patient("p0", 11.0, 1)];
        let refs: Vec<&PatientRecord> = patients.iter().collect();
        let task = TaskSpec::parse("anemia").unwrap();
        let err = load_examples(dir.path(), &refs, &task, None, None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
