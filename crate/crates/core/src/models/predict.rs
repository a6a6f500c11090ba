use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{Eye, PatientRecord, Standardizer, Visit};
use crate::error::{Error, Result};
use crate::image::FundusImage;
use crate::models::baseline::{predict_linear, predict_logistic, LinearModel, LogisticModel};
use crate::models::data::{first_eligible_visit, image_to_input, metadata_features};
use crate::models::task::{Family, TaskSpec};
use crate::models::train::{apply_named_params, ImageTransform};
use crate::tensornet::{read_checkpoint, write_checkpoint, LayerSpec, Network, Shape};

pub const BUNDLE_FILE: &str = "bundle.json";

/// Network architecture stored alongside checkpoints so a bundle is
/// self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub image_side: usize,
    pub side_dim: usize,
    pub specs: Vec<LayerSpec>,
}

impl NetArch {
    pub fn build(&self) -> Result<Network> {
        Network::new(
            Shape::Map {
                c: 3,
                h: self.image_side,
                w: self.image_side,
            },
            self.side_dim,
            &self.specs,
        )
    }
}

/// Closed-form model parameters for the metadata family: one linear model
/// per regression target, or a single logistic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineParams {
    Linear(Vec<LinearModel>),
    Logistic(LogisticModel),
}

/// Serialized description of a trained family: standardizers, baseline
/// parameters or network architecture, and member checkpoint file names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub family: Family,
    pub task: TaskSpec,
    /// Present when the family consumes metadata.
    pub meta_standardizer: Option<Standardizer>,
    /// Combined family only: factor matching standardized metadata to the
    /// trunk's activation scale at the concat layer.
    #[serde(default)]
    pub side_gain: Option<f64>,
    /// Present for regression net families; nets predict in standard units.
    pub target_standardizer: Option<Standardizer>,
    pub arch: Option<NetArch>,
    /// Checkpoint file names relative to the bundle directory.
    pub members: Vec<String>,
    pub baseline: Option<BaselineParams>,
}

/// A loaded model family ready to predict: metadata baselines predict from
/// the stored closed-form parameters, net families from member networks
/// carrying their evaluation (EMA) weights.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub meta: BundleMeta,
    pub nets: Vec<Network>,
}

/// Per-eye provenance: the final output of every ensemble member for this
/// eye (class probabilities or raw-unit regression values).
#[derive(Debug, Clone, PartialEq)]
pub struct EyePrediction {
    pub eye: Eye,
    pub per_member: Vec<Vec<f64>>,
}

/// One patient's prediction with full provenance. `value` is the mean over
/// members within each eye, then the mean over eyes; for classification the
/// entries are class probabilities, for regression raw-unit target values.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientPrediction {
    pub patient_id: String,
    pub value: Vec<f64>,
    pub per_eye: Vec<EyePrediction>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn validate_meta(meta: &BundleMeta) -> Result<()> {
    meta.task.validate()?;
    match meta.family {
        Family::MetadataOnly => {
            if meta.baseline.is_none() || meta.meta_standardizer.is_none() {
                return Err(Error::InvalidInput(
                    "metadata_only bundle needs baseline parameters and a standardizer".into(),
                ));
            }
            if meta.arch.is_some() || !meta.members.is_empty() || meta.side_gain.is_some() {
                return Err(Error::InvalidInput(
                    "metadata_only bundle must not carry network members".into(),
                ));
            }
        }
        Family::FundusOnly | Family::Combined => {
            if meta.arch.is_none() || meta.members.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "{} bundle needs an architecture and at least one member",
                    meta.family.as_str()
                )));
            }
            if meta.baseline.is_some() {
                return Err(Error::InvalidInput(
                    "net bundle must not carry baseline parameters".into(),
                ));
            }
            let needs_meta = meta.family.uses_metadata();
            if needs_meta != meta.meta_standardizer.is_some() {
                return Err(Error::InvalidInput(format!(
                    "{} bundle metadata standardizer mismatch",
                    meta.family.as_str()
                )));
            }
            if needs_meta != meta.side_gain.is_some() {
                return Err(Error::InvalidInput(format!(
                    "{} bundle side gain mismatch",
                    meta.family.as_str()
                )));
            }
            if meta.side_gain.is_some_and(|g| !g.is_finite() || g < 0.0) {
                return Err(Error::InvalidInput(
                    "side gain must be finite and non-negative".into(),
                ));
            }
            if meta.task.is_classification() == meta.target_standardizer.is_some() {
                return Err(Error::InvalidInput(
                    "target standardizer is for regression nets only".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Write a bundle directory: `bundle.json` plus one checkpoint per member.
/// `member_params` must line up with `meta.members`.
pub fn save_bundle(
    dir: &Path,
    meta: &BundleMeta,
    member_params: &[Vec<(String, Vec<f64>)>],
) -> Result<()> {
    validate_meta(meta)?;
    if member_params.len() != meta.members.len() {
        return Err(Error::InvalidInput(format!(
            "{} parameter sets for {} members",
            member_params.len(),
            meta.members.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, params) in meta.members.iter().zip(member_params) {
        write_checkpoint(&dir.join(name), params)?;
    }
    let path = dir.join(BUNDLE_FILE);
    let mut body = serde_json::to_string_pretty(meta).map_err(|e| Error::json(&path, e))?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let path = dir.join(BUNDLE_FILE);
    let body = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: BundleMeta = serde_json::from_str(&body).map_err(|e| Error::json(&path, e))?;
    validate_meta(&meta)?;
    let mut nets = Vec::new();
    if let Some(arch) = &meta.arch {
        for name in &meta.members {
            let entries = read_checkpoint(&dir.join(name))?;
            let mut net = arch.build()?;
            apply_named_params(&mut net, &entries, "ema/")?;
            nets.push(net);
        }
    }
    Ok(ModelBundle { meta, nets })
}

impl ModelBundle {
    fn baseline_value(&self, patient: &PatientRecord) -> Result<Vec<f64>> {
        let std = self.meta.meta_standardizer.as_ref().expect("validated");
        let row = std.apply(&metadata_features(patient))?;
        match self.meta.baseline.as_ref().expect("validated") {
            BaselineParams::Linear(models) => {
                Ok(models.iter().map(|m| predict_linear(m, &row)).collect())
            }
            BaselineParams::Logistic(model) => {
                let p = predict_logistic(model, &row);
                Ok(vec![1.0 - p, p])
            }
        }
    }

    /// Final output of one member for one image: class probabilities or
    /// raw-unit regression values.
    fn member_output(&self, net: &Network, input: &[f64], side: Option<&[f64]>) -> Result<Vec<f64>> {
        let out = net.forward(input, side)?;
        if self.meta.task.is_classification() {
            Ok(softmax(&out))
        } else {
            match &self.meta.target_standardizer {
                Some(std) => std.invert(&out),
                None => Ok(out),
            }
        }
    }

    /// Predict one visit: per eye the member mean, then the eye mean.
    pub fn predict_visit(
        &self,
        patient: &PatientRecord,
        visit: &Visit,
        data_dir: &Path,
        transform: Option<&ImageTransform>,
    ) -> Result<PatientPrediction> {
        if self.meta.family == Family::MetadataOnly {
            return Ok(PatientPrediction {
                patient_id: patient.patient_id.clone(),
                value: self.baseline_value(patient)?,
                per_eye: Vec::new(),
            });
        }
        if visit.eyes.is_empty() {
            return Err(Error::MissingModality {
                family: self.meta.family.as_str().to_string(),
                field: "eye image".to_string(),
                patient: patient.patient_id.clone(),
            });
        }
        let side = match &self.meta.meta_standardizer {
            Some(std) => {
                let gain = self.meta.side_gain.expect("validated");
                let mut row = std.apply(&metadata_features(patient))?;
                for v in &mut row {
                    *v *= gain;
                }
                Some(row)
            }
            None => None,
        };
        let width = self.meta.task.n_outputs();
        let mut per_eye = Vec::with_capacity(visit.eyes.len());
        let mut value = vec![0.0; width];
        for eye in &visit.eyes {
            let mut image = FundusImage::read_ppm(&data_dir.join(&eye.image_path))?;
            if let Some(t) = transform {
                image = t(&image);
            }
            let input = image_to_input(&image);
            let mut per_member = Vec::with_capacity(self.nets.len());
            let mut eye_mean = vec![0.0; width];
            for net in &self.nets {
                let out = self.member_output(net, &input, side.as_deref())?;
                for (acc, v) in eye_mean.iter_mut().zip(&out) {
                    *acc += v / self.nets.len() as f64;
                }
                per_member.push(out);
            }
            for (acc, v) in value.iter_mut().zip(&eye_mean) {
                *acc += v / visit.eyes.len() as f64;
            }
            per_eye.push(EyePrediction {
                eye: eye.eye,
                per_member,
            });
        }
        Ok(PatientPrediction {
            patient_id: patient.patient_id.clone(),
            value,
            per_eye,
        })
    }

    /// Predict a patient from their first eligible visit.
    pub fn predict_patient(
        &self,
        patient: &PatientRecord,
        data_dir: &Path,
        transform: Option<&ImageTransform>,
    ) -> Result<PatientPrediction> {
        if self.meta.family == Family::MetadataOnly {
            return Ok(PatientPrediction {
                patient_id: patient.patient_id.clone(),
                value: self.baseline_value(patient)?,
                per_eye: Vec::new(),
            });
        }
        let visit = first_eligible_visit(patient)?;
        self.predict_visit(patient, visit, data_dir, transform)
    }
}
