use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything the generator needs to sample a cohort and render its images.
///
/// The three gains control how strongly hemoglobin is painted into an image:
/// `pallor_gain` scales global background brightness, `vessel_gain` scales
/// vessel darkness, `disc_gain` scales the disc-rim detail amplitude. The
/// image-borne value is `true_hb + nuisance`, where the nuisance offset is
/// drawn once per patient and shared by all of that patient's visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    /// Square image side in pixels; must be even and at least 32.
    pub image_side: usize,
    pub hb_mean_female: f64,
    pub hb_mean_male: f64,
    pub hb_sd: f64,
    pub pallor_gain: f64,
    pub vessel_gain: f64,
    pub disc_gain: f64,
    /// Standard deviation of the patient-specific offset added to the
    /// image-borne hemoglobin, in g/dL equivalents.
    pub nuisance_sd: f64,
    /// Fraction of patients that receive a second visit.
    pub two_visit_fraction: f64,
    /// Fraction of visits imaged in both eyes (the rest get one eye).
    pub two_eye_fraction: f64,
    /// Hemoglobin value at which the pallor term is neutral.
    pub reference_hb: f64,
    /// Standard deviation of additive pixel noise, in [0,1] pixel units.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_patients: 2000,
            image_side: 64,
            hb_mean_female: 13.9,
            hb_mean_male: 14.9,
            hb_sd: 1.3,
            pallor_gain: 0.003,
            vessel_gain: 0.04,
            disc_gain: 0.02,
            nuisance_sd: 0.7,
            two_visit_fraction: 0.05,
            two_eye_fraction: 0.7,
            reference_hb: 14.3,
            noise_sd: 0.02,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.image_side < 32 || self.image_side % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_side {} must be even and at least 32",
                self.image_side
            )));
        }
        for (name, v) in [
            ("pallor_gain", self.pallor_gain),
            ("vessel_gain", self.vessel_gain),
            ("disc_gain", self.disc_gain),
            ("hb_sd", self.hb_sd),
            ("nuisance_sd", self.nuisance_sd),
            ("noise_sd", self.noise_sd),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} {v} must be finite and non-negative"
                )));
            }
        }
        for (name, v) in [
            ("two_visit_fraction", self.two_visit_fraction),
            ("two_eye_fraction", self.two_eye_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name} {v} outside [0,1]")));
            }
        }
        for (name, v) in [
            ("hb_mean_female", self.hb_mean_female),
            ("hb_mean_male", self.hb_mean_male),
            ("reference_hb", self.reference_hb),
        ] {
            if !v.is_finite() || !(6.0..=20.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "{name} {v} must lie in the supported range [6, 20]"
                )));
            }
        }
        Ok(())
    }
}
