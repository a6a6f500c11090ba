use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "female" => Ok(Sex::Female),
            "male" => Ok(Sex::Male),
            other => Err(Error::InvalidInput(format!("unknown sex {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Eye {
    Left,
    Right,
}

impl Eye {
    pub fn as_str(self) -> &'static str {
        match self {
            Eye::Left => "left",
            Eye::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Eye::Left),
            "right" => Ok(Eye::Right),
            other => Err(Error::InvalidInput(format!("unknown eye {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ethnicity {
    White,
    Black,
    Asian,
    Other,
}

impl Ethnicity {
    pub const ALL: [Ethnicity; 4] = [
        Ethnicity::White,
        Ethnicity::Black,
        Ethnicity::Asian,
        Ethnicity::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::White => "white",
            Ethnicity::Black => "black",
            Ethnicity::Asian => "asian",
            Ethnicity::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(Ethnicity::White),
            "black" => Ok(Ethnicity::Black),
            "asian" => Ok(Ethnicity::Asian),
            "other" => Ok(Ethnicity::Other),
            v => Err(Error::InvalidInput(format!("unknown ethnicity {v:?}"))),
        }
    }
}

/// One captured fundus photo of one eye.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeImage {
    pub eye: Eye,
    /// Path relative to the dataset root.
    pub image_path: PathBuf,
}

/// One assessment visit. Lab values may be missing on a visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub visit_id: String,
    pub visit_index: usize,
    pub hb: Option<f64>,
    pub hct: Option<f64>,
    pub rbc: Option<f64>,
    /// Further CBC components as (name, value, unit); names unique within a visit.
    pub extra_cbc: Vec<(String, f64, String)>,
    /// 0 to 2 eye images.
    pub eyes: Vec<EyeImage>,
}

impl Visit {
    pub fn validate(&self) -> Result<()> {
        if let Some(hb) = self.hb {
            if !hb.is_finite() || hb <= 0.0 || hb >= 25.0 {
                return Err(Error::InvalidInput(format!(
                    "visit {}: hb {hb} outside (0, 25)",
                    self.visit_id
                )));
            }
        }
        if self.eyes.len() > 2 {
            return Err(Error::InvalidInput(format!(
                "visit {}: {} eye images, at most 2 allowed",
                self.visit_id,
                self.eyes.len()
            )));
        }
        for (i, (name, _, _)) in self.extra_cbc.iter().enumerate() {
            if self.extra_cbc[..i].iter().any(|(n, _, _)| n == name) {
                return Err(Error::InvalidInput(format!(
                    "visit {}: duplicate cbc component {name:?}",
                    self.visit_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub sex: Sex,
    pub age: f64,
    pub ethnicity: Ethnicity,
    pub smoker: bool,
    pub sbp: f64,
    pub dbp: f64,
    pub pulse: f64,
    pub height: f64,
    pub weight: f64,
    pub bmi: f64,
    pub visits: Vec<Visit>,
}

impl PatientRecord {
    pub fn validate(&self) -> Result<()> {
        if self.visits.is_empty() {
            return Err(Error::InvalidInput(format!(
                "patient {}: no visits",
                self.patient_id
            )));
        }
        if !(18.0..=100.0).contains(&self.age) {
            return Err(Error::InvalidInput(format!(
                "patient {}: age {} outside [18, 100]",
                self.patient_id, self.age
            )));
        }
        for v in [
            self.age,
            self.sbp,
            self.dbp,
            self.pulse,
            self.height,
            self.weight,
            self.bmi,
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "patient {}: non-finite metadata value",
                    self.patient_id
                )));
            }
        }
        if self.height > 0.0 && self.weight > 0.0 && self.bmi > 0.0 {
            let computed = self.weight / (self.height / 100.0).powi(2);
            if (self.bmi - computed).abs() > 0.05 * computed {
                return Err(Error::InvalidInput(format!(
                    "patient {}: bmi {} inconsistent with height/weight (computed {computed:.2})",
                    self.patient_id, self.bmi
                )));
            }
        }
        for visit in &self.visits {
            visit.validate()?;
        }
        Ok(())
    }

    /// The nine numeric metadata fields in manifest column order.
    pub fn numeric_metadata(&self) -> [f64; 9] {
        [
            self.age,
            if self.smoker { 1.0 } else { 0.0 },
            self.sbp,
            self.dbp,
            self.pulse,
            self.height,
            self.weight,
            self.bmi,
            if self.sex == Sex::Male { 1.0 } else { 0.0 },
        ]
    }
}

/// Names matching [`PatientRecord::numeric_metadata`] order.
pub const NUMERIC_METADATA_NAMES: [&str; 9] = [
    "age", "smoker", "sbp", "dbp", "pulse", "height", "weight", "bmi", "sex_male",
];
