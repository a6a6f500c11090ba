use serde::{Deserialize, Serialize};

use crate::cohort::{classify_anemia, PatientRecord, Visit};
use crate::error::{Error, Result};

/// Predictor family. Baselines see metadata only; nets see images, and the
/// combined family additionally fuses standardized metadata before its final
/// dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    MetadataOnly,
    FundusOnly,
    Combined,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::MetadataOnly, Family::FundusOnly, Family::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::MetadataOnly => "metadata_only",
            Family::FundusOnly => "fundus_only",
            Family::Combined => "combined",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "metadata_only" => Ok(Family::MetadataOnly),
            "fundus_only" => Ok(Family::FundusOnly),
            "combined" => Ok(Family::Combined),
            v => Err(Error::InvalidInput(format!("unknown family {v:?}"))),
        }
    }

    pub fn uses_images(self) -> bool {
        !matches!(self, Family::MetadataOnly)
    }

    pub fn uses_metadata(self) -> bool {
        !matches!(self, Family::FundusOnly)
    }
}

pub const CLASSIFICATION_TARGETS: [&str; 3] = ["anemia", "moderate", "approximate"];

/// What a model predicts. Regression and classification never share a model;
/// a regression task may carry several targets (one output column each).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Regression { targets: Vec<String> },
    Classification { target: String, n_classes: usize },
}

impl TaskSpec {
    /// Parse a CLI task token: a classification target, a single lab value,
    /// a comma-separated target list, or `cbc` for the hb/hct/rbc panel.
    pub fn parse(token: &str) -> Result<Self> {
        if CLASSIFICATION_TARGETS.contains(&token) {
            return Ok(TaskSpec::Classification {
                target: token.to_string(),
                n_classes: 2,
            });
        }
        let targets: Vec<String> = if token == "cbc" {
            ["hb", "hct", "rbc"].iter().map(|s| s.to_string()).collect()
        } else {
            token.split(',').map(|s| s.trim().to_string()).collect()
        };
        let spec = TaskSpec::Regression { targets };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::Regression { targets } => {
                if targets.is_empty() {
                    return Err(Error::InvalidInput("regression task with no targets".into()));
                }
                for (i, t) in targets.iter().enumerate() {
                    if t.is_empty() {
                        return Err(Error::InvalidInput("empty regression target name".into()));
                    }
                    if CLASSIFICATION_TARGETS.contains(&t.as_str()) {
                        return Err(Error::InvalidInput(format!(
                            "{t:?} is a classification target; regression and classification never share a model"
                        )));
                    }
                    if targets[..i].contains(t) {
                        return Err(Error::InvalidInput(format!("duplicate target {t:?}")));
                    }
                }
                Ok(())
            }
            TaskSpec::Classification { target, n_classes } => {
                if !CLASSIFICATION_TARGETS.contains(&target.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "unknown classification target {target:?}"
                    )));
                }
                if *n_classes != 2 {
                    return Err(Error::InvalidInput(format!(
                        "{target} is binary, expected 2 classes, got {n_classes}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Stable name used in file paths and prediction rows.
    pub fn name(&self) -> String {
        match self {
            TaskSpec::Regression { targets } => targets.join("-"),
            TaskSpec::Classification { target, .. } => target.clone(),
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, TaskSpec::Classification { .. })
    }

    /// Model output width: one per regression target, one logit per class.
    pub fn n_outputs(&self) -> usize {
        match self {
            TaskSpec::Regression { targets } => targets.len(),
            TaskSpec::Classification { n_classes, .. } => *n_classes,
        }
    }

    /// Names attached to output columns in prediction files.
    pub fn target_names(&self) -> Vec<String> {
        match self {
            TaskSpec::Regression { targets } => targets.clone(),
            TaskSpec::Classification { target, .. } => vec![target.clone()],
        }
    }

    /// Binary class index (0 negative, 1 positive) for a classification task.
    pub fn class_of(&self, patient: &PatientRecord, visit: &Visit) -> Result<usize> {
        let TaskSpec::Classification { target, .. } = self else {
            return Err(Error::InvalidInput(
                "class_of called on a regression task".into(),
            ));
        };
        let hb = visit.hb.ok_or_else(|| {
            Error::MissingInput(format!("visit {} has no hb value", visit.visit_id))
        })?;
        let labels = classify_anemia(hb, patient.sex)?;
        let positive = match target.as_str() {
            "anemia" => labels.anemia,
            "moderate" => labels.moderate,
            _ => labels.approximate,
        };
        Ok(positive as usize)
    }

    /// Regression target values for a visit, in target order.
    pub fn target_values(&self, visit: &Visit) -> Result<Vec<f64>> {
        let TaskSpec::Regression { targets } = self else {
            return Err(Error::InvalidInput(
                "target_values called on a classification task".into(),
            ));
        };
        targets
            .iter()
            .map(|name| {
                let value = match name.as_str() {
                    "hb" => visit.hb,
                    "hct" => visit.hct,
                    "rbc" => visit.rbc,
                    other => visit
                        .extra_cbc
                        .iter()
                        .find(|(n, _, _)| n == other)
                        .map(|(_, v, _)| *v),
                };
                value.ok_or_else(|| {
                    Error::MissingInput(format!(
                        "visit {} has no {name} value",
                        visit.visit_id
                    ))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Ethnicity, Sex};

    fn patient(sex: Sex, hb: f64) -> PatientRecord {
        PatientRecord {
            patient_id: "p1".to_string(),
            sex,
            age: 55.0,
            ethnicity: Ethnicity::White,
            smoker: false,
            sbp: 135.0,
            dbp: 82.0,
            pulse: 70.0,
            height: 170.0,
            weight: 75.0,
            bmi: 75.0 / (1.7 * 1.7),
            visits: vec![Visit {
                visit_id: "p1-v0".to_string(),
                visit_index: 0,
                hb: Some(hb),
                hct: Some(40.0),
                rbc: Some(4.5),
                extra_cbc: vec![("mcv".to_string(), 90.0, "fL".to_string())],
                eyes: vec![],
            }],
        }
    }

    #[test]
    fn parse_covers_all_task_tokens() {
        assert_eq!(
            TaskSpec::parse("anemia").unwrap(),
            TaskSpec::Classification {
                target: "anemia".to_string(),
                n_classes: 2
            }
        );
        assert_eq!(
            TaskSpec::parse("hb").unwrap(),
            TaskSpec::Regression {
                targets: vec!["hb".to_string()]
            }
        );
        let cbc = TaskSpec::parse("cbc").unwrap();
        assert_eq!(cbc.target_names(), ["hb", "hct", "rbc"]);
        assert_eq!(cbc, TaskSpec::parse("hb,hct,rbc").unwrap());
        assert_eq!(cbc.n_outputs(), 3);
        assert_eq!(cbc.name(), "hb-hct-rbc");
    }

    #[test]
    fn validation_rejects_mixed_and_malformed_tasks() {
        assert!(TaskSpec::Regression {
            targets: vec!["anemia".to_string()]
        }
        .validate()
        .is_err());
        assert!(TaskSpec::Regression { targets: vec![] }.validate().is_err());
        assert!(TaskSpec::Regression {
            targets: vec!["hb".to_string(), "hb".to_string()]
        }
        .validate()
        .is_err());
        assert!(TaskSpec::Classification {
            target: "hb".to_string(),
            n_classes: 2
        }
        .validate()
        .is_err());
        assert!(TaskSpec::Classification {
            target: "anemia".to_string(),
            n_classes: 3
        }
        .validate()
        .is_err());
    }

    #[test]
    fn class_of_uses_sex_specific_cutoffs() {
        let task = TaskSpec::parse("anemia").unwrap();
        let p = patient(Sex::Female, 11.9);
        assert_eq!(task.class_of(&p, &p.visits[0]).unwrap(), 1);
        let p = patient(Sex::Male, 12.5);
        assert_eq!(task.class_of(&p, &p.visits[0]).unwrap(), 1);
        let p = patient(Sex::Female, 12.5);
        assert_eq!(task.class_of(&p, &p.visits[0]).unwrap(), 0);
    }

    #[test]
    fn target_values_cover_panel_and_extra_cbc() {
        let p = patient(Sex::Male, 14.0);
        let task = TaskSpec::parse("cbc").unwrap();
        assert_eq!(
            task.target_values(&p.visits[0]).unwrap(),
            vec![14.0, 40.0, 4.5]
        );
        let task = TaskSpec::parse("mcv").unwrap();
        assert_eq!(task.target_values(&p.visits[0]).unwrap(), vec![90.0]);
        let task = TaskSpec::parse("platelets").unwrap();
        assert!(matches!(
            task.target_values(&p.visits[0]).unwrap_err(),
            Error::MissingInput(_)
        ));
    }
}
