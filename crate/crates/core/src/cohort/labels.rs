use serde::{Deserialize, Serialize};

use crate::cohort::Sex;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    None,
    Mild,
    Moderate,
    Severe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnemiaLabels {
    pub anemia: bool,
    pub moderate: bool,
    pub approximate: bool,
    pub severity: Severity,
}

/// WHO-style anemia labels from a hemoglobin value.
///
/// All cutoff comparisons are strict less-than: a value exactly at a cutoff is
/// non-anemic. Sex cutoffs are 12 g/dL (female) and 13 g/dL (male); the
/// sex-neutral approximate cutoff is 12.5 g/dL; moderate is below 11 and
/// severe below 8.
pub fn classify_anemia(hb: f64, sex: Sex) -> Result<AnemiaLabels> {
    if !hb.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite hb {hb}")));
    }
    let cutoff = match sex {
        Sex::Female => 12.0,
        Sex::Male => 13.0,
    };
    let anemia = hb < cutoff;
    let moderate = hb < 11.0;
    let approximate = hb < 12.5;
    let severity = if hb < 8.0 {
        Severity::Severe
    } else if hb < 11.0 {
        Severity::Moderate
    } else if hb < cutoff {
        Severity::Mild
    } else {
        Severity::None
    };
    Ok(AnemiaLabels {
        anemia,
        moderate,
        approximate,
        severity,
    })
}
