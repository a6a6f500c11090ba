use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cohort::{Ethnicity, Eye, EyeImage, PatientRecord, Sex, Visit};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "patient_id,visit_index,sex,age,ethnicity,smoker,sbp,dbp,pulse,height,weight,bmi,hb,hct,rbc,eye,image_path";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Write the cohort manifest CSV: one row per (visit, eye), or a single row
/// with empty eye columns for a visit without images. `extra_cbc` components
/// are not part of the manifest format.
pub fn write_manifest(cohort: &[PatientRecord], path: &Path) -> Result<()> {
    let mut body = String::from(MANIFEST_HEADER);
    body.push('\n');
    for p in cohort {
        for v in &p.visits {
            let shared = format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                p.patient_id,
                v.visit_index,
                p.sex.as_str(),
                p.age,
                p.ethnicity.as_str(),
                p.smoker,
                p.sbp,
                p.dbp,
                p.pulse,
                p.height,
                p.weight,
                p.bmi,
                fmt_opt(v.hb),
                fmt_opt(v.hct),
                fmt_opt(v.rbc),
            );
            if v.eyes.is_empty() {
                body.push_str(&shared);
                body.push_str(",,\n");
            } else {
                for eye in &v.eyes {
                    body.push_str(&shared);
                    body.push(',');
                    body.push_str(eye.eye.as_str());
                    body.push(',');
                    body.push_str(&eye.image_path.to_string_lossy());
                    body.push('\n');
                }
            }
        }
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

struct RowCtx<'a> {
    path: &'a Path,
    line: usize,
}

impl RowCtx<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::ManifestParse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn f64(&self, field: &str, raw: &str) -> Result<f64> {
        raw.parse::<f64>()
            .map_err(|e| self.err(format!("bad {field} {raw:?}: {e}")))
    }

    fn opt_f64(&self, field: &str, raw: &str) -> Result<Option<f64>> {
        if raw.is_empty() {
            Ok(None)
        } else {
            self.f64(field, raw).map(Some)
        }
    }
}

/// Parse a cohort manifest CSV back into patient records. Rows of one patient
/// must agree on the patient-level columns; rows of one visit on the lab
/// columns. Visit ids are reconstructed as `{patient_id}-v{visit_index}`.
pub fn read_manifest(path: &Path) -> Result<Vec<PatientRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == MANIFEST_HEADER => {}
        other => {
            return Err(Error::ManifestParse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("bad manifest header {:?}", other.map(|(_, l)| l)),
            })
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut patients: BTreeMap<String, PatientRecord> = BTreeMap::new();

    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let ctx = RowCtx { path, line: i + 1 };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 17 {
            return Err(ctx.err(format!("expected 17 fields, found {}", fields.len())));
        }
        let patient_id = fields[0].to_string();
        if patient_id.is_empty() {
            return Err(ctx.err("empty patient_id"));
        }
        let visit_index: usize = fields[1]
            .parse()
            .map_err(|e| ctx.err(format!("bad visit_index {:?}: {e}", fields[1])))?;
        let sex = Sex::parse(fields[2]).map_err(|e| ctx.err(e.to_string()))?;
        let age = ctx.f64("age", fields[3])?;
        let ethnicity = Ethnicity::parse(fields[4]).map_err(|e| ctx.err(e.to_string()))?;
        let smoker = match fields[5] {
            "true" => true,
            "false" => false,
            v => return Err(ctx.err(format!("bad smoker {v:?}, expected true/false"))),
        };
        let sbp = ctx.f64("sbp", fields[6])?;
        let dbp = ctx.f64("dbp", fields[7])?;
        let pulse = ctx.f64("pulse", fields[8])?;
        let height = ctx.f64("height", fields[9])?;
        let weight = ctx.f64("weight", fields[10])?;
        let bmi = ctx.f64("bmi", fields[11])?;
        let hb = ctx.opt_f64("hb", fields[12])?;
        let hct = ctx.opt_f64("hct", fields[13])?;
        let rbc = ctx.opt_f64("rbc", fields[14])?;
        let eye = match (fields[15], fields[16]) {
            ("", "") => None,
            ("", _) | (_, "") => {
                return Err(ctx.err("eye and image_path must both be present or both empty"))
            }
            (e, p) => Some(EyeImage {
                eye: Eye::parse(e).map_err(|err| ctx.err(err.to_string()))?,
                image_path: PathBuf::from(p),
            }),
        };

        let record = patients.entry(patient_id.clone()).or_insert_with(|| {
            order.push(patient_id.clone());
            PatientRecord {
                patient_id: patient_id.clone(),
                sex,
                age,
                ethnicity,
                smoker,
                sbp,
                dbp,
                pulse,
                height,
                weight,
                bmi,
                visits: Vec::new(),
            }
        });
        let same_patient = record.sex == sex
            && record.age == age
            && record.ethnicity == ethnicity
            && record.smoker == smoker
            && record.sbp == sbp
            && record.dbp == dbp
            && record.pulse == pulse
            && record.height == height
            && record.weight == weight
            && record.bmi == bmi;
        if !same_patient {
            return Err(ctx.err(format!(
                "patient {patient_id:?}: metadata differs from an earlier row"
            )));
        }

        let visit = match record.visits.iter_mut().find(|v| v.visit_index == visit_index) {
            Some(v) => {
                if v.hb != hb || v.hct != hct || v.rbc != rbc {
                    return Err(ctx.err(format!(
                        "visit {visit_index} of {patient_id:?}: lab values differ from an earlier row"
                    )));
                }
                v
            }
            None => {
                record.visits.push(Visit {
                    visit_id: format!("{patient_id}-v{visit_index}"),
                    visit_index,
                    hb,
                    hct,
                    rbc,
                    extra_cbc: vec![],
                    eyes: vec![],
                });
                record.visits.last_mut().unwrap()
            }
        };
        if let Some(eye) = eye {
            if visit.eyes.len() == 2 {
                return Err(ctx.err(format!(
                    "visit {visit_index} of {patient_id:?}: more than 2 eye images"
                )));
            }
            visit.eyes.push(eye);
        }
    }

    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let mut p = patients.remove(&id).unwrap();
        p.visits.sort_by_key(|v| v.visit_index);
        out.push(p);
    }
    Ok(out)
}
