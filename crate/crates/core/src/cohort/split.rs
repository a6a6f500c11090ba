use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cohort::PatientRecord;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Tune,
    Validation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Tune, Split::Validation];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Tune => "tune",
            Split::Validation => "validation",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "tune" => Ok(Split::Tune),
            "validation" => Ok(Split::Validation),
            other => Err(Error::InvalidInput(format!("unknown split {other:?}"))),
        }
    }
}

/// Patient-level split: every patient id maps to exactly one split.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitAssignment {
    map: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, patient_id: &str) -> Option<Split> {
        self.map.get(patient_id).copied()
    }

    pub fn insert(&mut self, patient_id: String, split: Split) {
        self.map.insert(patient_id, split);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Split)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn patients_in(&self, split: Split) -> Vec<&str> {
        self.map
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.map.values().filter(|s| **s == split).count()
    }
}

/// Deterministic largest-remainder allocation of `n` items to the three splits.
fn allocate(n: usize, fractions: (f64, f64, f64)) -> [usize; 3] {
    let f = [fractions.0, fractions.1, fractions.2];
    let mut counts = [0usize; 3];
    let mut remainders = [0.0f64; 3];
    let mut assigned = 0usize;
    for k in 0..3 {
        let target = n as f64 * f[k];
        counts[k] = target.floor() as usize;
        remainders[k] = target - target.floor();
        assigned += counts[k];
    }
    let mut order: Vec<usize> = (0..3).collect();
    // largest remainder first; ties broken by split order
    order.sort_by(|&a, &b| remainders[b].partial_cmp(&remainders[a]).unwrap().then(a.cmp(&b)));
    for &k in order.iter().take(n - assigned) {
        counts[k] += 1;
    }
    counts
}

/// Nearest-rank age decile boundaries over the whole cohort.
fn age_decile_bounds(ages: &mut Vec<f64>) -> Vec<f64> {
    ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ages.len();
    (1..10)
        .map(|d| {
            let rank = ((d as f64 / 10.0) * n as f64).ceil() as usize;
            ages[rank.saturating_sub(1).min(n - 1)]
        })
        .collect()
}

/// Assign every patient to train/tune/validation, stratified by sex and age
/// decile. Within each stratum the split counts match the fractions to within
/// one patient; the result is deterministic for a fixed seed.
pub fn stratified_split(
    cohort: &[PatientRecord],
    seed: u64,
    fractions: (f64, f64, f64),
) -> Result<SplitAssignment> {
    if cohort.is_empty() {
        return Err(Error::InvalidInput("empty cohort".into()));
    }
    let sum = fractions.0 + fractions.1 + fractions.2;
    if (sum - 1.0).abs() > 1e-9 || fractions.0 < 0.0 || fractions.1 < 0.0 || fractions.2 < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let mut ages: Vec<f64> = cohort.iter().map(|p| p.age).collect();
    let bounds = age_decile_bounds(&mut ages);
    let bin = |age: f64| bounds.partition_point(|b| *b < age);

    let mut strata: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    for p in cohort {
        let key = format!("{}/age{}", p.sex.as_str(), bin(p.age));
        strata.entry(key).or_default().push(&p.patient_id);
    }

    let mut out = SplitAssignment::default();
    for (key, mut ids) in strata {
        ids.sort_unstable();
        ids.dedup();
        let mut stream = rng::stream(seed, &format!("split/{key}"));
        ids.shuffle(&mut stream);
        let counts = allocate(ids.len(), fractions);
        let mut cursor = 0usize;
        for (k, split) in Split::ALL.iter().enumerate() {
            for id in &ids[cursor..cursor + counts[k]] {
                out.insert((*id).to_string(), *split);
            }
            cursor += counts[k];
        }
    }
    Ok(out)
}

pub fn write_split(assignment: &SplitAssignment, path: &Path) -> Result<()> {
    let mut body = String::from("patient_id,split\n");
    for (id, split) in assignment.iter() {
        body.push_str(id);
        body.push(',');
        body.push_str(split.as_str());
        body.push('\n');
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_split(path: &Path) -> Result<SplitAssignment> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "patient_id,split")) => {}
        other => {
            return Err(Error::ManifestParse {
                path: path.to_path_buf(),
                line: 1,
                msg: format!("bad split header {:?}", other.map(|(_, l)| l)),
            })
        }
    }
    let mut out = SplitAssignment::default();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (id, split) = line.split_once(',').ok_or_else(|| Error::ManifestParse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: "expected patient_id,split".into(),
        })?;
        let split = Split::parse(split).map_err(|e| Error::ManifestParse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        if out.get(id).is_some() {
            return Err(Error::ManifestParse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("duplicate patient {id:?}"),
            });
        }
        out.insert(id.to_string(), split);
    }
    Ok(out)
}
