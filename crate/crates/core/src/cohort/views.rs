use crate::cohort::{PatientRecord, Visit};

/// A visit enters modeling only if it has at least one image and an Hb value.
pub fn is_eligible(visit: &Visit) -> bool {
    !visit.eyes.is_empty() && visit.hb.is_some()
}

/// Reduce each patient to their first eligible visit. Patients with no
/// eligible visit are omitted.
pub fn first_visit_view(cohort: &[PatientRecord]) -> Vec<PatientRecord> {
    cohort
        .iter()
        .filter_map(|p| {
            let first = p.visits.iter().find(|v| is_eligible(v))?;
            let mut reduced = p.clone();
            reduced.visits = vec![first.clone()];
            Some(reduced)
        })
        .collect()
}

/// Earliest two eligible visits for each patient that has at least two.
pub fn multi_visit_pairs(cohort: &[PatientRecord]) -> Vec<(&PatientRecord, &Visit, &Visit)> {
    cohort
        .iter()
        .filter_map(|p| {
            let mut eligible = p.visits.iter().filter(|v| is_eligible(v));
            let first = eligible.next()?;
            let second = eligible.next()?;
            Some((p, first, second))
        })
        .collect()
}
