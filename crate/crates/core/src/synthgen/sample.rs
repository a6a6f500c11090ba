use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{Ethnicity, Eye, EyeImage, PatientRecord, Sex, Visit};
use crate::error::Result;
use crate::rng;
use crate::synthgen::GeneratorConfig;

/// Everything the renderer needs to draw one eye of one visit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitLatent {
    pub true_hb: f64,
    /// Patient-specific offset, constant across the patient's visits.
    pub nuisance: f64,
    pub eye: Eye,
    /// Seed for geometry jitter and pixel noise of this eye's image.
    pub jitter_seed: u64,
}

/// One latent per rendered image, joined to the manifest by image path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredLatent {
    pub patient_id: String,
    pub visit_index: usize,
    pub image_path: PathBuf,
    pub latent: VisitLatent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledCohort {
    pub patients: Vec<PatientRecord>,
    pub latents: Vec<StoredLatent>,
}

fn draw_normal(rng: &mut rng::Stream, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    Normal::new(mean, sd).unwrap().sample(rng)
}

fn draw_clamped(rng: &mut rng::Stream, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    draw_normal(rng, mean, sd).clamp(lo, hi)
}

/// Gaussian truncated to [6, 20] by rejection.
fn draw_hb(rng: &mut rng::Stream, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return mean;
    }
    let dist = Normal::new(mean, sd).unwrap();
    for _ in 0..1000 {
        let v = dist.sample(rng);
        if (6.0..=20.0).contains(&v) {
            return v;
        }
    }
    mean.clamp(6.0, 20.0)
}

fn draw_ethnicity(rng: &mut rng::Stream) -> Ethnicity {
    let u: f64 = rng.random_range(0.0..1.0);
    if u < 0.911 {
        Ethnicity::White
    } else if u < 0.924 {
        Ethnicity::Black
    } else if u < 0.959 {
        Ethnicity::Asian
    } else {
        Ethnicity::Other
    }
}

/// Sample a full cohort. Each patient's draws come from a stream named by the
/// patient id, so the result is deterministic for a fixed seed regardless of
/// how the loop is scheduled.
pub fn sample_cohort(config: &GeneratorConfig) -> Result<SampledCohort> {
    config.validate()?;
    let mut patients = Vec::with_capacity(config.n_patients);
    let mut latents = Vec::new();

    for i in 0..config.n_patients {
        let patient_id = format!("p{i:05}");
        let mut s = rng::stream(config.seed, &format!("cohort/{patient_id}"));

        let sex = if s.random_bool(0.549) {
            Sex::Female
        } else {
            Sex::Male
        };
        let age = draw_clamped(&mut s, 57.9, 8.0, 40.0, 70.0);
        let ethnicity = draw_ethnicity(&mut s);
        let smoker = s.random_bool(0.096);
        let (h_mean, w_mean) = match sex {
            Sex::Female => (163.0, 70.0),
            Sex::Male => (176.0, 84.0),
        };
        let height = draw_clamped(&mut s, h_mean, 7.0, 140.0, 200.0);
        let weight = draw_clamped(&mut s, w_mean, 12.0, 40.0, 160.0);
        let bmi = weight / (height / 100.0).powi(2);
        let sbp = draw_clamped(&mut s, 137.0, 18.0, 90.0, 210.0);
        let dbp = draw_clamped(&mut s, 82.0, 10.0, 50.0, 130.0);
        let pulse = draw_clamped(&mut s, 69.0, 11.0, 40.0, 120.0);
        let nuisance = draw_normal(&mut s, 0.0, config.nuisance_sd);
        let two_visits = s.random_bool(config.two_visit_fraction);

        let hb_mean = match sex {
            Sex::Female => config.hb_mean_female,
            Sex::Male => config.hb_mean_male,
        };

        let n_visits = if two_visits { 2 } else { 1 };
        let mut visits = Vec::with_capacity(n_visits);
        for visit_index in 0..n_visits {
            let hb = draw_hb(&mut s, hb_mean, config.hb_sd);
            let hct = (2.94 * hb + draw_normal(&mut s, 0.0, 1.2)).max(10.0);
            let rbc = (0.32 * hb + draw_normal(&mut s, 0.0, 0.25)).max(1.0);
            let both_eyes = s.random_bool(config.two_eye_fraction);
            let eyes: Vec<Eye> = if both_eyes {
                vec![Eye::Left, Eye::Right]
            } else if s.random_bool(0.5) {
                vec![Eye::Left]
            } else {
                vec![Eye::Right]
            };
            let mut eye_images = Vec::with_capacity(eyes.len());
            for eye in eyes {
                let image_path = PathBuf::from(format!(
                    "images/{patient_id}-v{visit_index}-{}.ppm",
                    eye.as_str()
                ));
                let jitter_seed = rng::derive_u64(
                    config.seed,
                    &format!("jitter/{patient_id}/v{visit_index}/{}", eye.as_str()),
                );
                latents.push(StoredLatent {
                    patient_id: patient_id.clone(),
                    visit_index,
                    image_path: image_path.clone(),
                    latent: VisitLatent {
                        true_hb: hb,
                        nuisance,
                        eye,
                        jitter_seed,
                    },
                });
                eye_images.push(EyeImage { eye, image_path });
            }
            visits.push(Visit {
                visit_id: format!("{patient_id}-v{visit_index}"),
                visit_index,
                hb: Some(hb),
                hct: Some(hct),
                rbc: Some(rbc),
                extra_cbc: vec![],
                eyes: eye_images,
            });
        }

        let record = PatientRecord {
            patient_id,
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
            visits,
        };
        record.validate()?;
        patients.push(record);
    }

    Ok(SampledCohort { patients, latents })
}
