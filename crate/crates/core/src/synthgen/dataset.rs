use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{read_manifest, write_manifest, PatientRecord};
use crate::error::{Error, Result};
use crate::synthgen::{render_fundus, GeneratorConfig, SampledCohort, StoredLatent};

pub const SIDECAR_FILE: &str = "generator.json";
pub const MANIFEST_FILE: &str = "manifest.csv";

/// Ground-truth record of how a dataset was generated. Oracle tests may read
/// it; models must not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSidecar {
    pub config: GeneratorConfig,
    pub latents: Vec<StoredLatent>,
}

/// Render every image and write the dataset directory: `images/*.ppm`, the
/// cohort manifest, and the generator sidecar.
pub fn write_dataset(sampled: &SampledCohort, config: &GeneratorConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| Error::io(&images_dir, e))?;

    for stored in &sampled.latents {
        let img = render_fundus(&stored.latent, config);
        img.write_ppm(&dir.join(&stored.image_path))?;
    }

    write_manifest(&sampled.patients, &dir.join(MANIFEST_FILE))?;

    let sidecar = GeneratorSidecar {
        config: config.clone(),
        latents: sampled.latents.clone(),
    };
    let path = dir.join(SIDECAR_FILE);
    let body = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Load the cohort manifest and verify every referenced image file exists.
pub fn read_dataset(dir: &Path) -> Result<Vec<PatientRecord>> {
    let cohort = read_manifest(&dir.join(MANIFEST_FILE))?;
    for p in &cohort {
        for v in &p.visits {
            for eye in &v.eyes {
                let path = dir.join(&eye.image_path);
                if !path.is_file() {
                    return Err(Error::MissingImage { path });
                }
            }
        }
        p.validate()?;
    }
    Ok(cohort)
}

/// Load the generator sidecar (oracle use only).
pub fn read_latents(dir: &Path) -> Result<GeneratorSidecar> {
    let path = dir.join(SIDECAR_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}
