//! Loading manifests into model-ready samples.

use std::path::Path;

use rayon::prelude::*;

use super::image::load_image;
use super::manifest::{load_fer_labels, Manifest, Provenance};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Modality, Targets};
use crate::pipeline::blank_face;
use crate::tensor::Tensor;

/// One training or evaluation example in normalized input space.
#[derive(Clone, Debug)]
pub struct Sample {
    pub sample_id: String,
    pub driver: Option<Tensor>,
    pub face: Tensor,
    pub targets: Targets,
    pub provenance: Provenance,
}

fn check_shape(t: &Tensor, config: &ModelConfig, m: Modality, path: &Path) -> Result<()> {
    let r = config.resolution(m).expect("modality present");
    if t.shape() != [config.channels, r.height, r.width] {
        return Err(Error::Data(format!(
            "{} is {:?}, model expects {} input {}x{}",
            path.display(),
            t.shape(),
            m.name(),
            r.height,
            r.width
        )));
    }
    Ok(())
}

fn load_checked(path: &Path, config: &ModelConfig, m: Modality) -> Result<Tensor> {
    let t = load_image(path)?;
    check_shape(&t, config, m, path)?;
    Ok(t)
}

/// Loads every record of a student manifest; Non-Face records get a blank face.
pub fn load_samples(manifest: &Manifest, config: &ModelConfig) -> Result<Vec<Sample>> {
    if config.driver_resolution.is_none() {
        return Err(Error::Config("student samples need a model with a driver input".into()));
    }
    let face_res = config.face_resolution;
    manifest
        .records
        .par_iter()
        .map(|r| {
            let driver = load_checked(&manifest.resolve(&r.driver_path), config, Modality::Driver)?;
            let face = match &r.face_path {
                Some(p) => load_checked(&manifest.resolve(p), config, Modality::Face)?,
                None => blank_face(face_res),
            };
            Ok(Sample {
                sample_id: r.sample_id.clone(),
                driver: Some(driver),
                face,
                targets: Targets {
                    distraction: Some(r.distraction),
                    emotion: r.emotion,
                },
                provenance: r.provenance,
            })
        })
        .collect()
}

/// Loads the teacher's face set from a `labels.csv` file.
pub fn load_fer_samples(labels: &Path, config: &ModelConfig) -> Result<Vec<Sample>> {
    let records = load_fer_labels(labels)?;
    let dir = labels.parent().unwrap_or(Path::new(""));
    records
        .par_iter()
        .map(|r| {
            Ok(Sample {
                sample_id: r.sample_id.clone(),
                driver: None,
                face: load_checked(&dir.join(&r.face_path), config, Modality::Face)?,
                targets: Targets {
                    distraction: None,
                    emotion: r.emotion,
                },
                provenance: Provenance::GroundTruth,
            })
        })
        .collect()
}
