//! Teacher training, face cropping, pseudo labels and student manifest assembly.

pub mod detector;

use std::path::Path;

use rayon::prelude::*;

pub use detector::{FaceDetection, FaceDetector, NullDetector, StubDetector, SyntheticDetector};

use crate::data::classes::NON_FACE;
use crate::data::image::{crop, resize_bilinear, RgbImage};
use crate::data::manifest::relative_path;
use crate::data::{Manifest, ManifestRecord, Provenance, Sample};
use crate::error::{Error, Result};
use crate::metrics::{argmax, log_sum_exp};
use crate::model::{forward, ModelConfig, ModelInput, Params, Resolution};
use crate::tensor::Tensor;
use crate::training::{train_loop, TrainConfig, TrainOptions, TrainResult};

/// The face input used when no face was detected: zeros in normalized space.
pub fn blank_face(resolution: Resolution) -> Tensor {
    Tensor::zeros(&[3, resolution.height, resolution.width])
}

/// Runs the detector and, on success, bilinearly resizes the box to `out`.
/// The crop is returned in raw `[0, 255]` scale.
pub fn detect_and_crop(
    sample_id: &str,
    image: &RgbImage,
    detector: &dyn FaceDetector,
    out: Resolution,
) -> Result<(FaceDetection, Option<Tensor>)> {
    let det = detector.detect(sample_id, image)?;
    let Some(b) = det.bbox else { return Ok((det, None)) };
    if b.w == 0 || b.h == 0 || b.x + b.w > image.width() || b.y + b.h > image.height() {
        return Err(Error::DetectorContract(format!(
            "sample {sample_id}: box ({}, {}, {}, {}) outside the {}x{} image",
            b.x,
            b.y,
            b.w,
            b.h,
            image.width(),
            image.height()
        )));
    }
    let region = crop(&image.to_raw_tensor(), b.x, b.y, b.w, b.h)?;
    Ok((det, Some(resize_bilinear(&region, out.height, out.width)?)))
}

/// Argmax label (lowest index on ties) and its softmax probability.
pub fn label_from_logits(logits: &[f64]) -> (usize, f64) {
    let k = argmax(logits);
    (k, (logits[k] - log_sum_exp(logits)).exp())
}

/// Teacher label for a normalized face, or Non-Face when there is none.
pub fn pseudo_label(face: Option<&Tensor>, teacher: &Params) -> Result<(usize, Option<f64>)> {
    let Some(face) = face else { return Ok((NON_FACE, None)) };
    let out = forward(teacher, ModelInput { driver: None, face }, false)?;
    let (label, p) = label_from_logits(&out.emotion_logits);
    Ok((label, Some(p)))
}

/// Trains the face-only emotion teacher.
pub fn train_teacher(
    samples: &[Sample],
    config: &ModelConfig,
    train: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainResult> {
    if samples.is_empty() {
        return Err(Error::Data("teacher dataset is empty".into()));
    }
    let params = Params::init(config, train.seed)?;
    train_loop(samples, None, params, train, &TrainOptions { include_pseudo: true, ..options.clone() })
}

#[derive(Debug)]
pub struct StudentManifest {
    /// Sorted by sample id.
    pub records: Vec<ManifestRecord>,
    /// Samples that could not be processed, with the reason.
    pub errors: Vec<(String, Error)>,
    pub faces_found: usize,
    pub non_face: usize,
}

fn student_record(
    record: &ManifestRecord,
    drivers: &Manifest,
    detector: &dyn FaceDetector,
    teacher: &Params,
    out_dir: &Path,
) -> Result<ManifestRecord> {
    let driver_file = drivers.resolve(&record.driver_path);
    let image = RgbImage::load(&driver_file)?;
    let face_res = teacher.config().face_resolution;
    let (_, crop) = detect_and_crop(&record.sample_id, &image, detector, face_res)?;
    let (face_path, face) = match crop {
        Some(raw) => {
            let img = RgbImage::from_raw_tensor(&raw)?;
            let rel = format!("crops/{}.ppm", record.sample_id);
            img.save(&out_dir.join(&rel))?;
            (Some(rel), Some(img.to_tensor()))
        }
        None => (None, None),
    };
    let (emotion, confidence) = pseudo_label(face.as_ref(), teacher)?;
    let rec = ManifestRecord {
        sample_id: record.sample_id.clone(),
        driver_path: relative_path(&driver_file, out_dir)?,
        face_path,
        distraction: record.distraction,
        emotion,
        provenance: Provenance::Pseudo,
        confidence,
    };
    rec.validate()?;
    Ok(rec)
}

/// Detects, crops and pseudo-labels every driver image, writing crops to
/// `out_dir/crops/` and the manifest to `out_dir/manifest.csv`. Failing
/// records are reported in `errors` and left out of the manifest.
pub fn build_student_manifest(
    drivers: &Manifest,
    detector: &dyn FaceDetector,
    teacher: &Params,
    out_dir: &Path,
) -> Result<StudentManifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<(String, Result<ManifestRecord>)> = drivers
        .records
        .par_iter()
        .map(|r| (r.sample_id.clone(), student_record(r, drivers, detector, teacher, out_dir)))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (id, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => errors.push((id, e)),
        }
    }
    records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    errors.sort_by(|a, b| a.0.cmp(&b.0));
    let non_face = records.iter().filter(|r| r.face_path.is_none()).count();
    let summary = StudentManifest {
        faces_found: records.len() - non_face,
        non_face,
        records,
        errors,
    };
    Manifest::save_records(&summary.records, &out_dir.join("manifest.csv"))?;
    log::info!(
        "student manifest: {} records, {} faces found, {} Non-Face, {} errors",
        summary.records.len(),
        summary.faces_found,
        summary.non_face,
        summary.errors.len()
    );
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blank_face_is_zero() {
        let b = blank_face(Resolution::square(32));
        assert_eq!(b.shape(), &[3, 32, 32]);
        assert_eq!(b.data().iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn label_rules() {
        let (k, p) = label_from_logits(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 9.0]);
        assert_eq!(k, 6);
        let oracle = 1.0 / (1.0 + 6.0 * (-9.0f64).exp());
        assert!((p - oracle).abs() < 1e-15);
        assert_eq!(label_from_logits(&[0.5; 7]).0, 0);
    }
}
