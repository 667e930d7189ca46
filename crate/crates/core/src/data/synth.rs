//! Deterministic synthetic stand-in for the driver and facial-expression datasets.
//!
//! Driver images are split into a 4×4 grid of cells. The top-right 2×2 cells
//! hold the face (when present); distraction class `k` lights the `k`-th of
//! the remaining twelve cells in reading order. A face is a skin-colored
//! square whose own 4×4 sub-grid carries one dark feature cell selected by the
//! emotion. Every pixel then gets seeded uniform noise of ±12.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::classes::{NON_FACE, NUM_DISTRACTION_CLASSES, NUM_TEACHER_EMOTIONS};
use super::image::{crop, resize_bilinear, RgbImage};
use super::manifest::{
    save_driver_map, save_fer_labels, write_file, FerRecord, Manifest, ManifestRecord, Provenance,
};
use crate::error::{Error, Result};
use crate::model::Resolution;
use crate::seed::rng_from;

pub const BACKGROUND: [u8; 3] = [40, 40, 40];
pub const CLASS_MARK: [u8; 3] = [230, 230, 230];
pub const SKIN: [u8; 3] = [210, 170, 130];
pub const FEATURE: [u8; 3] = [30, 30, 160];
pub const NOISE: i32 = 12;

/// Cells (row, col) of the driver grid that encode distraction classes.
pub const CLASS_CELLS: [(usize, usize); NUM_DISTRACTION_CLASSES] =
    [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2), (2, 3), (3, 0), (3, 1)];

/// Cells (row, col) of the face sub-grid that encode emotions.
pub const EMOTION_CELLS: [(usize, usize); NUM_TEACHER_EMOTIONS] =
    [(0, 0), (0, 2), (1, 0), (1, 2), (2, 0), (2, 2), (3, 0)];

/// Pixel box `(x, y, w, h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PixelBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Where faces are drawn in a driver image: the top-right quadrant.
pub fn face_box(driver: Resolution) -> PixelBox {
    PixelBox {
        x: driver.width / 2,
        y: 0,
        w: driver.width / 2,
        h: driver.height / 2,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub driver_resolution: Resolution,
    pub face_resolution: Resolution,
    pub face_less_fraction: f64,
    pub num_drivers: usize,
    /// Samples per emotion in the teacher set.
    pub fer_per_class: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            num_classes: NUM_DISTRACTION_CLASSES,
            per_class: 8,
            driver_resolution: Resolution::square(16),
            face_resolution: Resolution::square(8),
            face_less_fraction: 0.2,
            num_drivers: 4,
            fer_per_class: 8,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub samples: usize,
    pub with_face: usize,
    pub face_less: usize,
    pub fer_samples: usize,
}

fn fill(img: &mut RgbImage, x0: usize, y0: usize, w: usize, h: usize, rgb: [u8; 3]) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            img.put(x, y, rgb);
        }
    }
}

/// Draws a face with the given emotion into the box.
pub fn draw_face(img: &mut RgbImage, b: PixelBox, emotion: usize) {
    fill(img, b.x, b.y, b.w, b.h, SKIN);
    let (cw, ch) = (b.w / 4, b.h / 4);
    let (r, c) = EMOTION_CELLS[emotion];
    fill(img, b.x + c * cw, b.y + r * ch, cw, ch, FEATURE);
}

pub fn draw_driver(res: Resolution, class: usize, emotion: Option<usize>) -> RgbImage {
    let mut img = RgbImage::new(res.width, res.height);
    fill(&mut img, 0, 0, res.width, res.height, BACKGROUND);
    let (cw, ch) = (res.width / 4, res.height / 4);
    let (r, c) = CLASS_CELLS[class];
    fill(&mut img, c * cw, r * ch, cw, ch, CLASS_MARK);
    if let Some(e) = emotion {
        draw_face(&mut img, face_box(res), e);
    }
    img
}

fn add_noise(img: &mut RgbImage, rng: &mut impl Rng) {
    let (w, h) = (img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let px = img.get(x, y);
            let noisy = px.map(|v| (i32::from(v) + rng.gen_range(-NOISE..=NOISE)).clamp(0, 255) as u8);
            img.put(x, y, noisy);
        }
    }
}

/// Crops a box out of an image and bilinearly resizes it, in raw pixel scale.
pub fn crop_resize(img: &RgbImage, b: PixelBox, out: Resolution) -> Result<RgbImage> {
    let region = crop(&img.to_raw_tensor(), b.x, b.y, b.w, b.h)?;
    RgbImage::from_raw_tensor(&resize_bilinear(&region, out.height, out.width)?)
}

fn check_resolution(name: &str, r: Resolution) -> Result<()> {
    if r.width < 4 || r.height < 4 || r.width % 4 != 0 || r.height % 4 != 0 {
        return Err(Error::Config(format!("{name} resolution {r} must be a positive multiple of 4")));
    }
    Ok(())
}

pub fn sample_id(i: usize) -> String {
    format!("s{i:04}")
}

/// Writes `driver/`, `face/`, `fer/`, `manifest.csv`, `drivers.csv` and
/// `annotations.csv` under `out_dir`.
pub fn generate_synthetic(spec: &SynthSpec, out_dir: &Path) -> Result<SynthSummary> {
    if spec.num_classes == 0 || spec.per_class == 0 {
        return Err(Error::Data("synthetic spec needs at least one class and one sample per class".into()));
    }
    if spec.num_classes > NUM_DISTRACTION_CLASSES {
        return Err(Error::Config(format!("at most {NUM_DISTRACTION_CLASSES} distraction classes")));
    }
    if !(0.0..=1.0).contains(&spec.face_less_fraction) || spec.num_drivers == 0 {
        return Err(Error::Config("face-less fraction must lie in [0, 1] and drivers must be positive".into()));
    }
    check_resolution("driver", spec.driver_resolution)?;
    check_resolution("face", spec.face_resolution)?;

    let n = spec.num_classes * spec.per_class;
    let face_less_count = (spec.face_less_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from(spec.seed, &["face-less"]));
    let mut face_less = vec![false; n];
    order[..face_less_count].iter().for_each(|&i| face_less[i] = true);

    let mut emotion_rng = rng_from(spec.seed, &["emotions"]);
    let fbox = face_box(spec.driver_resolution);
    let mut records = Vec::with_capacity(n);
    let mut drivers = BTreeMap::new();
    let mut annotations = String::new();
    for i in 0..n {
        let id = sample_id(i);
        let class = i % spec.num_classes;
        let emotion = (!face_less[i]).then(|| emotion_rng.gen_range(0..NUM_TEACHER_EMOTIONS));
        let mut img = draw_driver(spec.driver_resolution, class, emotion);
        add_noise(&mut img, &mut rng_from(spec.seed, &["driver", &id]));
        img.save(&out_dir.join("driver").join(format!("{id}.ppm")))?;
        let face_path = match emotion {
            Some(_) => {
                let face = crop_resize(&img, fbox, spec.face_resolution)?;
                let rel = format!("face/{id}.ppm");
                face.save(&out_dir.join(&rel))?;
                annotations.push_str(&format!("{id},{},{},{},{}\n", fbox.x, fbox.y, fbox.w, fbox.h));
                Some(rel)
            }
            None => {
                annotations.push_str(&format!("{id},none\n"));
                None
            }
        };
        drivers.insert(id.clone(), format!("d{:02}", (i / spec.num_classes) % spec.num_drivers));
        records.push(ManifestRecord {
            driver_path: format!("driver/{id}.ppm"),
            face_path,
            distraction: class,
            emotion: emotion.unwrap_or(NON_FACE),
            provenance: Provenance::GroundTruth,
            confidence: None,
            sample_id: id,
        });
    }
    Manifest::save_records(&records, &out_dir.join("manifest.csv"))?;
    save_driver_map(&drivers, &out_dir.join("drivers.csv"))?;
    write_file(&out_dir.join("annotations.csv"), annotations.as_bytes())?;

    let fer_n = NUM_TEACHER_EMOTIONS * spec.fer_per_class;
    let mut fer = Vec::with_capacity(fer_n);
    let fres = spec.face_resolution;
    for i in 0..fer_n {
        let id = format!("f{i:04}");
        let emotion = i % NUM_TEACHER_EMOTIONS;
        let mut img = RgbImage::new(fres.width, fres.height);
        draw_face(&mut img, PixelBox { x: 0, y: 0, w: fres.width, h: fres.height }, emotion);
        add_noise(&mut img, &mut rng_from(spec.seed, &["fer", &id]));
        let rel = format!("{id}.ppm");
        img.save(&out_dir.join("fer").join(&rel))?;
        fer.push(FerRecord { sample_id: id, face_path: rel, emotion });
    }
    save_fer_labels(&fer, &out_dir.join("fer").join("labels.csv"))?;

    Ok(SynthSummary {
        samples: n,
        with_face: n - face_less_count,
        face_less: face_less_count,
        fer_samples: fer_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn face_box_is_top_right_quadrant() {
        assert_eq!(face_box(Resolution::square(16)), PixelBox { x: 8, y: 0, w: 8, h: 8 });
        assert_eq!(face_box(Resolution::square(224)).w, 112);
    }

    #[test]
    fn class_cells_avoid_face() {
        for (r, c) in CLASS_CELLS {
            assert!(!(r < 2 && c >= 2));
        }
    }

    #[test]
    fn rejects_empty_spec() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec { per_class: 0, ..SynthSpec::default() };
        assert!(matches!(generate_synthetic(&spec, dir.path()), Err(Error::Data(_))));
    }
}
