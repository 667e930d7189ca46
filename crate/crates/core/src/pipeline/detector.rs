//! Face detectors: a sidecar-annotation stub, a fixed-rule synthetic
//! detector and one that never finds a face.

use std::collections::BTreeMap;
use std::path::Path;

use crate::data::image::RgbImage;
use crate::data::synth::{face_box, PixelBox};
use crate::error::{Error, Result};
use crate::model::Resolution;

/// Result of running a detector on one driver image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceDetection {
    pub bbox: Option<PixelBox>,
}

impl FaceDetection {
    pub const NOT_FOUND: FaceDetection = FaceDetection { bbox: None };

    pub fn found(&self) -> bool {
        self.bbox.is_some()
    }
}

pub trait FaceDetector: Sync {
    fn detect(&self, sample_id: &str, image: &RgbImage) -> Result<FaceDetection>;
}

/// Boxes read from `sample_id,x,y,w,h` / `sample_id,none` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StubDetector {
    boxes: BTreeMap<String, Option<PixelBox>>,
}

impl StubDetector {
    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut boxes = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Data(format!("annotation line {}: {line:?}", lineno + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let entry = match fields.as_slice() {
                [id, none] if none.eq_ignore_ascii_case("none") => (id.to_string(), None),
                [id, x, y, w, h] => {
                    let n = |s: &str| s.parse::<usize>().map_err(|_| bad());
                    (id.to_string(), Some(PixelBox { x: n(x)?, y: n(y)?, w: n(w)?, h: n(h)? }))
                }
                _ => return Err(bad()),
            };
            if boxes.insert(entry.0.clone(), entry.1).is_some() {
                return Err(Error::Data(format!("duplicate annotation for {}", entry.0)));
            }
        }
        Ok(StubDetector { boxes })
    }

    pub fn insert(&mut self, sample_id: &str, bbox: Option<PixelBox>) {
        self.boxes.insert(sample_id.to_string(), bbox);
    }
}

impl FaceDetector for StubDetector {
    fn detect(&self, sample_id: &str, _image: &RgbImage) -> Result<FaceDetection> {
        match self.boxes.get(sample_id) {
            Some(&bbox) => Ok(FaceDetection { bbox }),
            None => Err(Error::DetectorContract(format!("no annotation for sample {sample_id}"))),
        }
    }
}

/// Looks at the top-right quadrant and reports a face when its mean red
/// channel exceeds 120 (skin is bright red, background is dark).
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticDetector;

pub const SKIN_RED_THRESHOLD: f64 = 120.0;

impl FaceDetector for SyntheticDetector {
    fn detect(&self, _sample_id: &str, image: &RgbImage) -> Result<FaceDetection> {
        let b = face_box(Resolution { height: image.height(), width: image.width() });
        if b.w == 0 || b.h == 0 {
            return Ok(FaceDetection::NOT_FOUND);
        }
        let mut red = 0.0;
        for y in b.y..b.y + b.h {
            for x in b.x..b.x + b.w {
                red += f64::from(image.get(x, y)[0]);
            }
        }
        let found = red / (b.w * b.h) as f64 > SKIN_RED_THRESHOLD;
        Ok(FaceDetection { bbox: found.then_some(b) })
    }
}

/// Never finds a face.
#[derive(Clone, Copy, Debug, Default)]
pub struct NullDetector;

impl FaceDetector for NullDetector {
    fn detect(&self, _sample_id: &str, _image: &RgbImage) -> Result<FaceDetection> {
        Ok(FaceDetection::NOT_FOUND)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_parses_both_forms() {
        let d = StubDetector::parse("a,1,2,3,4\nb,none\n").unwrap();
        let img = RgbImage::new(8, 8);
        assert_eq!(d.detect("a", &img).unwrap().bbox, Some(PixelBox { x: 1, y: 2, w: 3, h: 4 }));
        assert!(!d.detect("b", &img).unwrap().found());
        assert!(matches!(d.detect("c", &img), Err(Error::DetectorContract(_))));
        assert!(StubDetector::parse("a,1,2\n").is_err());
    }

    #[test]
    fn synthetic_rule() {
        let dark = RgbImage::new(16, 16);
        assert!(!SyntheticDetector.detect("x", &dark).unwrap().found());
        let mut lit = RgbImage::new(16, 16);
        for y in 0..8 {
            for x in 8..16 {
                lit.put(x, y, [210, 170, 130]);
            }
        }
        assert_eq!(
            SyntheticDetector.detect("x", &lit).unwrap().bbox,
            Some(PixelBox { x: 8, y: 0, w: 8, h: 8 })
        );
    }
}
