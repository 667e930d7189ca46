//! Dataset manifests (CSV, UTF-8, LF line endings).
//!
//! Paths inside a manifest are relative to the directory holding it and use
//! `/` separators, so a dataset tree can be moved or compared byte-for-byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::classes::{NON_FACE, NUM_DISTRACTION_CLASSES, NUM_EMOTION_CLASSES, NUM_TEACHER_EMOTIONS};
use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 7] =
    ["sample_id", "driver_path", "face_path", "distraction", "emotion", "provenance", "confidence"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    GroundTruth,
    Pseudo,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::GroundTruth => "GROUND_TRUTH",
            Provenance::Pseudo => "PSEUDO",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "GROUND_TRUTH" => Ok(Provenance::GroundTruth),
            "PSEUDO" => Ok(Provenance::Pseudo),
            other => Err(Error::Data(format!("unknown provenance {other:?}"))),
        }
    }
}

/// One driver sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub sample_id: String,
    pub driver_path: String,
    /// `None` when no face was found (Non-Face).
    pub face_path: Option<String>,
    pub distraction: usize,
    pub emotion: usize,
    pub provenance: Provenance,
    pub confidence: Option<f64>,
}

impl ManifestRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Data(format!("record {}: {msg}", self.sample_id)));
        if self.sample_id.is_empty() {
            return Err(Error::Data("record with empty sample_id".into()));
        }
        if self.distraction >= NUM_DISTRACTION_CLASSES {
            return fail(format!("distraction label {} out of range", self.distraction));
        }
        if self.emotion >= NUM_EMOTION_CLASSES {
            return fail(format!("emotion label {} out of range", self.emotion));
        }
        if (self.emotion == NON_FACE) != self.face_path.is_none() {
            return fail("emotion label 7 (Non-Face) must coincide with a missing face".into());
        }
        let expect_conf = self.provenance == Provenance::Pseudo && self.face_path.is_some();
        if self.confidence.is_some() != expect_conf {
            return fail("confidence must be present exactly for pseudo-labeled faces".into());
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return fail(format!("confidence {c} is not a probability"));
            }
        }
        Ok(())
    }
}

/// Records plus the directory their relative paths resolve against.
#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub dir: PathBuf,
    pub records: Vec<ManifestRecord>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format {
            offset,
            message: format!("{}: {other:?}", path.display()),
        },
    }
}

fn parse_label(field: &str, what: &str, id: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| Error::Data(format!("record {id}: bad {what} label {field:?}")))
}

/// Serializes records sorted by sample id.
pub fn encode_manifest(records: &[ManifestRecord]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&ManifestRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(MANIFEST_HEADER).map_err(to_err)?;
    for r in sorted {
        r.validate()?;
        w.write_record([
            r.sample_id.as_str(),
            r.driver_path.as_str(),
            r.face_path.as_deref().unwrap_or(""),
            &r.distraction.to_string(),
            &r.emotion.to_string(),
            r.provenance.as_str(),
            &r.confidence.map(|c| c.to_string()).unwrap_or_default(),
        ])
        .map_err(to_err)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

pub fn decode_manifest(bytes: &[u8], source: &Path) -> Result<Vec<ManifestRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = rdr.headers().map_err(|e| csv_err(source, e))?;
    if header.iter().ne(MANIFEST_HEADER) {
        return Err(Error::Format {
            offset: 0,
            message: format!("{}: unexpected manifest header", source.display()),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(source, e))?;
        let id = row[0].to_string();
        let rec = ManifestRecord {
            driver_path: row[1].to_string(),
            face_path: (!row[2].is_empty()).then(|| row[2].to_string()),
            distraction: parse_label(&row[3], "distraction", &id)?,
            emotion: parse_label(&row[4], "emotion", &id)?,
            provenance: Provenance::parse(&row[5])?,
            confidence: if row[6].is_empty() {
                None
            } else {
                Some(row[6].parse().map_err(|_| Error::Data(format!("record {id}: bad confidence")))?)
            },
            sample_id: id,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let records = decode_manifest(&bytes, path)?;
        let mut seen = std::collections::BTreeSet::new();
        if let Some(dup) = records.iter().find(|r| !seen.insert(r.sample_id.as_str())) {
            return Err(Error::Data(format!("duplicate sample_id {}", dup.sample_id)));
        }
        Ok(Manifest {
            dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            records,
        })
    }

    /// Writes the manifest to `path`; record paths must already be relative to its directory.
    pub fn save_records(records: &[ManifestRecord], path: &Path) -> Result<()> {
        let bytes = encode_manifest(records)?;
        write_file(path, &bytes)
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.dir.join(relative)
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// `to` expressed relative to directory `from_dir`, with `/` separators.
pub fn relative_path(to: &Path, from_dir: &Path) -> Result<String> {
    let abs = |p: &Path| {
        std::fs::canonicalize(p).map_err(|e| Error::io(p, e))
    };
    let to_abs = abs(to)?;
    let from_abs = abs(from_dir)?;
    let rel = pathdiff::diff_paths(&to_abs, &from_abs)
        .ok_or_else(|| Error::Data(format!("cannot relate {} to {}", to.display(), from_dir.display())))?;
    Ok(rel
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/"))
}

/// One teacher training sample: a face crop with a seven-way emotion label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FerRecord {
    pub sample_id: String,
    pub face_path: String,
    pub emotion: usize,
}

pub const FER_HEADER: [&str; 3] = ["sample_id", "face_path", "emotion"];

pub fn save_fer_labels(records: &[FerRecord], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(FER_HEADER).map_err(to_err)?;
    let mut sorted: Vec<&FerRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    for r in sorted {
        w.write_record([r.sample_id.as_str(), r.face_path.as_str(), &r.emotion.to_string()])
            .map_err(to_err)?;
    }
    write_file(path, &w.into_inner().map_err(|e| Error::Data(e.to_string()))?)
}

pub fn load_fer_labels(path: &Path) -> Result<Vec<FerRecord>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    if header.iter().ne(FER_HEADER) {
        return Err(Error::Format {
            offset: 0,
            message: format!("{}: unexpected label header", path.display()),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let emotion = parse_label(&row[2], "emotion", &row[0])?;
        if emotion >= NUM_TEACHER_EMOTIONS {
            return Err(Error::Data(format!("record {}: teacher emotion {emotion} out of range", &row[0])));
        }
        out.push(FerRecord {
            sample_id: row[0].to_string(),
            face_path: row[1].to_string(),
            emotion,
        });
    }
    Ok(out)
}

/// `sample_id → driver_id` map (`drivers.csv`).
pub fn load_driver_map(path: &Path) -> Result<BTreeMap<String, String>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if row.len() != 2 {
            return Err(Error::Data(format!("{}: expected sample_id,driver_id", path.display())));
        }
        out.insert(row[0].to_string(), row[1].to_string());
    }
    Ok(out)
}

pub fn save_driver_map(map: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Data(e.to_string());
    w.write_record(["sample_id", "driver_id"]).map_err(to_err)?;
    for (s, d) in map {
        w.write_record([s, d]).map_err(to_err)?;
    }
    write_file(path, &w.into_inner().map_err(|e| Error::Data(e.to_string()))?)
}
