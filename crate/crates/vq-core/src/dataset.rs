//! JSONL sample manifests and image loading.
//!
//! Input schema, one object per line:
//! `{"id": string, "image": string, "question": string, "answer": string, "choices": [string]?}`.
//! Image paths are resolved relative to the manifest file's directory.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::render::RenderStyle;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid manifest:\n{0}")]
    Invalid(ManifestReport),
    #[error("unreadable image {path}: {message}")]
    BadImage { path: PathBuf, message: String },
    #[error("image {path} has a zero dimension")]
    ZeroDimension { path: PathBuf },
}

/// All schema violations found in one manifest, with 1-based line numbers.
#[derive(Debug, Default)]
pub struct ManifestReport {
    pub issues: Vec<LineIssue>,
}

#[derive(Debug)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ManifestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "  line {}: {}", issue.line, issue.message)?;
        }
        Ok(())
    }
}

/// One training or evaluation instance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Sample {
    pub id: String,
    #[serde(rename = "image")]
    pub image_path: PathBuf,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

/// Whether an output row kept the original image or rendered a VQ canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderMode {
    Orig,
    Vq,
}

/// One line of a rendered-output manifest. Records every style parameter so
/// a run can be reproduced bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RenderManifestEntry {
    #[serde(rename = "id")]
    pub sample_id: String,
    pub rendered_image: String,
    pub mode: RenderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style: Option<RenderStyle>,
    pub prompt: String,
    pub seed: u64,
}

/// Header line carried at the top of emitted manifests and traces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: String,
    pub config_fingerprint: String,
}

fn io_err(path: &Path, source: io::Error) -> DatasetError {
    DatasetError::Io { path: path.to_path_buf(), source }
}

/// Loads and validates a JSONL sample manifest. All malformed lines are
/// collected into one report rather than failing on the first.
pub fn load_manifest(path: &Path) -> Result<Vec<Sample>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut samples = Vec::new();
    let mut report = ManifestReport::default();
    let mut seen = std::collections::HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut sample: Sample = match serde_json::from_str(line) {
            Ok(s) => s,
            Err(e) => {
                report.issues.push(LineIssue { line: lineno, message: e.to_string() });
                continue;
            }
        };
        if sample.id.is_empty() {
            report.issues.push(LineIssue { line: lineno, message: "empty id".into() });
            continue;
        }
        if sample.question.trim().is_empty() {
            report.issues.push(LineIssue {
                line: lineno,
                message: format!("sample \"{}\": question is empty", sample.id),
            });
            continue;
        }
        if let Some(first) = seen.insert(sample.id.clone(), lineno) {
            report.issues.push(LineIssue {
                line: lineno,
                message: format!(
                    "duplicate id \"{}\" (first seen on line {first})",
                    sample.id
                ),
            });
            continue;
        }
        if sample.image_path.is_relative() {
            sample.image_path = base.join(&sample.image_path);
        }
        samples.push(sample);
    }
    if report.issues.is_empty() {
        Ok(samples)
    } else {
        Err(DatasetError::Invalid(report))
    }
}

/// Loads a PNG or JPEG as 8-bit RGB; any alpha is composited onto white.
pub fn load_image(path: &Path) -> Result<RgbImage, DatasetError> {
    let dynamic = image::ImageReader::open(path)
        .map_err(|e| io_err(path, e))?
        .decode()
        .map_err(|e| DatasetError::BadImage { path: path.to_path_buf(), message: e.to_string() })?;
    let rgba = dynamic.to_rgba8();
    if rgba.width() == 0 || rgba.height() == 0 {
        return Err(DatasetError::ZeroDimension { path: path.to_path_buf() });
    }
    let mut rgb = RgbImage::new(rgba.width(), rgba.height());
    for (out, px) in rgb.pixels_mut().zip(rgba.pixels()) {
        let a = px[3] as u32;
        for c in 0..3 {
            let v = (px[c] as u32 * a + 255 * (255 - a) + 127) / 255;
            out[c] = v.min(255) as u8;
        }
    }
    Ok(rgb)
}

/// Writes entries one JSON object per line, preceded by `header` when given.
/// Identical inputs produce a byte-identical file.
pub fn write_manifest(
    entries: &[RenderManifestEntry],
    path: &Path,
    header: Option<&ManifestHeader>,
) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    if let Some(h) = header {
        serde_json::to_writer(&mut out, h).expect("header serialization");
        out.push(b'\n');
    }
    for entry in entries {
        serde_json::to_writer(&mut out, entry).expect("entry serialization");
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&out).map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Parses a rendered-output manifest, skipping a leading header line.
pub fn read_render_manifest(path: &Path) -> Result<Vec<RenderManifestEntry>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut entries = Vec::new();
    let mut report = ManifestReport::default();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 && serde_json::from_str::<ManifestHeader>(line).is_ok() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => entries.push(e),
            Err(e) => report.issues.push(LineIssue { line: idx + 1, message: e.to_string() }),
        }
    }
    if report.issues.is_empty() {
        Ok(entries)
    } else {
        Err(DatasetError::Invalid(report))
    }
}
