use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inventory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceManifestEntry {
    pub id: String,
    pub wav_path: PathBuf,
    /// Contextual representation matrix (T x 1024, MTX1).
    pub ct_path: PathBuf,
    pub posterior_path: PathBuf,
    pub phones: Vec<String>,
    pub fluency: u8,
    pub prosody: u8,
}

#[derive(Deserialize)]
struct RawEntry {
    id: String,
    wav_path: PathBuf,
    ct_path: PathBuf,
    posterior_path: PathBuf,
    phones: Vec<String>,
    fluency: i64,
    prosody: i64,
}

fn check_score(name: &str, v: i64, line: usize) -> Result<u8> {
    if (0..=10).contains(&v) {
        Ok(v as u8)
    } else {
        Err(Error::Validation {
            line,
            message: format!("{name} score {v} outside 0..=10"),
        })
    }
}

/// Parses line-delimited JSON. Blank lines are skipped; `line` numbers in
/// errors are 1-based. Relative paths are resolved against `base_dir`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<UtteranceManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let raw: RawEntry = serde_json::from_str(raw_line).map_err(|e| Error::Validation {
            line,
            message: e.to_string(),
        })?;
        if raw.phones.is_empty() {
            return Err(Error::Validation {
                line,
                message: "empty phone list".into(),
            });
        }
        for p in &raw.phones {
            inventory::index_of(p).map_err(|_| Error::Validation {
                line,
                message: format!("unknown phoneme symbol {p:?}"),
            })?;
        }
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        out.push(UtteranceManifestEntry {
            fluency: check_score("fluency", raw.fluency, line)?,
            prosody: check_score("prosody", raw.prosody, line)?,
            id: raw.id,
            wav_path: resolve(raw.wav_path),
            ct_path: resolve(raw.ct_path),
            posterior_path: resolve(raw.posterior_path),
            phones: raw.phones,
        });
    }
    Ok(out)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<UtteranceManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn format_manifest(entries: &[UtteranceManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[UtteranceManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_manifest(entries)).map_err(|e| Error::io(path, e))
}
