use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{StructuredKnob, TuningLakeEntry};
use crate::error::{Error, Result};
use crate::util::{to_json_pretty, write_atomic};

/// Metadata stored next to each lake text file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LakeSidecar {
    pub knob_name: String,
    pub provenance: Vec<String>,
    pub consistency_attempts: u32,
    pub verified: bool,
    /// `(document reference, reason)` for every document the filter dropped.
    #[serde(default)]
    pub discarded: Vec<(String, String)>,
    /// The noise filter could not consult the model for at least one document.
    #[serde(default)]
    pub low_confidence: bool,
}

fn text_path(dir: &Path, knob: &str) -> PathBuf {
    dir.join(format!("{knob}.txt"))
}

fn sidecar_path(dir: &Path, knob: &str) -> PathBuf {
    dir.join(format!("{knob}.provenance.json"))
}

/// Writes `<dir>/<knob>.txt` and its provenance sidecar.
pub fn write_lake_entry(dir: &Path, entry: &TuningLakeEntry, sidecar: &LakeSidecar) -> Result<()> {
    let mut text = entry.summary.clone();
    if !text.is_empty() {
        text.push('\n');
    }
    write_atomic(&text_path(dir, &entry.knob_name), text.as_bytes())?;
    write_atomic(&sidecar_path(dir, &entry.knob_name), &to_json_pretty(sidecar)?)
}

/// `None` when either file of the pair is missing.
pub fn read_lake_entry(dir: &Path, knob: &str) -> Result<Option<TuningLakeEntry>> {
    let (tp, sp) = (text_path(dir, knob), sidecar_path(dir, knob));
    if !tp.is_file() || !sp.is_file() {
        return Ok(None);
    }
    let summary = std::fs::read_to_string(&tp).map_err(|e| Error::io(&tp, e))?;
    let raw = std::fs::read_to_string(&sp).map_err(|e| Error::io(&sp, e))?;
    let side: LakeSidecar = serde_json::from_str(&raw)?;
    Ok(Some(TuningLakeEntry {
        knob_name: knob.to_string(),
        summary: summary.trim().to_string(),
        provenance: side.provenance,
        consistency_attempts: side.consistency_attempts,
        verified: side.verified,
    }))
}

/// Every complete entry in `dir`, keyed by knob name.
pub fn read_lake(dir: &Path) -> Result<BTreeMap<String, TuningLakeEntry>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for item in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = item.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(knob) = name.strip_suffix(".txt") {
            if let Some(entry) = read_lake_entry(dir, knob)? {
                out.insert(knob.to_string(), entry);
            }
        }
    }
    Ok(out)
}

/// Writes `<dir>/<knob>.json`.
pub fn write_structured(dir: &Path, sk: &StructuredKnob) -> Result<PathBuf> {
    let path = dir.join(format!("{}.json", sk.knob_name));
    write_atomic(&path, &to_json_pretty(sk)?)?;
    Ok(path)
}

pub fn read_structured(path: &Path) -> Result<StructuredKnob> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&raw)?)
}

/// Every `*.json` file in `dir`, keyed by knob name. A missing directory
/// yields an empty map.
pub fn read_structured_dir(dir: &Path) -> Result<BTreeMap<String, StructuredKnob>> {
    let mut out = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for item in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = item.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let sk = read_structured(&path)?;
            out.insert(sk.knob_name.clone(), sk);
        }
    }
    Ok(out)
}
