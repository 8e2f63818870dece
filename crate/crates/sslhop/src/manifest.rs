//! Dataset manifests: a JSON document listing each subject's ED/ES field
//! files and class label.
//!
//! ```json
//! {
//!   "classes": ["NOR", "MINF", "DCM", "HCM", "RV"],
//!   "records": [
//!     {"subject_id": "s000", "ed_path": "fields/s000_ED.fld",
//!      "es_path": "fields/s000_ES.fld", "label": 0, "label_name": "NOR"}
//!   ]
//! }
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub ed_path: PathBuf,
    pub es_path: PathBuf,
    pub label: usize,
    #[serde(default)]
    pub label_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Class names indexed by label id.
    pub classes: Vec<String>,
    pub records: Vec<SubjectRecord>,
    /// Directory relative paths resolve against; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Check ids are unique and labels are within the class table.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.subject_id.as_str()) {
                return Err(Error::DuplicateSubject(r.subject_id.clone()));
            }
            if r.label >= self.classes.len() {
                return Err(Error::UnknownLabel {
                    subject: r.subject_id.clone(),
                    label: r.label,
                    classes: self.classes.len(),
                });
            }
        }
        Ok(())
    }

    /// Keep only the records for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&SubjectRecord) -> bool) -> Self {
        Self {
            classes: self.classes.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            root: self.root.clone(),
        }
    }
}

/// Load, validate, and check that every referenced field file exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::BadHeader(format!("{}: {e}", path.display())))?;
    m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    m.validate()?;
    for r in &m.records {
        for p in [&r.ed_path, &r.es_path] {
            let full = m.resolve(p);
            if !full.exists() {
                return Err(Error::MissingFile(full));
            }
        }
    }
    Ok(m)
}

pub fn save_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
