use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json, EVALUATIONS_CSV, MANIFEST_JSON};
use crate::error::{Error, Result};
use crate::seed::sha256_hex;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub status: String,
    pub seconds: f64,
    pub counts: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub sha256: String,
    /// False for files that carry wall-clock timings.
    pub deterministic: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub master_seed: u64,
    pub config: String,
    pub inputs: BTreeMap<String, String>,
    pub phases: BTreeMap<String, PhaseRecord>,
    pub files: BTreeMap<String, FileRecord>,
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for e in entries {
        let path = e.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            walk(root, &path, out)?;
        } else if let Ok(rel) = path.strip_prefix(root) {
            let rel = rel.to_string_lossy().replace('\\', "/");
            if rel != MANIFEST_JSON {
                out.push(rel);
            }
        }
    }
    Ok(())
}

impl RunManifest {
    pub fn load_or_default(out_dir: &Path) -> Result<Self> {
        let path = out_dir.join(MANIFEST_JSON);
        if path.exists() {
            read_json(&path)
        } else {
            Ok(RunManifest::default())
        }
    }

    /// Re-hashes every file under `out_dir` except the manifest itself.
    pub fn rescan(&mut self, out_dir: &Path) -> Result<()> {
        let mut files = Vec::new();
        walk(out_dir, out_dir, &mut files)?;
        files.sort();
        self.files.clear();
        for rel in files {
            let path = out_dir.join(&rel);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let deterministic = rel != EVALUATIONS_CSV;
            self.files.insert(
                rel,
                FileRecord {
                    sha256: sha256_hex(&bytes),
                    deterministic,
                },
            );
        }
        Ok(())
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn save(&self, out_dir: &Path) -> Result<()> {
        write_json(&out_dir.join(MANIFEST_JSON), self)
    }
}
