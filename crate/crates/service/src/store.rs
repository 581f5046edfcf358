//! On-disk layout: `datasets/<id>.json` holds a dataset file,
//! `sessions/<id>.json` a [`SessionRecord`]. Files are replaced atomically.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use steermine::io::{dataset_to_string, parse_dataset};
use steermine::model::Dataset;
use steermine::session::SessionState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub id: u64,
    pub dataset_id: u64,
    pub state: SessionState,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write_atomic(path: &Path, text: &str) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text)?;
    fs::rename(tmp, path)
}

fn numbered(dir: &Path) -> io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) {
                out.push((id, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("datasets"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dataset_path(&self, id: u64) -> PathBuf {
        self.root.join("datasets").join(format!("{id}.json"))
    }

    fn session_path(&self, id: u64) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    pub fn save_dataset(&self, id: u64, d: &Dataset) -> steermine::Result<()> {
        write_atomic(&self.dataset_path(id), &dataset_to_string(d)?)?;
        Ok(())
    }

    pub fn save_session(&self, record: &SessionRecord) -> steermine::Result<()> {
        write_atomic(&self.session_path(record.id), &serde_json::to_string(record)?)?;
        Ok(())
    }

    pub fn load_datasets(&self) -> steermine::Result<Vec<(u64, Dataset)>> {
        numbered(&self.root.join("datasets"))?
            .into_iter()
            .map(|(id, path)| Ok((id, parse_dataset(&fs::read_to_string(path)?)?)))
            .collect()
    }

    pub fn load_sessions(&self) -> steermine::Result<Vec<SessionRecord>> {
        numbered(&self.root.join("sessions"))?
            .into_iter()
            .map(|(_, path)| Ok(serde_json::from_str(&fs::read_to_string(path)?)?))
            .collect()
    }
}
