use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

/// Result files staged in memory and written in one go.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct OutputSet {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((rel.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, rel: impl Into<PathBuf>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(rel, bytes);
        Ok(())
    }

    pub fn add_jsonl<'a, T: Serialize + 'a>(
        &mut self,
        rel: impl Into<PathBuf>,
        rows: impl IntoIterator<Item = &'a T>,
    ) -> Result<()> {
        self.add(rel, jsonl_bytes(rows)?);
        Ok(())
    }

    pub fn add_csv<'a, T: Serialize + 'a>(
        &mut self,
        rel: impl Into<PathBuf>,
        rows: impl IntoIterator<Item = &'a T>,
    ) -> Result<()> {
        self.add(rel, csv_bytes(rows)?);
        Ok(())
    }

    pub fn paths(&self) -> impl Iterator<Item = &Path> {
        self.files.iter().map(|(p, _)| p.as_path())
    }

    pub fn get(&self, rel: impl AsRef<Path>) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(p, _)| p == rel.as_ref())
            .map(|(_, b)| b.as_slice())
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Write every file under `dir`. Each file goes to a temporary name and is
    /// renamed into place; on any failure everything written so far is
    /// removed again, so a failed call leaves no result files behind.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let dir_existed = dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written: Vec<PathBuf> = Vec::new();
        let mut made_dirs: Vec<PathBuf> = Vec::new();
        let res = (|| -> Result<()> {
            for (rel, bytes) in &self.files {
                let target = dir.join(rel);
                if let Some(parent) = target.parent() {
                    if !parent.exists() {
                        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                        made_dirs.push(parent.to_path_buf());
                    }
                }
                let tmp = target.with_extension("partial");
                fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
                if let Err(e) = fs::rename(&tmp, &target) {
                    let _ = fs::remove_file(&tmp);
                    return Err(Error::io(&target, e));
                }
                written.push(target);
            }
            Ok(())
        })();
        if res.is_err() {
            for f in &written {
                let _ = fs::remove_file(f);
            }
            for d in made_dirs.iter().rev() {
                let _ = fs::remove_dir(d);
            }
            if !dir_existed {
                let _ = fs::remove_dir(dir);
            }
        }
        res
    }
}

pub fn jsonl_bytes<'a, T: Serialize + 'a>(rows: impl IntoIterator<Item = &'a T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn csv_bytes<'a, T: Serialize + 'a>(rows: impl IntoIterator<Item = &'a T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {e}")))
}
