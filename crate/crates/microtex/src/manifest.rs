//! Manifest CSV with a `path,label` header; relative paths are resolved
//! against the manifest's directory and record order is preserved.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub path: PathBuf,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub records: Vec<Record>,
}

impl Manifest {
    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<String> {
        let mut c: Vec<String> = self.records.iter().map(|r| r.label.clone()).collect();
        c.sort();
        c.dedup();
        c
    }

    /// Labels as indices into [`Manifest::classes`].
    pub fn label_indices(&self) -> Vec<usize> {
        let classes = self.classes();
        self.records.iter().map(|r| classes.binary_search(&r.label).expect("label listed")).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.label.clone()).or_insert(0) += 1;
        }
        m
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let err = |message: String| CliError::Manifest { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(""))).map_err(err)
}

pub fn parse_manifest(text: &str, base: &Path) -> std::result::Result<Manifest, String> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| e.to_string())?.clone();
    if headers.iter().collect::<Vec<_>>() != ["path", "label"] {
        return Err(format!("header must be \"path,label\", found {:?}", headers.iter().collect::<Vec<_>>().join(",")));
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| e.to_string())?;
        let line = i + 2;
        let (p, label) = (&row[0], &row[1]);
        if p.is_empty() || label.is_empty() {
            return Err(format!("line {line}: empty path or label"));
        }
        let path = Path::new(p);
        let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
        if !seen.insert(path.clone()) {
            return Err(format!("line {line}: duplicate path {}", path.display()));
        }
        records.push(Record { path, label: label.to_owned() });
    }
    if records.is_empty() {
        return Err("no records".into());
    }
    Ok(Manifest { records })
}

pub fn write_manifest(path: &Path, records: &[Record]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).map_err(|e| CliError::Csv { path: path.into(), message: e.to_string() })?;
    let wrap = |e: csv::Error| CliError::Csv { path: path.into(), message: e.to_string() };
    w.write_record(["path", "label"]).map_err(wrap)?;
    for r in records {
        w.write_record([r.path.to_string_lossy().as_ref(), r.label.as_str()]).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
