//! CSV artifacts, run manifests and the collated report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{CliError, ErrorClass};

pub const MANIFEST: &str = "manifest.json";

/// Shortest round-trip decimal; never localized, never exponent notation.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// In-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub file: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub class: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub status: String,
    pub seed: u64,
    pub spec_hash: String,
    pub spec: serde_json::Value,
    pub description: String,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub artifacts: Vec<ArtifactRecord>,
    pub error: Option<ErrorRecord>,
    pub version: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_tables(dir: &Path, tables: &[Table]) -> Result<Vec<ArtifactRecord>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    tables
        .iter()
        .map(|t| {
            let bytes = t.to_bytes();
            let file = format!("{}.csv", t.name);
            let path = dir.join(&file);
            std::fs::write(&path, &bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
            Ok(ArtifactRecord {
                file,
                rows: t.rows.len(),
                sha256: sha256_hex(&bytes),
            })
        })
        .collect()
}

pub fn write_manifest(dir: &Path, m: &Manifest) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn error_record(e: &CliError) -> ErrorRecord {
    ErrorRecord {
        class: e.class.name().to_string(),
        message: e.message.clone(),
    }
}

/// Collates every manifest under `root` into one table, sorted by path.
pub fn collate(root: &Path) -> Result<Table, CliError> {
    if !root.is_dir() {
        return Err(CliError::config(format!("report directory {} does not exist", root.display())));
    }
    let mut paths: Vec<PathBuf> = WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && e.file_name() == MANIFEST)
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    let mut t = Table::new(
        "summary",
        &["run", "kind", "status", "error_class", "seed", "spec_hash", "wall_time_s", "artifacts"],
    );
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(format!("cannot read {}: {e}", p.display())))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{} is not a run manifest: {e}", p.display())))?;
        let run = p
            .parent()
            .and_then(|d| d.strip_prefix(root).ok())
            .map(|d| d.display().to_string())
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| ".".into());
        t.push(vec![
            run,
            m.kind,
            m.status,
            m.error.map(|e| e.class).unwrap_or_default(),
            m.seed.to_string(),
            m.spec_hash,
            num(m.wall_time_s),
            m.artifacts.iter().map(|a| a.file.as_str()).collect::<Vec<_>>().join(";"),
        ]);
    }
    Ok(t)
}

impl ErrorClass {
    pub fn from_name(s: &str) -> Option<Self> {
        [ErrorClass::Config, ErrorClass::Dataset, ErrorClass::Simulation, ErrorClass::Io]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_plain_decimals() {
        assert_eq!(num(0.5), "0.5");
        assert_eq!(num(1e9), "1000000000");
        assert_eq!(num(1.4e-7), "0.00000014");
        assert_eq!(num(f64::NAN), "");
        assert_eq!(num(1234567.0), "1234567");
    }

    #[test]
    fn csv_has_header_and_quotes() {
        let mut t = Table::new("t", &["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        assert_eq!(String::from_utf8(t.to_bytes()).unwrap(), "a,b\n1,\"x,y\"\n");
        assert_eq!(t.column("b").unwrap(), vec!["x,y"]);
    }
}
