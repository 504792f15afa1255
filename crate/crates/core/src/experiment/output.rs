use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::error::Result;

/// Bumped whenever a CSV header changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// An in-memory CSV payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(file: impl Into<String>, header: &[&str]) -> Self {
        Self {
            file: file.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner()
            .map_err(|e| crate::Error::Io(std::io::Error::other(e.to_string())))
    }
}

/// Shortest round-trip formatting; stable across runs and platforms.
pub fn num(v: f64) -> String {
    format!("{v}")
}

/// A thresholded pass/fail outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, target: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            target: target.into(),
            pass,
        }
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Additional metadata for the sidecar.
    pub summary: serde_json::Map<String, serde_json::Value>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn table(&self, file: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.file == file)
    }
}

/// Writes via a sibling temporary file and a rename, so readers never see a
/// partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(config: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&canonical);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct Sidecar<'a> {
    experiment: &'static str,
    pass: bool,
    checks: &'a [Check],
    seed: u64,
    config_hash: String,
    config: &'a ExperimentConfig,
    files: Vec<&'a str>,
    csv_schema: u32,
    provenance: String,
    wall_time_s: f64,
    summary: &'a serde_json::Map<String, serde_json::Value>,
}

/// Writes every table and the JSON sidecar; returns the written paths.
pub fn write_outcome(outcome: &Outcome, config: &ExperimentConfig, out_dir: &Path, wall_time_s: f64) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for t in &outcome.tables {
        let p = out_dir.join(&t.file);
        write_atomic(&p, &t.to_bytes()?)?;
        written.push(p);
    }
    let sidecar = Sidecar {
        experiment: config.experiment.name(),
        pass: outcome.pass(),
        checks: &outcome.checks,
        seed: config.seed,
        config_hash: config_hash(config)?,
        config,
        files: outcome.tables.iter().map(|t| t.file.as_str()).collect(),
        csv_schema: CSV_SCHEMA_VERSION,
        provenance: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        wall_time_s,
        summary: &outcome.summary,
    };
    let p = out_dir.join(format!("{}.json", config.experiment.name()));
    write_atomic(&p, &serde_json::to_vec_pretty(&sidecar)?)?;
    written.push(p);
    Ok(written)
}

/// Converts a wide CSV into long format: the `id` columns are kept and every
/// other column becomes a `(variable, value)` row.
pub fn melt(input: &Path, id_columns: &[String]) -> Result<Table> {
    let mut reader = csv::Reader::from_path(input)?;
    let headers = reader.headers()?.clone();
    for id in id_columns {
        if !headers.iter().any(|h| h == id) {
            return Err(crate::Error::config("id", format!("column `{id}` not found in {}", input.display())));
        }
    }
    let ids: Vec<usize> = id_columns
        .iter()
        .map(|id| headers.iter().position(|h| h == id).expect("checked above"))
        .collect();
    let mut header: Vec<&str> = ids.iter().map(|&i| &headers[i]).collect();
    header.extend(["variable", "value"]);
    let file = input
        .file_stem()
        .map(|s| format!("{}_long.csv", s.to_string_lossy()))
        .unwrap_or_else(|| "long.csv".into());
    let mut out = Table::new(file, &header);
    for rec in reader.records() {
        let rec = rec?;
        for (c, name) in headers.iter().enumerate() {
            if ids.contains(&c) {
                continue;
            }
            let mut row: Vec<String> = ids.iter().map(|&i| rec[i].to_string()).collect();
            row.push(name.to_string());
            row.push(rec[c].to_string());
            out.push(row);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_melt() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new("wide.csv", &["n", "x", "y"]);
        t.push(vec!["2".into(), num(0.5), num(1.0)]);
        let p = dir.path().join("sub/wide.csv");
        write_atomic(&p, &t.to_bytes().unwrap()).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "n,x,y\n2,0.5,1\n");
        let leftovers = fs::read_dir(p.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
        let long = melt(&p, &["n".into()]).unwrap();
        assert_eq!(long.header, vec!["n", "variable", "value"]);
        assert_eq!(long.rows, vec![vec!["2", "x", "0.5"], vec!["2", "y", "1"]]);
        assert!(melt(&p, &["missing".into()]).is_err());
    }

    #[test]
    fn config_hash_is_stable() {
        use super::super::config::{ExperimentConfig, ExperimentKind};
        let c = ExperimentConfig::default_for(ExperimentKind::QvCheck);
        let h = config_hash(&c).unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(&c.clone()).unwrap());
        let mut d = c;
        d.seed += 1;
        assert_ne!(h, config_hash(&d).unwrap());
    }
}
