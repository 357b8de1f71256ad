//! CSV tables, pass/fail checks and the JSON run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    /// Floats carry 17 significant digits so they parse back to the same bits.
    pub fn render(&self) -> String {
        match self {
            Cell::F(x) => format_float(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::I(x as i64)
    }
}

impl From<u32> for Cell {
    fn from(x: u32) -> Self {
        Cell::I(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::S(x)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn write(&self, dir: &FsPath) -> LabResult<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| LabError::Io(path.display().to_string(), e))?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    /// Passes when `measured ≤ bound`.
    pub fn at_most(name: impl Into<String>, measured: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured <= bound,
            measured,
            bound,
        }
    }

    pub fn holds(name: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            passed,
            measured: if passed { 1.0 } else { 0.0 },
            bound: 1.0,
        }
    }
}

/// Tables and checks produced by one study.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyOutput {
    pub study: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl StudyOutput {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

pub fn sha256_file(path: &FsPath) -> LabResult<String> {
    let bytes = fs::read(path).map_err(|e| LabError::Io(path.display().to_string(), e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn create_dir(dir: &FsPath) -> LabResult<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::Io(dir.display().to_string(), e))
}

/// Writes every table of every study under `out/<study>/` with a manifest per
/// study, and the run manifest at `out/manifest.json`. Keys are sorted;
/// non-finite numbers become null.
pub fn write_run(out: &FsPath, config: &Value, studies: &[StudyOutput], seconds: f64) -> LabResult<PathBuf> {
    create_dir(out)?;
    let mut files = Vec::new();
    let mut per_study = BTreeMap::new();
    for s in studies {
        let dir = out.join(&s.study);
        create_dir(&dir)?;
        let mut own = Vec::new();
        for t in &s.tables {
            let p = t.write(&dir)?;
            let rel = p.strip_prefix(out).unwrap_or(&p).to_string_lossy().replace('\\', "/");
            let bytes = fs::metadata(&p).map_err(|e| LabError::Io(p.display().to_string(), e))?.len();
            own.push(json!({ "path": rel, "sha256": sha256_file(&p)?, "bytes": bytes, "rows": t.rows.len() }));
        }
        let entry = json!({
            "passed": s.passed(),
            "seconds": s.seconds,
            "checks": s.checks,
        });
        write_json(
            &dir.join("manifest.json"),
            &json!({
                "version": env!("CARGO_PKG_VERSION"),
                "config": config,
                "study": s.study,
                "passed": s.passed(),
                "seconds": s.seconds,
                "checks": s.checks,
                "files": own,
            }),
        )?;
        files.extend(own);
        per_study.insert(s.study.clone(), entry);
    }
    let manifest = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seconds": seconds,
        "passed": studies.iter().all(StudyOutput::passed),
        "studies": per_study,
        "files": files,
    });
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    Ok(path)
}

fn write_json(path: &FsPath, v: &Value) -> LabResult<()> {
    let text = serde_json::to_string_pretty(v)?;
    fs::write(path, text + "\n").map_err(|e| LabError::Io(path.display().to_string(), e))
}
