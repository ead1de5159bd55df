//! Run artifacts: per-day CSV, comparison CSV, JSON summary and manifest.
//!
//! All writers are deterministic: identical inputs give identical bytes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::environment::GroundTruth;
use crate::error::Result;
use crate::scenarios::DayReport;

pub const REPORT_FILE: &str = "reports.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "log.ndjson";

/// One CSV row. The column set is the same for every scenario; fields that
/// do not apply are written empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub arm: Option<String>,
    pub day: u32,
    pub samples: u64,
    pub empirical_ctr: f64,
    pub se: f64,
    pub expected_ctr: f64,
    pub oracle_ctr: f64,
    pub regret: f64,
    pub features_used: String,
    pub trained_on: Option<String>,
}

impl ReportRow {
    pub fn from_day(scenario: &str, r: &DayReport) -> Self {
        Self {
            scenario: scenario.to_string(),
            arm: r.arm.map(|a| a.to_string()),
            day: r.day,
            samples: r.samples,
            empirical_ctr: r.empirical_ctr,
            se: r.binomial_se,
            expected_ctr: r.expected_ctr,
            oracle_ctr: r.oracle_ctr,
            regret: r.regret,
            features_used: r.features_used.clone(),
            trained_on: r.trained_on.map(|(a, b)| if a == b { a.to_string() } else { format!("{a}-{b}") }),
        }
    }
}

/// Policy-variant comparison row for the click/sale and two-decision runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario: String,
    pub policy: String,
    pub features: String,
    /// Objective under the fitted model, where one exists.
    pub model_objective: Option<f64>,
    /// Exact expected reward in the true environment.
    pub expected_reward: f64,
    pub oracle_reward: f64,
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Everything needed to rerun a command and get the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub tool_version: String,
    /// SHA-256 of the serialized environment.
    pub ground_truth_fingerprint: String,
}

impl RunManifest {
    pub fn new(scenario: &str, config: &impl Serialize, seed: u64, gt: &GroundTruth) -> Result<Self> {
        Ok(Self {
            scenario: scenario.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            artifacts: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ground_truth_fingerprint: gt.fingerprint(),
        })
    }
}

/// Writes artifacts into one directory and records their names.
pub struct ArtifactDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn file(&mut self, name: &str) -> Result<fs::File> {
        self.written.push(name.to_string());
        Ok(fs::File::create(self.dir.join(name))?)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let f = self.file(name)?;
        write_csv(rows, std::io::BufWriter::new(f))
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut f = std::io::BufWriter::new(self.file(name)?);
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    /// Writes the manifest last, listing every artifact written before it.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<PathBuf> {
        manifest.artifacts = self.written.clone();
        self.json(MANIFEST_FILE, &manifest)?;
        Ok(self.dir)
    }
}
