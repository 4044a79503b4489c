//! On-disk formats.
//!
//! * Record files (`records_*.ndjson`): one JSON object per trial, the fields of
//!   [`TrialRecord`] plus `"schema": "rwpe.trial.v1"`. Each entry of `data` is
//!   `{"t", "omega_inv", "d": 0|1, "role": "accepted"|"check"|"unwound"}`.
//! * Particle-filter files (`pf_*.ndjson`): one [`PfTrial`] per line plus
//!   `"schema": "rwpe.pf_trial.v1"`.
//! * Summary files (`summary_*.json`): a single [`SummaryFile`] document.
//! * `metadata.json`: a single [`RunMetadata`] document.
//!
//! Floats are written in shortest round-trip form, so re-reading a record file reproduces
//! every value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rwpe::risk::{PfTrial, ProfileBinning, RiskSummary, TrialRecord};
use rwpe::{LiuWestConfig, WalkerConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::SuiteConfig;

pub const TRIAL_SCHEMA: &str = "rwpe.trial.v1";
pub const PF_TRIAL_SCHEMA: &str = "rwpe.pf_trial.v1";
pub const SUMMARY_SCHEMA: &str = "rwpe.summary.v1";
pub const METADATA_SCHEMA: &str = "rwpe.metadata.v1";

#[derive(Serialize, Deserialize)]
struct Line<T> {
    schema: String,
    #[serde(flatten)]
    body: T,
}

fn write_lines<'a, T: Serialize + 'a>(path: &Path, schema: &str, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for body in items {
        serde_json::to_writer(
            &mut out,
            &Line {
                schema: schema.to_string(),
                body,
            },
        )
        .with_context(|| format!("writing {}", path.display()))?;
        out.write_all(b"\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))
}

fn read_lines<T: DeserializeOwned>(path: &Path, schema: &str) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line<T> =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed record", path.display(), n + 1))?;
        if parsed.schema != schema {
            bail!(
                "{}:{}: schema {:?}, expected {schema:?}",
                path.display(),
                n + 1,
                parsed.schema
            );
        }
        items.push(parsed.body);
    }
    Ok(items)
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    write_lines(path, TRIAL_SCHEMA, records)
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    read_lines(path, TRIAL_SCHEMA)
}

pub fn write_pf_trials(path: &Path, trials: &[PfTrial]) -> Result<()> {
    write_lines(path, PF_TRIAL_SCHEMA, trials)
}

pub fn read_pf_trials(path: &Path) -> Result<Vec<PfTrial>> {
    read_lines(path, PF_TRIAL_SCHEMA)
}

/// Loss statistics of the particle filter on the same records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfSummary {
    pub config: LiuWestConfig,
    pub n_trials: u64,
    pub n_failed: u64,
    pub mean_loss: f64,
    pub median_loss: f64,
    /// Particle-filter median loss over walker median loss.
    pub median_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema: String,
    pub label: String,
    pub records_file: String,
    pub walker: WalkerConfig,
    /// Van Trees bound for `n_exp` accepted experiments, scaled by `sigma0²`.
    pub van_trees_bound: f64,
    pub bayes_risk_over_bound: f64,
    pub heisenberg_reference: f64,
    pub summary: RiskSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pf: Option<PfSummary>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, value).with_context(|| format!("writing {}", path.display()))?;
    out.write_all(b"\n")
        .with_context(|| format!("writing {}", path.display()))?;
    out.flush().with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Recomputes a summary from its record file; used to check that outputs round-trip.
pub fn recompute_summary(records_path: &Path, binning: ProfileBinning) -> Result<RiskSummary> {
    Ok(rwpe::risk::summarize(&read_records(records_path)?, binning))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub schema: String,
    pub code_version: String,
    pub rng: String,
    pub config: SuiteConfig,
    pub defaults: SuiteConfig,
    /// Whether record files carry per-measurement `data`.
    pub data_retained: bool,
    pub files: Vec<PathBuf>,
}
