//! Experiment suites. Each one runs a small sweep of ensembles and writes a record file and a
//! summary per ensemble, plus one `metadata.json` for the run.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rwpe::risk::{
    mean, median, pf_postprocess, run_ensemble, run_fixed_omega_ensemble, summarize, uniform_grid, van_trees_bound,
    ProfileBinning, TrialRecord, HEISENBERG_REFERENCE,
};
use rwpe::{UnwindMode, WalkerConfig};

use crate::config::{Suite, SuiteConfig};
use crate::output::{
    write_json, write_pf_trials, write_records, PfSummary, RunMetadata, SummaryFile, METADATA_SCHEMA, SUMMARY_SCHEMA,
};

/// Binning of `|true_omega|` for ensembles drawn from the prior.
pub const ENSEMBLE_BINNING: ProfileBinning = ProfileBinning::Uniform { width: 0.25, max: 5.0 };

pub const LOSS_HISTOGRAM_UNWINDS: [u64; 3] = [0, 1, 2];
pub const HEISENBERG_UNWINDS: [u64; 4] = [0, 1, 2, 3];
pub const HEISENBERG_N_EXP: [u64; 4] = [25, 50, 75, 100];
pub const PF_TAU_CHECKS: [f64; 2] = [0.01, 1.0];
pub const RISK_PROFILE_UNWINDS: [u64; 3] = [1, 2, 3];

/// What a suite wrote, with one human-readable line per ensemble.
#[derive(Debug, Default)]
pub struct SuiteReport {
    pub files: Vec<PathBuf>,
    pub lines: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    report: SuiteReport,
}

impl Writer<'_> {
    fn path(&mut self, name: String) -> PathBuf {
        self.report.files.push(PathBuf::from(&name));
        self.dir.join(name)
    }

    fn ensemble(
        &mut self,
        label: &str,
        walker: &WalkerConfig,
        records: &[TrialRecord],
        binning: ProfileBinning,
    ) -> Result<SummaryFile> {
        let records_file = format!("records_{label}.ndjson");
        write_records(&self.path(records_file.clone()), records)?;
        let summary = summarize(records, binning);
        let bound = van_trees_bound(walker.n_exp) * walker.sigma0 * walker.sigma0;
        let file = SummaryFile {
            schema: SUMMARY_SCHEMA.into(),
            label: label.into(),
            records_file,
            walker: *walker,
            van_trees_bound: bound,
            bayes_risk_over_bound: summary.bayes_risk / bound,
            heisenberg_reference: HEISENBERG_REFERENCE,
            summary,
            pf: None,
        };
        self.report.lines.push(format!(
            "{label}: {} trials, median loss {:.3e}, mean loss {:.3e}, van Trees bound {:.3e}, budget exhausted {}",
            file.summary.n_trials,
            file.summary.median_loss,
            file.summary.bayes_risk,
            bound,
            file.summary.n_budget_exhausted
        ));
        Ok(file)
    }

    fn summary(&mut self, file: &SummaryFile) -> Result<()> {
        let path = self.path(format!("summary_{}.json", file.label));
        write_json(&path, file)
    }
}

fn tau_label(tau: f64) -> String {
    format!("tau{tau}")
}

/// Runs the configured suite, writing into `config.output_dir`.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let dir = config.output_dir.as_path();
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut w = Writer {
        dir,
        report: SuiteReport::default(),
    };
    let base = config.walker;
    let seed = config.master_seed;
    let mut data_retained = true;

    match config.suite {
        Suite::SingleTrial => {
            let records = run_ensemble(&base, 1, seed)?;
            let file = w.ensemble("single", &base, &records, ENSEMBLE_BINNING)?;
            w.summary(&file)?;
        }
        Suite::LossHistogram => {
            for n_unwind in LOSS_HISTOGRAM_UNWINDS {
                let walker = WalkerConfig { n_unwind, ..base };
                let records = run_ensemble(&walker, config.n_trials, seed)?;
                let file = w.ensemble(&format!("unwind{n_unwind}"), &walker, &records, ENSEMBLE_BINNING)?;
                w.summary(&file)?;
            }
        }
        Suite::HeisenbergScaling => {
            for n_unwind in HEISENBERG_UNWINDS {
                for n_exp in HEISENBERG_N_EXP {
                    let walker = WalkerConfig {
                        n_unwind,
                        n_exp,
                        max_total_experiments: base.max_total_experiments.max(n_exp),
                        ..base
                    };
                    let records = run_ensemble(&walker, config.n_trials, seed)?;
                    let label = format!("unwind{n_unwind}_nexp{n_exp}");
                    let file = w.ensemble(&label, &walker, &records, ENSEMBLE_BINNING)?;
                    w.summary(&file)?;
                }
            }
        }
        Suite::PfComparison => {
            let pf = config.pf.context("pf_comparison requires a [pf] block")?;
            for tau_check in PF_TAU_CHECKS {
                let walker = WalkerConfig { tau_check, ..base };
                let records = run_ensemble(&walker, config.n_trials, seed)?;
                let label = tau_label(tau_check);
                let mut file = w.ensemble(&label, &walker, &records, ENSEMBLE_BINNING)?;
                let pf_trials = pf_postprocess(&records, &walker, &pf, seed)?;
                write_pf_trials(&w.path(format!("pf_{label}.ndjson")), &pf_trials)?;
                let losses: Vec<f64> = pf_trials.iter().map(|t| t.quadratic_loss).collect();
                let pf_summary = PfSummary {
                    config: pf,
                    n_trials: pf_trials.len() as u64,
                    n_failed: pf_trials.iter().filter(|t| t.failed_at.is_some()).count() as u64,
                    mean_loss: mean(&losses),
                    median_loss: median(&losses),
                    median_ratio: median(&losses) / file.summary.median_loss,
                };
                w.report.lines.push(format!(
                    "{label}: particle filter median loss {:.3e} ({:.3e}x the walker's)",
                    pf_summary.median_loss, pf_summary.median_ratio
                ));
                file.pf = Some(pf_summary);
                w.summary(&file)?;
            }
        }
        Suite::RiskProfile => {
            data_retained = false;
            let grid = uniform_grid(config.profile.grid_points, config.profile.omega_max);
            for mode in [UnwindMode::Unconstrained, UnwindMode::ConstrainedToPrior] {
                for n_unwind in RISK_PROFILE_UNWINDS {
                    let walker = WalkerConfig {
                        n_unwind,
                        unwind_mode: mode,
                        ..base
                    };
                    let records =
                        run_fixed_omega_ensemble(&walker, &grid, config.profile.trials_per_point, seed, false)?;
                    let prefix = match mode {
                        UnwindMode::Unconstrained => "unconstrained",
                        UnwindMode::ConstrainedToPrior => "constrained",
                    };
                    let label = format!("{prefix}_unwind{n_unwind}");
                    let file = w.ensemble(&label, &walker, &records, ProfileBinning::Exact)?;
                    w.summary(&file)?;
                }
            }
        }
    }

    let metadata_path = w.path("metadata.json".into());
    let metadata = RunMetadata {
        schema: METADATA_SCHEMA.into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        rng: rwpe::oracle::RNG_ALGORITHM.into(),
        config: config.clone(),
        defaults: SuiteConfig::default(),
        data_retained,
        files: w.report.files.clone(),
    };
    write_json(&metadata_path, &metadata)?;
    Ok(w.report)
}
