//! Ensembles of simulated trials and the loss statistics computed from them.

use std::f64::consts::E;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::inference::ExperimentParams;
use crate::oracle::{sample_true_omega, trial_rng, SimulatedOracle};
use crate::particle::{pf_run, LiuWestConfig, ParticleError};
use crate::walker::{run, DataLog, DataRole, RecordedDatum, WalkerConfig, WalkerError};

/// `log10_loss` assigned to an exactly-zero loss.
pub const LOG10_LOSS_FLOOR: f64 = -324.0;

/// Heisenberg-limit figure quoted for the 100-experiment schedule; reported, never asserted.
pub const HEISENBERG_REFERENCE: f64 = 3.5e-11;

/// Histogram range in decades of quadratic loss, one bin per decade.
pub const HISTOGRAM_LOG10_RANGE: (i32, i32) = (-25, 5);

/// Salt separating particle-filter streams from the walker streams of the same trial.
const PF_STREAM_SALT: u64 = 0x5046_5f4c_5755_4553;

/// Everything logged about one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub true_omega: f64,
    pub estimate: f64,
    pub final_sigma: f64,
    pub quadratic_loss: f64,
    pub log10_loss: f64,
    pub accepted_count: u64,
    pub total_count: u64,
    pub checks_performed: u64,
    pub steps_unwound: u64,
    pub budget_exhausted: bool,
    pub data: Vec<RecordedDatum>,
}

impl TrialRecord {
    /// The experiments that ended up incorporated in the estimate.
    pub fn accepted_experiments(&self) -> impl Iterator<Item = ExperimentParams> + '_ {
        self.data
            .iter()
            .filter(|r| r.role == DataRole::Accepted)
            .map(RecordedDatum::params)
    }
}

pub fn quadratic_loss(estimate: f64, true_omega: f64) -> f64 {
    (estimate - true_omega).powi(2)
}

pub fn log10_loss(loss: f64) -> f64 {
    if loss > 0.0 {
        loss.log10()
    } else {
        LOG10_LOSS_FLOOR
    }
}

/// Runs trial `trial_index` of an ensemble.
///
/// The trial stream first draws the true eigenphase (unless `fixed_omega` is given) and then
/// drives the simulated measurements.
pub fn run_trial(
    config: &WalkerConfig,
    master_seed: u64,
    trial_index: u64,
    fixed_omega: Option<f64>,
) -> Result<TrialRecord, WalkerError> {
    let prior = config.prior()?;
    let mut rng = trial_rng(master_seed, trial_index);
    let true_omega = fixed_omega.unwrap_or_else(|| sample_true_omega(&prior, &mut rng));
    let mut oracle = SimulatedOracle::with_rng(true_omega, rng);
    let mut log = DataLog::default();
    let walk = run(config, &mut oracle, &mut log)?;
    let loss = quadratic_loss(walk.estimate, true_omega);
    Ok(TrialRecord {
        trial_index,
        seed: master_seed,
        true_omega,
        estimate: walk.estimate,
        final_sigma: walk.final_state.gaussian().sigma(),
        quadratic_loss: loss,
        log10_loss: log10_loss(loss),
        accepted_count: walk.final_state.accepted_count(),
        total_count: walk.final_state.total_count(),
        checks_performed: walk.checks_performed,
        steps_unwound: walk.steps_unwound,
        budget_exhausted: walk.budget_exhausted,
        data: log.into_entries(),
    })
}

/// `n_trials` independent trials with the true eigenphase drawn from the prior.
pub fn run_ensemble(config: &WalkerConfig, n_trials: u64, master_seed: u64) -> Result<Vec<TrialRecord>, WalkerError> {
    config.validate()?;
    (0..n_trials)
        .into_par_iter()
        .map(|i| run_trial(config, master_seed, i, None))
        .collect()
}

/// `trials_per_point` trials at each fixed true eigenphase in `omega_grid`.
///
/// Trial indices run point-major, so point `p` owns indices `p·trials_per_point ..`. With
/// `keep_data` false the per-measurement logs are dropped as each trial finishes; trials far
/// outside the walk range can use the whole measurement budget.
pub fn run_fixed_omega_ensemble(
    config: &WalkerConfig,
    omega_grid: &[f64],
    trials_per_point: u64,
    master_seed: u64,
    keep_data: bool,
) -> Result<Vec<TrialRecord>, WalkerError> {
    config.validate()?;
    let jobs: Vec<(u64, f64)> = omega_grid
        .iter()
        .enumerate()
        .flat_map(|(p, &omega)| (0..trials_per_point).map(move |j| (p as u64 * trials_per_point + j, omega)))
        .collect();
    jobs.into_par_iter()
        .map(|(i, omega)| {
            let mut record = run_trial(config, master_seed, i, Some(omega))?;
            if !keep_data {
                record.data = Vec::new();
            }
            Ok(record)
        })
        .collect()
}

/// Frequentist risk profile over a grid of true eigenphases.
pub fn frequentist_profile(
    config: &WalkerConfig,
    omega_grid: &[f64],
    trials_per_point: u64,
    master_seed: u64,
) -> Result<RiskSummary, WalkerError> {
    let records = run_fixed_omega_ensemble(config, omega_grid, trials_per_point, master_seed, false)?;
    Ok(summarize(&records, ProfileBinning::Exact))
}

/// `n` points evenly spaced on `[0, max]`.
pub fn uniform_grid(n: usize, max: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Bayes-risk lower bound `((e − 1)(e/(e − 1))^n)⁻¹` for the optimal schedule and a unit prior.
pub fn van_trees_bound(n_exp: u64) -> f64 {
    let ratio = E / (E - 1.0);
    1.0 / ((E - 1.0) * ratio.powf(n_exp as f64))
}

/// `Σ t²` over the given experiments.
pub fn fisher_information<I: IntoIterator<Item = ExperimentParams>>(experiments: I) -> f64 {
    experiments.into_iter().map(|p| p.t * p.t).sum()
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Counts of `log10(quadratic loss)` in one-decade bins `[lo + k, lo + k + 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossHistogram {
    pub log10_lo: i32,
    pub log10_hi: i32,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl LossHistogram {
    pub fn from_log10_losses<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (lo, hi) = HISTOGRAM_LOG10_RANGE;
        let mut hist = Self {
            log10_lo: lo,
            log10_hi: hi,
            counts: vec![0; (hi - lo) as usize],
            underflow: 0,
            overflow: 0,
        };
        for v in values {
            let bin = (v - lo as f64).floor();
            if bin < 0.0 {
                hist.underflow += 1;
            } else if bin >= hist.counts.len() as f64 || v.is_nan() {
                hist.overflow += 1;
            } else {
                hist.counts[bin as usize] += 1;
            }
        }
        hist
    }
}

/// How trials are grouped by `|true_omega|` in a risk profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileBinning {
    /// One group per distinct `|true_omega|`, for fixed-eigenphase ensembles.
    Exact,
    /// Bins `[k·width, (k+1)·width)`; the last bin absorbs everything at or beyond `max`.
    Uniform { width: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub abs_omega_lo: f64,
    pub abs_omega_hi: f64,
    pub n_trials: u64,
    pub mean_loss: f64,
    pub median_loss: f64,
    pub median_steps_unwound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskSummary {
    pub n_trials: u64,
    pub n_budget_exhausted: u64,
    /// Mean quadratic loss.
    pub bayes_risk: f64,
    pub median_loss: f64,
    pub median_steps_unwound: f64,
    pub loss_histogram: LossHistogram,
    pub binning: ProfileBinning,
    pub risk_profile: Vec<ProfilePoint>,
}

fn profile_point(lo: f64, hi: f64, group: &[&TrialRecord]) -> ProfilePoint {
    let losses: Vec<f64> = group.iter().map(|r| r.quadratic_loss).collect();
    let unwound: Vec<f64> = group.iter().map(|r| r.steps_unwound as f64).collect();
    ProfilePoint {
        abs_omega_lo: lo,
        abs_omega_hi: hi,
        n_trials: group.len() as u64,
        mean_loss: mean(&losses),
        median_loss: median(&losses),
        median_steps_unwound: median(&unwound),
    }
}

/// Summary statistics of a set of trial records, in record order.
pub fn summarize(records: &[TrialRecord], binning: ProfileBinning) -> RiskSummary {
    let losses: Vec<f64> = records.iter().map(|r| r.quadratic_loss).collect();
    let unwound: Vec<f64> = records.iter().map(|r| r.steps_unwound as f64).collect();

    let risk_profile = match binning {
        ProfileBinning::Exact => {
            let mut keys: Vec<f64> = records.iter().map(|r| r.true_omega.abs()).collect();
            keys.sort_by(f64::total_cmp);
            keys.dedup();
            keys.iter()
                .map(|&k| {
                    let group: Vec<&TrialRecord> = records.iter().filter(|r| r.true_omega.abs() == k).collect();
                    profile_point(k, k, &group)
                })
                .collect()
        }
        ProfileBinning::Uniform { width, max } => {
            let n_bins = ((max / width).ceil() as usize).max(1);
            let mut groups: Vec<Vec<&TrialRecord>> = vec![Vec::new(); n_bins];
            for r in records {
                let bin = ((r.true_omega.abs() / width).floor() as usize).min(n_bins - 1);
                groups[bin].push(r);
            }
            groups
                .iter()
                .enumerate()
                .filter(|(_, g)| !g.is_empty())
                .map(|(k, g)| profile_point(k as f64 * width, (k + 1) as f64 * width, g))
                .collect()
        }
    };

    RiskSummary {
        n_trials: records.len() as u64,
        n_budget_exhausted: records.iter().filter(|r| r.budget_exhausted).count() as u64,
        bayes_risk: mean(&losses),
        median_loss: median(&losses),
        median_steps_unwound: median(&unwound),
        loss_histogram: LossHistogram::from_log10_losses(records.iter().map(|r| r.log10_loss)),
        binning,
        risk_profile,
    }
}

/// Particle-filter estimate for one trial record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfTrial {
    pub trial_index: u64,
    pub true_omega: f64,
    pub estimate: f64,
    pub quadratic_loss: f64,
    /// Index of the datum whose likelihood zeroed every weight; the estimate is the posterior
    /// mean just before it.
    pub failed_at: Option<usize>,
}

/// Runs the Liu–West filter over every datum of every record.
pub fn pf_postprocess(
    records: &[TrialRecord],
    walker: &WalkerConfig,
    pf: &LiuWestConfig,
    master_seed: u64,
) -> Result<Vec<PfTrial>, ParticleError> {
    pf.validate()?;
    let prior = walker
        .prior()
        .map_err(|e| ParticleError::InvalidConfig(e.to_string()))?;
    Ok(records
        .par_iter()
        .map(|r| {
            let mut rng = trial_rng(master_seed ^ PF_STREAM_SALT, r.trial_index);
            let data = r.data.iter().map(|e| (e.params(), e.d));
            let (estimate, failed_at) = match pf_run(data, &prior, pf, &mut rng) {
                Ok(est) => (est, None),
                Err(ParticleError::ZeroPosterior { index, last_estimate }) => (last_estimate, Some(index)),
                Err(e) => unreachable!("config validated above: {e}"),
            };
            PfTrial {
                trial_index: r.trial_index,
                true_omega: r.true_omega,
                estimate,
                quadratic_loss: quadratic_loss(estimate, r.true_omega),
                failed_at,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{Datum, SIGMA_CONTRACTION};
    use approx::assert_relative_eq;

    fn record(true_omega: f64, loss: f64, unwound: u64) -> TrialRecord {
        TrialRecord {
            trial_index: 0,
            seed: 0,
            true_omega,
            estimate: true_omega + loss.sqrt(),
            final_sigma: 1.0,
            quadratic_loss: loss,
            log10_loss: log10_loss(loss),
            accepted_count: 0,
            total_count: 0,
            checks_performed: 0,
            steps_unwound: unwound,
            budget_exhausted: false,
            data: Vec::new(),
        }
    }

    #[test]
    fn van_trees_examples() {
        let b = van_trees_bound(100);
        assert!((6e-21..8e-21).contains(&b), "{b:e}");
        assert_relative_eq!(van_trees_bound(1), 1.0 / E, max_relative = 1e-15);
    }

    #[test]
    fn van_trees_closed_form_equals_offset_partial_sum() {
        // The closed form is the reciprocal of Σ_{i<n} (e/(e−1))^i plus a constant e − 1.
        let ratio = E / (E - 1.0);
        for n in 1..=30u64 {
            let partial: f64 = (0..n).map(|i| ratio.powi(i as i32)).sum();
            assert_relative_eq!(van_trees_bound(n), 1.0 / ((E - 1.0) + partial), max_relative = 1e-12);
        }
        let two = 1.0 / ((E - 1.0) + 1.0 + ratio);
        assert_relative_eq!(van_trees_bound(2), two, max_relative = 1e-12);
    }

    #[test]
    fn fisher_information_examples() {
        assert_eq!(fisher_information(Vec::new()), 0.0);
        let ts = [1.0, 2.0, 3.0].map(|t| ExperimentParams::new(t, 0.0).unwrap());
        assert_eq!(fisher_information(ts), 14.0);

        // The optimal schedule from a unit prior: t_i = 1/σ_i = (e/(e−1))^{i/2}.
        let schedule = (0..100).map(|i| ExperimentParams::new(SIGMA_CONTRACTION.powi(-i), 0.0).unwrap());
        let info = fisher_information(schedule);
        assert_relative_eq!(1.0 / info, van_trees_bound(100), max_relative = 1e-12);
    }

    #[test]
    fn single_trial_without_experiments() {
        let config = WalkerConfig {
            n_exp: 0,
            ..WalkerConfig::default()
        };
        let records = run_ensemble(&config, 1, 42).unwrap();
        let r = &records[0];
        assert_eq!(r.estimate, 0.0);
        assert_eq!(r.quadratic_loss, r.true_omega * r.true_omega);
        assert!(r.data.is_empty());
    }

    #[test]
    fn ensembles_are_reproducible() {
        let config = WalkerConfig {
            tau_check: 1.0,
            ..WalkerConfig::default()
        };
        let a = run_ensemble(&config, 20, 7).unwrap();
        let b = run_ensemble(&config, 20, 7).unwrap();
        assert_eq!(a, b);
        let c = run_ensemble(&config, 20, 8).unwrap();
        assert_ne!(a, c);
        // Trial streams do not depend on ensemble size.
        assert_eq!(run_ensemble(&config, 5, 7).unwrap()[..], a[..5]);
    }

    #[test]
    fn records_are_internally_consistent() {
        let config = WalkerConfig {
            tau_check: 1.0,
            ..WalkerConfig::default()
        };
        for r in run_ensemble(&config, 50, 3).unwrap() {
            assert_eq!(r.quadratic_loss, (r.estimate - r.true_omega).powi(2));
            assert_eq!(r.total_count as usize, r.data.len());
            let count = |role| r.data.iter().filter(|e| e.role == role).count() as u64;
            assert_eq!(count(DataRole::Accepted), r.accepted_count);
            assert_eq!(count(DataRole::Check), r.checks_performed);
            assert_eq!(r.accepted_count, 100);
            assert!(r.data.iter().all(|e| e.d == Datum::Zero || e.d == Datum::One));
        }
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
    }

    #[test]
    fn histogram_bins_by_decade() {
        let h = LossHistogram::from_log10_losses([-30.0, -25.0, -24.5, -0.1, 0.0, 4.99, 5.0, LOG10_LOSS_FLOOR]);
        assert_eq!(h.underflow, 2);
        assert_eq!(h.overflow, 1);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[24], 1);
        assert_eq!(h.counts[25], 1);
        assert_eq!(h.counts[29], 1);
        assert_eq!(h.counts.iter().sum::<u64>() + h.underflow + h.overflow, 8);
    }

    #[test]
    fn summary_profiles() {
        let records = vec![record(0.5, 1e-20, 0), record(-0.5, 1e-18, 4), record(3.0, 1.0, 2)];
        let exact = summarize(&records, ProfileBinning::Exact);
        assert_eq!(exact.risk_profile.len(), 2);
        assert_eq!(exact.risk_profile[0].n_trials, 2);
        assert_eq!(exact.risk_profile[0].median_steps_unwound, 2.0);
        assert_relative_eq!(exact.bayes_risk, (1.0 + 1e-18 + 1e-20) / 3.0);
        assert_eq!(exact.median_loss, 1e-18);

        let uniform = summarize(&records, ProfileBinning::Uniform { width: 1.0, max: 2.0 });
        assert_eq!(uniform.risk_profile.len(), 2);
        assert_eq!(uniform.risk_profile[1].abs_omega_lo, 1.0);
        assert_eq!(uniform.risk_profile[1].mean_loss, 1.0);
    }

    #[test]
    fn zero_loss_uses_floor() {
        assert_eq!(log10_loss(0.0), LOG10_LOSS_FLOOR);
        assert_eq!(log10_loss(1e-20), -20.0);
    }

    #[test]
    fn fixed_grid_ensemble_uses_grid_values() {
        let config = WalkerConfig {
            n_exp: 20,
            ..WalkerConfig::default()
        };
        let grid = uniform_grid(3, 4.0);
        assert_eq!(grid, vec![0.0, 2.0, 4.0]);
        let records = run_fixed_omega_ensemble(&config, &grid, 4, 1, true).unwrap();
        assert_eq!(records.len(), 12);
        assert!(records.iter().all(|r| !r.data.is_empty()));
        let stripped = run_fixed_omega_ensemble(&config, &grid, 4, 1, false).unwrap();
        assert!(stripped.iter().all(|r| r.data.is_empty()));
        assert_eq!(stripped[5].estimate, records[5].estimate);
        assert!(records[4..8].iter().all(|r| r.true_omega == 2.0));
        assert_eq!(records[11].trial_index, 11);
        let summary = summarize(&records, ProfileBinning::Exact);
        assert_eq!(summary.risk_profile.len(), 3);
    }

    #[test]
    fn pf_postprocess_runs_every_record() {
        let config = WalkerConfig {
            n_exp: 20,
            tau_check: 1.0,
            ..WalkerConfig::default()
        };
        let records = run_ensemble(&config, 4, 2).unwrap();
        let pf = LiuWestConfig {
            n_particles: 200,
            ..LiuWestConfig::default()
        };
        let a = pf_postprocess(&records, &config, &pf, 2).unwrap();
        let b = pf_postprocess(&records, &config, &pf, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|t| t.quadratic_loss.is_finite()));
    }
}
