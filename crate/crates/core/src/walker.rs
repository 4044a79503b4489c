//! Random walk phase estimation with consistency checks and data unwinding.
//!
//! Each accepted datum moves the mean by `±σ/√e` and contracts `σ` by `√((e−1)/e)`. With
//! unwinding enabled, every accepted step is followed by a consistency check at
//! `t = τ_check/σ`, `ω_inv = μ`. While the check returns 1, the walker takes `n_unwind`
//! unwinding steps (grow `σ`, then pop a datum and undo its mean shift with the grown `σ`)
//! and checks again.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{
    check_experiment, optimal_experiment, update_optimal, Datum, ExperimentParams, GaussianState, InferenceError,
    INV_SQRT_E, SIGMA_EXPANSION,
};
use crate::oracle::{MeasurementOracle, OracleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalkerError {
    #[error("measurement budget of {limit} experiments exhausted")]
    BudgetExhausted { limit: u64 },
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("invalid walker config: {0}")]
    InvalidConfig(String),
}

/// What happens to an unwinding step that finds the datum stack empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnwindMode {
    /// Keep growing `σ` past the initial prior.
    #[default]
    Unconstrained,
    /// Abort the step and stop unwinding.
    ConstrainedToPrior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkerConfig {
    pub mu0: f64,
    pub sigma0: f64,
    /// Number of data that must be on the stack when the walk ends.
    pub n_exp: u64,
    pub tau_check: f64,
    /// Unwinding steps per failed check; zero disables checks.
    pub n_unwind: u64,
    pub unwind_mode: UnwindMode,
    /// Cap on all measurements, consistency checks included.
    pub max_total_experiments: u64,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self {
            mu0: 0.0,
            sigma0: 1.0,
            n_exp: 100,
            tau_check: 0.01,
            n_unwind: 2,
            unwind_mode: UnwindMode::Unconstrained,
            max_total_experiments: 100_000,
        }
    }
}

impl WalkerConfig {
    pub fn validate(&self) -> Result<(), WalkerError> {
        self.prior()?;
        if !(self.tau_check.is_finite() && self.tau_check > 0.0) {
            return Err(WalkerError::InvalidConfig(format!(
                "tau_check must be positive, got {}",
                self.tau_check
            )));
        }
        if self.max_total_experiments < self.n_exp {
            return Err(WalkerError::InvalidConfig(format!(
                "max_total_experiments ({}) must be at least n_exp ({})",
                self.max_total_experiments, self.n_exp
            )));
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<GaussianState, WalkerError> {
        Ok(GaussianState::new(self.mu0, self.sigma0)?)
    }
}

/// Why a measurement was taken, and what became of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRole {
    /// Accepted and still incorporated when the walk ended.
    Accepted,
    Check,
    /// Accepted, later popped by an unwinding step.
    Unwound,
}

/// One measurement as it appears in a trial log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecordedDatum {
    pub t: f64,
    pub omega_inv: f64,
    pub d: Datum,
    pub role: DataRole,
}

impl RecordedDatum {
    pub fn params(&self) -> ExperimentParams {
        ExperimentParams {
            t: self.t,
            omega_inv: self.omega_inv,
        }
    }
}

/// Receives every measurement the walker makes.
pub trait MeasurementLog {
    fn record(&mut self, params: ExperimentParams, d: Datum, role: DataRole);
    /// The most recent still-accepted datum was popped.
    fn mark_unwound(&mut self);
}

/// Discards everything.
impl MeasurementLog for () {
    #[inline]
    fn record(&mut self, _: ExperimentParams, _: Datum, _: DataRole) {}
    #[inline]
    fn mark_unwound(&mut self) {}
}

/// Ordered log of all measurements, with popped data relabelled [`DataRole::Unwound`].
#[derive(Debug, Clone, Default)]
pub struct DataLog {
    entries: Vec<RecordedDatum>,
    accepted: Vec<usize>,
}

impl DataLog {
    pub fn entries(&self) -> &[RecordedDatum] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<RecordedDatum> {
        self.entries
    }
}

impl MeasurementLog for DataLog {
    fn record(&mut self, params: ExperimentParams, d: Datum, role: DataRole) {
        if role == DataRole::Accepted {
            self.accepted.push(self.entries.len());
        }
        self.entries.push(RecordedDatum {
            t: params.t,
            omega_inv: params.omega_inv,
            d,
            role,
        });
    }

    fn mark_unwound(&mut self) {
        if let Some(i) = self.accepted.pop() {
            self.entries[i].role = DataRole::Unwound;
        }
    }
}

/// Telemetry from one call to [`WalkerState::consistency_check_and_unwind`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnwindOutcome {
    pub checks_performed: u64,
    pub steps_unwound: u64,
    pub aborted_on_empty_stack: bool,
}

/// The walker: current Gaussian, the stack of accepted data, and a measurement counter.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkerState {
    gaussian: GaussianState,
    stack: Vec<Datum>,
    total_count: u64,
}

impl WalkerState {
    pub fn new(prior: GaussianState) -> Self {
        Self {
            gaussian: prior,
            stack: Vec::new(),
            total_count: 0,
        }
    }

    pub fn from_config(config: &WalkerConfig) -> Result<Self, WalkerError> {
        Ok(Self::new(config.prior()?))
    }

    pub fn gaussian(&self) -> GaussianState {
        self.gaussian
    }

    /// Accepted data currently on the stack.
    pub fn accepted_count(&self) -> u64 {
        self.stack.len() as u64
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn datum_stack(&self) -> &[Datum] {
        &self.stack
    }

    fn measure<O, L>(
        &mut self,
        oracle: &mut O,
        params: ExperimentParams,
        role: DataRole,
        limit: u64,
        log: &mut L,
    ) -> Result<Datum, WalkerError>
    where
        O: MeasurementOracle + ?Sized,
        L: MeasurementLog + ?Sized,
    {
        if self.total_count >= limit {
            return Err(WalkerError::BudgetExhausted { limit });
        }
        let d = oracle.measure(&params)?;
        self.total_count += 1;
        log.record(params, d, role);
        Ok(d)
    }

    /// Takes one datum at the optimal experiment, pushes it, and applies the optimal update.
    #[inline]
    pub fn step<O, L>(&mut self, oracle: &mut O, limit: u64, log: &mut L) -> Result<Datum, WalkerError>
    where
        O: MeasurementOracle + ?Sized,
        L: MeasurementLog + ?Sized,
    {
        let params = optimal_experiment(&self.gaussian);
        let d = self.measure(oracle, params, DataRole::Accepted, limit, log)?;
        self.stack.push(d);
        self.gaussian = update_optimal(&self.gaussian, d);
        Ok(d)
    }

    /// One unwinding step. Returns `false` if it was aborted on an empty stack.
    fn unwind_once<L: MeasurementLog + ?Sized>(&mut self, mode: UnwindMode, log: &mut L) -> bool {
        let popped = self.stack.pop();
        if popped.is_none() && mode == UnwindMode::ConstrainedToPrior {
            return false;
        }
        let sigma = self.gaussian.sigma() * SIGMA_EXPANSION;
        let mu = match popped {
            Some(d) => {
                log.mark_unwound();
                self.gaussian.mu() - d.sign() * sigma * INV_SQRT_E
            }
            None => self.gaussian.mu(),
        };
        self.gaussian = GaussianState::from_parts_unchecked(mu, sigma);
        true
    }

    /// Checks the Gaussian approximation and unwinds until a check passes.
    ///
    /// On [`WalkerError::BudgetExhausted`] the state keeps whatever unwinding already happened.
    pub fn consistency_check_and_unwind<O, L>(
        &mut self,
        oracle: &mut O,
        config: &WalkerConfig,
        log: &mut L,
    ) -> Result<UnwindOutcome, (UnwindOutcome, WalkerError)>
    where
        O: MeasurementOracle + ?Sized,
        L: MeasurementLog + ?Sized,
    {
        let limit = config.max_total_experiments;
        let mut outcome = UnwindOutcome::default();
        loop {
            let params = check_experiment(&self.gaussian, config.tau_check);
            match self.measure(oracle, params, DataRole::Check, limit, log) {
                Ok(Datum::Zero) => {
                    outcome.checks_performed += 1;
                    return Ok(outcome);
                }
                Ok(Datum::One) => outcome.checks_performed += 1,
                Err(e) => return Err((outcome, e)),
            }
            for _ in 0..config.n_unwind {
                if !self.unwind_once(config.unwind_mode, log) {
                    outcome.aborted_on_empty_stack = true;
                    return Ok(outcome);
                }
                outcome.steps_unwound += 1;
            }
        }
    }
}

/// Everything a completed walk produced.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkResult {
    pub estimate: f64,
    pub final_state: WalkerState,
    pub checks_performed: u64,
    pub steps_unwound: u64,
    pub budget_exhausted: bool,
}

/// Runs the walk until `n_exp` data are on the stack or the measurement budget runs out.
///
/// Oracle failures (a replay that does not match) are returned as errors; an exhausted budget
/// is not, and leaves `budget_exhausted` set with the current mean as the estimate.
pub fn run<O, L>(config: &WalkerConfig, oracle: &mut O, log: &mut L) -> Result<WalkResult, WalkerError>
where
    O: MeasurementOracle + ?Sized,
    L: MeasurementLog + ?Sized,
{
    config.validate()?;
    let mut state = WalkerState::from_config(config)?;
    let mut checks_performed = 0;
    let mut steps_unwound = 0;
    let mut budget_exhausted = false;

    while state.accepted_count() < config.n_exp {
        match state.step(oracle, config.max_total_experiments, log) {
            Ok(_) => {}
            Err(WalkerError::BudgetExhausted { .. }) => {
                budget_exhausted = true;
                break;
            }
            Err(e) => return Err(e),
        }
        if config.n_unwind == 0 {
            continue;
        }
        match state.consistency_check_and_unwind(oracle, config, log) {
            Ok(outcome) => {
                checks_performed += outcome.checks_performed;
                steps_unwound += outcome.steps_unwound;
            }
            Err((outcome, e)) => {
                checks_performed += outcome.checks_performed;
                steps_unwound += outcome.steps_unwound;
                if matches!(e, WalkerError::BudgetExhausted { .. }) {
                    budget_exhausted = true;
                    break;
                }
                return Err(e);
            }
        }
    }

    Ok(WalkResult {
        estimate: state.gaussian().mu(),
        final_state: state,
        checks_performed,
        steps_unwound,
        budget_exhausted,
    })
}

/// Farthest the mean of an unchecked walk can travel from its start, in units of `σ0`.
pub fn walk_range() -> f64 {
    let e = std::f64::consts::E;
    1.0 / (e.sqrt() - (e - 1.0).sqrt())
}
