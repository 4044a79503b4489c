//! Sources of measurement outcomes.
//!
//! Random streams are ChaCha20 (`rand_chacha` 0.9.0, pinned in the manifest). A trial's stream
//! is the generator seeded with `seed_from_u64(master_seed)` and switched to stream number
//! `trial_index`, so every trial is reproducible on its own and independent of how trials are
//! scheduled. Normal variates come from `rand_distr` 0.5.1's `StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::inference::{likelihood, Datum, ExperimentParams, GaussianState};

/// Name and version of the generator behind every simulated stream; echoed into run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9.0), seed_from_u64(master_seed), stream = trial index";

/// Relative tolerance a replayed query must meet against the recorded experiment.
pub const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("replay query {index} asked for {requested:?} but the record holds {recorded:?}")]
    ReplayMismatch {
        index: usize,
        requested: ExperimentParams,
        recorded: ExperimentParams,
    },
    #[error("replay record exhausted after {len} data")]
    ReplayExhausted { len: usize },
}

/// Anything that can answer a measurement request.
pub trait MeasurementOracle {
    fn measure(&mut self, params: &ExperimentParams) -> Result<Datum, OracleError>;
}

/// Independent generator for trial `trial_index` of an ensemble seeded with `master_seed`.
pub fn trial_rng(master_seed: u64, trial_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(trial_index);
    rng
}

/// One draw of the hidden eigenphase from the prior.
pub fn sample_true_omega<R: Rng + ?Sized>(prior: &GaussianState, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    prior.mu() + prior.sigma() * z
}

/// Samples outcomes from the exact likelihood at a hidden eigenphase.
#[derive(Debug, Clone)]
pub struct SimulatedOracle<R = ChaCha20Rng> {
    true_omega: f64,
    rng: R,
    draw_count: u64,
}

impl SimulatedOracle<ChaCha20Rng> {
    pub fn from_seed(true_omega: f64, seed: u64) -> Self {
        Self::with_rng(true_omega, ChaCha20Rng::seed_from_u64(seed))
    }
}

impl<R: Rng> SimulatedOracle<R> {
    pub fn with_rng(true_omega: f64, rng: R) -> Self {
        Self {
            true_omega,
            rng,
            draw_count: 0,
        }
    }

    pub fn true_omega(&self) -> f64 {
        self.true_omega
    }

    pub fn draw_count(&self) -> u64 {
        self.draw_count
    }

    /// Infallible form of [`MeasurementOracle::measure`].
    #[inline]
    pub fn sample(&mut self, params: &ExperimentParams) -> Datum {
        self.draw_count += 1;
        let u: f64 = self.rng.random();
        if u < likelihood(Datum::Zero, self.true_omega, params) {
            Datum::Zero
        } else {
            Datum::One
        }
    }
}

impl<R: Rng> MeasurementOracle for SimulatedOracle<R> {
    #[inline]
    fn measure(&mut self, params: &ExperimentParams) -> Result<Datum, OracleError> {
        Ok(self.sample(params))
    }
}

/// Plays back a recorded sequence of experiments and outcomes.
#[derive(Debug, Clone)]
pub struct ReplayOracle {
    record: Vec<(ExperimentParams, Datum)>,
    cursor: usize,
}

impl ReplayOracle {
    pub fn new(record: Vec<(ExperimentParams, Datum)>) -> Self {
        Self { record, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.record.len() - self.cursor
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REPLAY_TOLERANCE * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

impl MeasurementOracle for ReplayOracle {
    fn measure(&mut self, params: &ExperimentParams) -> Result<Datum, OracleError> {
        let (recorded, datum) = *self
            .record
            .get(self.cursor)
            .ok_or(OracleError::ReplayExhausted { len: self.record.len() })?;
        if !(close(params.t, recorded.t) && close(params.omega_inv, recorded.omega_inv)) {
            return Err(OracleError::ReplayMismatch {
                index: self.cursor,
                requested: *params,
                recorded,
            });
        }
        self.cursor += 1;
        Ok(datum)
    }
}
