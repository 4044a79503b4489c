//! Wall-clock timing of the walker's inner step.

use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::inference::GaussianState;
use crate::oracle::SimulatedOracle;
use crate::risk::median;
use crate::walker::WalkerState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateTiming {
    pub batches: usize,
    pub steps_per_batch: usize,
    pub median_ns_per_step: f64,
    pub min_ns_per_step: f64,
}

/// Times [`WalkerState::step`] (experiment choice, one simulated measurement, optimal update).
///
/// Each batch restarts a walker from the unit prior every 100 steps so `σ` stays in the
/// normal floating-point range.
pub fn time_updates(batches: usize, steps_per_batch: usize, seed: u64) -> UpdateTiming {
    let mut oracle = SimulatedOracle::from_seed(0.123, seed);
    let mut per_step = Vec::with_capacity(batches);
    for _ in 0..batches {
        let mut state = WalkerState::new(GaussianState::standard());
        let start = Instant::now();
        for i in 0..steps_per_batch {
            if i % 100 == 0 {
                state = WalkerState::new(GaussianState::standard());
            }
            black_box(state.step(&mut oracle, u64::MAX, &mut ()).ok());
        }
        black_box(state.gaussian());
        per_step.push(start.elapsed().as_nanos() as f64 / steps_per_batch.max(1) as f64);
    }
    UpdateTiming {
        batches,
        steps_per_batch,
        median_ns_per_step: median(&per_step),
        min_ns_per_step: per_step.iter().copied().fold(f64::INFINITY, f64::min),
    }
}
