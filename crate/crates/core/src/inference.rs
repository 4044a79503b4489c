//! Gaussian-approximate Bayesian updates for the iterative phase estimation likelihood.
//!
//! A single measurement at evolution time `t` with inversion phase `omega_inv` returns
//! `d ∈ {0, 1}` with probability
//!
//! ```text
//! Pr(d | ω; t, ω_inv) = cos²(t (ω − ω_inv) / 2 + d π / 2)
//! ```
//!
//! Under a Gaussian prior the exact posterior mean and variance have a closed form. The
//! walker replaces the posterior by the Gaussian with those two moments after every datum.
//!
//! # Sign convention
//!
//! The experiment used by the walker is `t = 1/σ`, `ω_inv = μ + πσ/2`. With this choice the
//! exact posterior mean moves *up* by `σ/√e` after `d = 0` and *down* after `d = 1`, which is
//! the branch structure of the walk. Placing the inversion phase at `μ − πσ/2` instead flips
//! the direction of the shift; [`update_optimal`] would then disagree with [`bayes_oracle`].

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `1/√e`: mean shift of an optimal update, in units of the prior standard deviation.
pub const INV_SQRT_E: f64 = 0.606_530_659_712_633_4;

/// `√((e−1)/e)`: standard deviation contraction of an optimal update.
pub const SIGMA_CONTRACTION: f64 = 0.795_060_097_620_650_1;

/// `√(e/(e−1))`: standard deviation growth of one unwinding step.
pub const SIGMA_EXPANSION: f64 = 1.257_766_554_997_121_3;

/// Number of trapezoid nodes used by [`bayes_oracle`].
pub const ORACLE_NODES: usize = 200_001;

/// Half-width of the [`bayes_oracle`] integration window, in prior standard deviations.
pub const ORACLE_HALF_WIDTH: f64 = 10.0;

/// Smallest marginal probability of the observed datum the oracle will normalize by.
pub const ORACLE_EVIDENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid Gaussian state: mu = {mu}, sigma = {sigma}")]
    InvalidGaussian { mu: f64, sigma: f64 },
    #[error("invalid experiment: t = {t}, omega_inv = {omega_inv}")]
    InvalidExperiment { t: f64, omega_inv: f64 },
    #[error("Gaussian update degenerate at rescaled t = {t}, rescaled omega_inv = {omega_inv}")]
    DegenerateUpdate { t: f64, omega_inv: f64 },
    #[error("posterior evidence {evidence:e} below quadrature floor")]
    QuadratureFailure { evidence: f64 },
}

/// Normal approximation to the posterior over the eigenphase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    mu: f64,
    sigma: f64,
}

impl GaussianState {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, InferenceError> {
        if mu.is_finite() && sigma.is_finite() && sigma > 0.0 {
            Ok(Self { mu, sigma })
        } else {
            Err(InferenceError::InvalidGaussian { mu, sigma })
        }
    }

    /// The zero-mean, unit-variance prior.
    pub const fn standard() -> Self {
        Self { mu: 0.0, sigma: 1.0 }
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[inline]
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Walker-internal constructor; callers guarantee the invariants.
    #[inline]
    pub(crate) fn from_parts_unchecked(mu: f64, sigma: f64) -> Self {
        debug_assert!(mu.is_finite() && sigma.is_finite() && sigma > 0.0);
        Self { mu, sigma }
    }
}

/// Evolution time and inversion phase of one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub t: f64,
    pub omega_inv: f64,
}

impl ExperimentParams {
    pub fn new(t: f64, omega_inv: f64) -> Result<Self, InferenceError> {
        let params = Self { t, omega_inv };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if self.t.is_finite() && self.t > 0.0 && self.omega_inv.is_finite() {
            Ok(())
        } else {
            Err(InferenceError::InvalidExperiment {
                t: self.t,
                omega_inv: self.omega_inv,
            })
        }
    }
}

/// A single-shot measurement outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Datum {
    Zero,
    One,
}

impl Datum {
    /// `(−1)^d`.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Datum::Zero => 1.0,
            Datum::One => -1.0,
        }
    }

    #[inline]
    pub fn bit(self) -> u8 {
        match self {
            Datum::Zero => 0,
            Datum::One => 1,
        }
    }
}

impl From<Datum> for u8 {
    fn from(d: Datum) -> u8 {
        d.bit()
    }
}

impl TryFrom<u8> for Datum {
    type Error = String;

    fn try_from(bit: u8) -> Result<Self, Self::Error> {
        match bit {
            0 => Ok(Datum::Zero),
            1 => Ok(Datum::One),
            other => Err(format!("datum must be 0 or 1, got {other}")),
        }
    }
}

/// `Pr(d | ω; t, ω_inv)`.
#[inline]
pub fn likelihood(d: Datum, omega: f64, params: &ExperimentParams) -> f64 {
    // cos²(x + dπ/2) = (1 + (−1)^d cos 2x) / 2, which keeps the two outcomes summing to one.
    0.5 * (1.0 + d.sign() * (params.t * (omega - params.omega_inv)).cos())
}

/// Exact posterior mean and standard deviation for a Gaussian prior and one datum.
///
/// The update is evaluated for the standardized prior with rescaled time `tσ` and rescaled
/// inversion phase `(ω_inv − μ)/σ`, then mapped back. The closed forms are written in terms
/// of `exp(−t²/2)` so that long evolution times do not overflow.
pub fn update_general(
    prior: &GaussianState,
    d: Datum,
    params: &ExperimentParams,
) -> Result<GaussianState, InferenceError> {
    params.validate()?;
    let t = params.t * prior.sigma;
    let phase = (params.omega_inv - prior.mu) / prior.sigma;
    let s = d.sign();

    let damping = (-0.5 * t * t).exp();
    let (sin, cos) = (t * phase).sin_cos();
    let denom = 1.0 + s * damping * cos;
    let degenerate = || InferenceError::DegenerateUpdate { t, omega_inv: phase };
    if !(denom.is_finite() && denom > f64::MIN_POSITIVE) {
        return Err(degenerate());
    }

    let mean = s * t * damping * sin / denom;
    let var = 1.0 - s * t * t * damping * (cos + s * damping) / (denom * denom);
    if !(var.is_finite() && var > 0.0) {
        return Err(degenerate());
    }

    GaussianState::new(prior.mu + prior.sigma * mean, prior.sigma * var.sqrt()).map_err(|_| degenerate())
}

/// Posterior update at the variance-minimizing experiment returned by [`optimal_experiment`].
#[inline]
pub fn update_optimal(prior: &GaussianState, d: Datum) -> GaussianState {
    GaussianState::from_parts_unchecked(
        prior.mu + d.sign() * prior.sigma * INV_SQRT_E,
        prior.sigma * SIGMA_CONTRACTION,
    )
}

/// `t = 1/σ`, `ω_inv = μ + πσ/2`.
#[inline]
pub fn optimal_experiment(prior: &GaussianState) -> ExperimentParams {
    ExperimentParams {
        t: prior.sigma.recip(),
        omega_inv: prior.mu + FRAC_PI_2 * prior.sigma,
    }
}

/// Consistency-check experiment `t = τ/σ`, `ω_inv = μ`; outcome 0 is the likely one.
#[inline]
pub fn check_experiment(prior: &GaussianState, tau_check: f64) -> ExperimentParams {
    ExperimentParams {
        t: tau_check / prior.sigma,
        omega_inv: prior.mu,
    }
}

/// Marginal probability that a consistency check returns 0 under the Gaussian prior.
pub fn check_pass_probability(tau_check: f64) -> f64 {
    0.5 * (1.0 + (-0.5 * tau_check * tau_check).exp())
}

/// Posterior mean and standard deviation by trapezoidal quadrature.
///
/// Integrates likelihood × prior over `μ ± 10σ` with [`ORACLE_NODES`] equally spaced nodes.
/// Fails with [`InferenceError::QuadratureFailure`] when the marginal probability of `d` is
/// below [`ORACLE_EVIDENCE_FLOOR`]. This is a verification tool and is far too slow for the
/// walker loop.
pub fn bayes_oracle(
    prior: &GaussianState,
    d: Datum,
    params: &ExperimentParams,
) -> Result<GaussianState, InferenceError> {
    params.validate()?;
    let n = ORACLE_NODES;
    let h = 2.0 * ORACLE_HALF_WIDTH / (n - 1) as f64;
    let node = |i: usize| -ORACLE_HALF_WIDTH + h * i as f64;
    let trap = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };

    // Work in standardized coordinates z = (ω − μ)/σ.
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let z = node(i);
            trap(i) * (-0.5 * z * z).exp() * likelihood(d, prior.mu + prior.sigma * z, params)
        })
        .collect();

    let mass: f64 = weights.iter().sum();
    let evidence = mass * h / (2.0 * PI).sqrt();
    if !(evidence.is_finite() && evidence >= ORACLE_EVIDENCE_FLOOR) {
        return Err(InferenceError::QuadratureFailure { evidence });
    }

    let mean = weights.iter().enumerate().map(|(i, w)| w * node(i)).sum::<f64>() / mass;
    let var = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let dz = node(i) - mean;
            w * dz * dz
        })
        .sum::<f64>()
        / mass;

    GaussianState::new(prior.mu + prior.sigma * mean, prior.sigma * var.sqrt())
        .map_err(|_| InferenceError::QuadratureFailure { evidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn contraction_from_e() -> f64 {
        ((E - 1.0) / E).sqrt()
    }

    fn std_params(t: f64, omega_inv: f64) -> ExperimentParams {
        ExperimentParams::new(t, omega_inv).unwrap()
    }

    #[test]
    fn constants_match_e() {
        assert_relative_eq!(INV_SQRT_E, E.sqrt().recip(), max_relative = 1e-15);
        assert_relative_eq!(SIGMA_CONTRACTION, contraction_from_e(), max_relative = 1e-15);
        assert_relative_eq!(SIGMA_EXPANSION * SIGMA_CONTRACTION, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn likelihood_examples() {
        for t in [0.1, 1.0, 37.0] {
            let p = std_params(t, 0.4);
            assert_eq!(likelihood(Datum::Zero, 0.4, &p), 1.0);
            assert_eq!(likelihood(Datum::One, 0.4, &p), 0.0);
        }
        let p = std_params(1.0, 0.0);
        assert_relative_eq!(likelihood(Datum::Zero, FRAC_PI_2, &p), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        assert!(GaussianState::new(0.0, 0.0).is_err());
        assert!(GaussianState::new(0.0, -1.0).is_err());
        assert!(GaussianState::new(f64::NAN, 1.0).is_err());
        assert!(GaussianState::new(0.0, f64::INFINITY).is_err());
        assert!(ExperimentParams::new(0.0, 0.0).is_err());
    }

    #[test]
    fn optimal_update_examples() {
        let post0 = update_optimal(&GaussianState::standard(), Datum::Zero);
        assert_relative_eq!(post0.mu(), 0.606_531, epsilon = 1e-6);
        assert_relative_eq!(post0.sigma(), 0.795_060, epsilon = 1e-6);

        let post1 = update_optimal(&GaussianState::standard(), Datum::One);
        assert_relative_eq!(post1.mu(), -0.606_531, epsilon = 1e-6);
        assert_relative_eq!(post1.sigma(), 0.795_060, epsilon = 1e-6);

        let prior = GaussianState::new(5.0, 2.0).unwrap();
        let post = update_optimal(&prior, Datum::Zero);
        assert_relative_eq!(post.mu(), 5.0 + 2.0 / E.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(post.sigma(), 2.0 * contraction_from_e(), max_relative = 1e-15);
    }

    #[test]
    fn general_update_at_optimal_experiment() {
        let prior = GaussianState::standard();
        let post = update_general(&prior, Datum::Zero, &optimal_experiment(&prior)).unwrap();
        assert_relative_eq!(post.mu(), INV_SQRT_E, max_relative = 1e-14);
        assert_relative_eq!(post.sigma(), SIGMA_CONTRACTION, max_relative = 1e-14);
    }

    #[test]
    fn general_update_zero_time_is_uninformative() {
        let prior = GaussianState::standard();
        let post = update_general(&prior, Datum::Zero, &std_params(1e-9, 0.7)).unwrap();
        assert_relative_eq!(post.mu(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(post.sigma(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn general_update_impossible_datum_is_degenerate() {
        // d = 1 has zero probability when t → 0 and ω_inv = μ.
        let prior = GaussianState::standard();
        let err = update_general(&prior, Datum::One, &std_params(1e-200, 0.0)).unwrap_err();
        assert!(matches!(err, InferenceError::DegenerateUpdate { .. }));
    }

    #[test]
    fn general_update_long_time_does_not_overflow() {
        let prior = GaussianState::standard();
        let post = update_general(&prior, Datum::One, &std_params(60.0, 0.3)).unwrap();
        assert_relative_eq!(post.mu(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(post.sigma(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn general_update_matches_oracle_off_grid() {
        let prior = GaussianState::standard();
        for (d, t, w) in [(Datum::One, 2.0, 0.3), (Datum::One, 3.0, 1.0), (Datum::Zero, 0.7, -2.0)] {
            let params = std_params(t, w);
            let closed = update_general(&prior, d, &params).unwrap();
            let quad = bayes_oracle(&prior, d, &params).unwrap();
            assert_relative_eq!(closed.mu(), quad.mu(), epsilon = 1e-8);
            assert_relative_eq!(closed.sigma(), quad.sigma(), epsilon = 1e-8);
        }
    }

    #[test]
    fn oracle_zero_time_returns_prior() {
        let prior = GaussianState::new(-1.3, 0.25).unwrap();
        let post = bayes_oracle(&prior, Datum::Zero, &std_params(1e-12, 4.0)).unwrap();
        assert_relative_eq!(post.mu(), prior.mu(), epsilon = 1e-9);
        assert_relative_eq!(post.sigma(), prior.sigma(), epsilon = 1e-9);
    }

    #[test]
    fn oracle_agrees_with_optimal_update() {
        let prior = GaussianState::standard();
        let params = optimal_experiment(&prior);
        for d in [Datum::Zero, Datum::One] {
            let quad = bayes_oracle(&prior, d, &params).unwrap();
            let fast = update_optimal(&prior, d);
            assert_relative_eq!(quad.mu(), fast.mu(), epsilon = 1e-6);
            assert_relative_eq!(quad.sigma(), fast.sigma(), epsilon = 1e-6);
        }
    }

    #[test]
    fn oracle_rejects_impossible_datum() {
        let prior = GaussianState::standard();
        let err = bayes_oracle(&prior, Datum::One, &std_params(1e-20, 0.0)).unwrap_err();
        assert!(matches!(err, InferenceError::QuadratureFailure { .. }));
    }

    #[test]
    fn positive_mean_shift_when_truth_lies_above() {
        // Above the prior mean, d = 0 is the more likely outcome of the optimal experiment,
        // so it must pull the mean upward in both the oracle and the fast update.
        let prior = GaussianState::standard();
        let params = optimal_experiment(&prior);
        assert!(likelihood(Datum::Zero, 0.5, &params) > likelihood(Datum::One, 0.5, &params));
        assert!(bayes_oracle(&prior, Datum::Zero, &params).unwrap().mu() > 0.0);
        assert!(update_optimal(&prior, Datum::Zero).mu() > 0.0);
    }

    #[test]
    fn optimal_experiment_examples() {
        let p = optimal_experiment(&GaussianState::standard());
        assert_eq!(p.t, 1.0);
        assert_relative_eq!(p.omega_inv, FRAC_PI_2, max_relative = 1e-15);
        let p = optimal_experiment(&GaussianState::new(0.0, 0.5).unwrap());
        assert_eq!(p.t, 2.0);
        assert_relative_eq!(p.omega_inv, PI / 4.0, max_relative = 1e-15);
        let p = optimal_experiment(&GaussianState::new(3.0, 0.1).unwrap());
        assert_relative_eq!(p.t, 10.0, max_relative = 1e-15);
        assert_relative_eq!(p.omega_inv, 3.0 + 0.05 * PI, max_relative = 1e-15);
    }

    #[test]
    fn check_experiment_examples() {
        let p = check_experiment(&GaussianState::standard(), 1.0);
        assert_eq!((p.t, p.omega_inv), (1.0, 0.0));
        let p = check_experiment(&GaussianState::new(0.0, 0.01).unwrap(), 0.01);
        assert_eq!((p.t, p.omega_inv), (1.0, 0.0));
        let p = check_experiment(&GaussianState::new(2.0, 0.5).unwrap(), 1.0);
        assert_eq!((p.t, p.omega_inv), (2.0, 2.0));
    }

    #[test]
    fn check_pass_probability_examples() {
        assert_relative_eq!(check_pass_probability(1.0), 0.803_265_329_856_316_7, epsilon = 1e-12);
        assert_relative_eq!(
            1.0 - check_pass_probability(0.01),
            2.499_937_501_043_714e-5,
            epsilon = 1e-15
        );
        assert_relative_eq!(check_pass_probability(1e-9), 1.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn likelihood_normalized(omega in -50.0..50.0f64, t in 1e-3..1e3f64, w in -10.0..10.0f64) {
            let p = std_params(t, w);
            let total = likelihood(Datum::Zero, omega, &p) + likelihood(Datum::One, omega, &p);
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn general_update_is_location_scale_covariant(
            mu in -5.0..5.0f64,
            sigma in 1e-3..10.0f64,
            t in 0.05..3.0f64,
            w in -3.0..3.0f64,
            one in any::<bool>(),
        ) {
            let d = if one { Datum::One } else { Datum::Zero };
            let std_post = update_general(&GaussianState::standard(), d, &std_params(t, w)).unwrap();
            let prior = GaussianState::new(mu, sigma).unwrap();
            let post = update_general(&prior, d, &std_params(t / sigma, sigma * w + mu)).unwrap();
            prop_assert!((post.mu() - (mu + sigma * std_post.mu())).abs() <= 1e-9 * (1.0 + mu.abs() + sigma));
            prop_assert!((post.sigma() / (sigma * std_post.sigma()) - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn optimal_contraction_is_datum_independent(mu in -1e3..1e3f64, sigma in 1e-12..1e3f64) {
            let prior = GaussianState::new(mu, sigma).unwrap();
            let a = update_optimal(&prior, Datum::Zero);
            let b = update_optimal(&prior, Datum::One);
            prop_assert_eq!(a.sigma(), b.sigma());
            prop_assert!((a.sigma() / sigma - SIGMA_CONTRACTION).abs() <= 1e-15);
        }
    }
}
