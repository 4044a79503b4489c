//! Sequential Monte Carlo baseline with Liu–West resampling.
//!
//! The filter replays the experiments a walker chose, including consistency checks and data
//! that were later unwound, so both estimators see the same record.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{likelihood, Datum, ExperimentParams, GaussianState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParticleError {
    /// Every particle has (numerically) zero likelihood for datum `index`.
    #[error("posterior weight vanished at datum {index}")]
    ZeroPosterior { index: usize, last_estimate: f64 },
    #[error("invalid Liu-West config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiuWestConfig {
    /// Kernel contraction toward the cloud mean; `a = 1` is plain multinomial resampling.
    pub a: f64,
    /// Resample when the effective sample size falls below this fraction of the cloud.
    pub resample_threshold: f64,
    pub n_particles: usize,
}

impl Default for LiuWestConfig {
    fn default() -> Self {
        Self {
            a: 0.98,
            resample_threshold: 0.5,
            n_particles: 8000,
        }
    }
}

impl LiuWestConfig {
    pub fn validate(&self) -> Result<(), ParticleError> {
        if !(self.a > 0.0 && self.a <= 1.0) {
            return Err(ParticleError::InvalidConfig(format!(
                "a must lie in (0, 1], got {}",
                self.a
            )));
        }
        if !(self.resample_threshold > 0.0 && self.resample_threshold <= 1.0) {
            return Err(ParticleError::InvalidConfig(format!(
                "resample_threshold must lie in (0, 1], got {}",
                self.resample_threshold
            )));
        }
        if self.n_particles == 0 {
            return Err(ParticleError::InvalidConfig("n_particles must be positive".into()));
        }
        Ok(())
    }

    /// Jitter scale `h = √(1 − a²)`.
    pub fn h(&self) -> f64 {
        (1.0 - self.a * self.a).max(0.0).sqrt()
    }
}

/// Weighted point-mass approximation of a distribution over the eigenphase.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleCloud {
    /// Normalizes `weights`; panics if lengths differ or the total is not positive.
    pub fn new(locations: Vec<f64>, mut weights: Vec<f64>) -> Self {
        assert_eq!(locations.len(), weights.len(), "one weight per particle");
        let total: f64 = weights.iter().sum();
        assert!(
            total > 0.0 && total.is_finite(),
            "weights must have positive finite mass"
        );
        weights.iter_mut().for_each(|w| *w /= total);
        Self { locations, weights }
    }

    pub fn equal_weight(locations: Vec<f64>) -> Self {
        let w = 1.0 / locations.len() as f64;
        let weights = vec![w; locations.len()];
        Self { locations, weights }
    }

    pub fn from_prior<R: Rng + ?Sized>(prior: &GaussianState, n: usize, rng: &mut R) -> Self {
        let locations = (0..n)
            .map(|_| prior.mu() + prior.sigma() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::equal_weight(locations)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> f64 {
        self.locations.iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.locations
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * (x - mean).powi(2))
            .sum()
    }

    /// `1 / Σ w²`.
    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Bayes reweighting by the likelihood of one datum.
pub fn pf_update(cloud: &mut ParticleCloud, d: Datum, params: &ExperimentParams) -> Result<(), ParticleError> {
    let mut total = 0.0;
    for (w, &x) in cloud.weights.iter_mut().zip(&cloud.locations) {
        *w *= likelihood(d, x, params);
        total += *w;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(ParticleError::ZeroPosterior {
            index: 0,
            last_estimate: f64::NAN,
        });
    }
    cloud.weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

/// Draws a fresh equal-weight cloud from the Liu–West kernel
/// `a·x_k + (1 − a)·mean + h·sd·N(0, 1)`, with `x_k` chosen with probability `w_k`.
///
/// Ancestors are drawn by multinomial sampling.
pub fn liu_west_resample<R: Rng + ?Sized>(cloud: &ParticleCloud, config: &LiuWestConfig, rng: &mut R) -> ParticleCloud {
    let n = config.n_particles;
    let mean = cloud.mean();
    let sd = cloud.variance().max(0.0).sqrt();
    let a = config.a;
    let jitter = config.h() * sd;
    let ancestors = WeightedIndex::new(&cloud.weights).expect("cloud weights are normalized");
    let locations = (0..n)
        .map(|_| {
            let x = cloud.locations[ancestors.sample(rng)];
            let z: f64 = rng.sample(StandardNormal);
            a * x + (1.0 - a) * mean + jitter * z
        })
        .collect();
    ParticleCloud::equal_weight(locations)
}

/// Posterior mean after filtering every datum of a record, starting from the prior.
///
/// On [`ParticleError::ZeroPosterior`] the error carries the index of the offending datum and
/// the posterior mean just before it.
pub fn pf_run<I, R>(data: I, prior: &GaussianState, config: &LiuWestConfig, rng: &mut R) -> Result<f64, ParticleError>
where
    I: IntoIterator<Item = (ExperimentParams, Datum)>,
    R: Rng + ?Sized,
{
    config.validate()?;
    let mut cloud = ParticleCloud::from_prior(prior, config.n_particles, rng);
    let threshold = config.resample_threshold * config.n_particles as f64;
    for (index, (params, d)) in data.into_iter().enumerate() {
        let last_estimate = cloud.mean();
        pf_update(&mut cloud, d, &params).map_err(|_| ParticleError::ZeroPosterior { index, last_estimate })?;
        if cloud.effective_sample_size() < threshold {
            cloud = liu_west_resample(&cloud, config, rng);
        }
    }
    Ok(cloud.mean())
}
