//! Suite configuration: a TOML file, command-line overrides, and the defaults behind both.
//!
//! ```toml
//! suite = "loss_histogram"      # loss_histogram | pf_comparison | heisenberg_scaling | risk_profile | single_trial
//! n_trials = 1000
//! master_seed = 0
//! output_dir = "out"
//!
//! [walker]
//! mu0 = 0.0
//! sigma0 = 1.0
//! n_exp = 100
//! tau_check = 0.01
//! n_unwind = 2
//! unwind_mode = "unconstrained" # or "constrained"
//! max_total_experiments = 100000
//!
//! [pf]                          # required for, and only allowed with, pf_comparison
//! a = 0.98
//! resample_threshold = 0.5
//! n_particles = 8000
//!
//! [profile]                     # risk_profile grid over |ω|
//! grid_points = 50
//! omega_max = 4.0
//! trials_per_point = 200
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rwpe::{LiuWestConfig, UnwindMode, WalkerConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    LossHistogram,
    PfComparison,
    HeisenbergScaling,
    RiskProfile,
    SingleTrial,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::LossHistogram,
        Suite::PfComparison,
        Suite::HeisenbergScaling,
        Suite::RiskProfile,
        Suite::SingleTrial,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::LossHistogram => "loss_histogram",
            Suite::PfComparison => "pf_comparison",
            Suite::HeisenbergScaling => "heisenberg_scaling",
            Suite::RiskProfile => "risk_profile",
            Suite::SingleTrial => "single_trial",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|s| s.name()).collect();
            ConfigError::new(
                "suite",
                format!("unknown suite {s:?}; expected one of {}", names.join(", ")),
            )
        })
    }
}

pub fn parse_unwind_mode(s: &str) -> Result<UnwindMode, ConfigError> {
    match s {
        "unconstrained" => Ok(UnwindMode::Unconstrained),
        "constrained" | "constrained_to_prior" => Ok(UnwindMode::ConstrainedToPrior),
        other => Err(ConfigError::new(
            "walker.unwind_mode",
            format!("unknown unwind mode {other:?}; expected \"unconstrained\" or \"constrained\""),
        )),
    }
}

/// Grid of true eigenphases for the `risk_profile` suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileConfig {
    pub grid_points: usize,
    pub omega_max: f64,
    pub trials_per_point: u64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self {
            grid_points: 50,
            omega_max: 4.0,
            trials_per_point: 200,
        }
    }
}

/// A fully resolved suite configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub walker: WalkerConfig,
    pub pf: Option<LiuWestConfig>,
    pub profile: ProfileConfig,
    pub n_trials: u64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            suite: Suite::SingleTrial,
            walker: WalkerConfig::default(),
            pf: None,
            profile: ProfileConfig::default(),
            n_trials: 1000,
            master_seed: 0,
            output_dir: PathBuf::from("rwpe-out"),
        }
    }
}

/// Optional settings, as read from a file or collected from flags. Integers are signed so
/// that negative values are reported as config errors rather than parse failures.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub suite: Option<String>,
    pub n_trials: Option<i64>,
    pub master_seed: Option<i64>,
    pub output_dir: Option<PathBuf>,
    pub walker: Option<RawWalker>,
    pub pf: Option<RawPf>,
    pub profile: Option<RawProfile>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWalker {
    pub mu0: Option<f64>,
    pub sigma0: Option<f64>,
    pub n_exp: Option<i64>,
    pub tau_check: Option<f64>,
    pub n_unwind: Option<i64>,
    pub unwind_mode: Option<String>,
    pub max_total_experiments: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPf {
    pub a: Option<f64>,
    pub resample_threshold: Option<f64>,
    pub n_particles: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProfile {
    pub grid_points: Option<i64>,
    pub omega_max: Option<f64>,
    pub trials_per_point: Option<i64>,
}

impl RawConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let key = e
                .span()
                .map(|s| text[s].trim().to_string())
                .unwrap_or_else(|| "<file>".into());
            ConfigError::new(key, e.message().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn overlay(mut self, over: RawConfig) -> Self {
        fn pick<T>(base: &mut Option<T>, over: Option<T>) {
            if over.is_some() {
                *base = over;
            }
        }
        pick(&mut self.suite, over.suite);
        pick(&mut self.n_trials, over.n_trials);
        pick(&mut self.master_seed, over.master_seed);
        pick(&mut self.output_dir, over.output_dir);
        if let Some(w) = over.walker {
            let base = self.walker.get_or_insert_with(Default::default);
            pick(&mut base.mu0, w.mu0);
            pick(&mut base.sigma0, w.sigma0);
            pick(&mut base.n_exp, w.n_exp);
            pick(&mut base.tau_check, w.tau_check);
            pick(&mut base.n_unwind, w.n_unwind);
            pick(&mut base.unwind_mode, w.unwind_mode);
            pick(&mut base.max_total_experiments, w.max_total_experiments);
        }
        if let Some(p) = over.pf {
            let base = self.pf.get_or_insert_with(Default::default);
            pick(&mut base.a, p.a);
            pick(&mut base.resample_threshold, p.resample_threshold);
            pick(&mut base.n_particles, p.n_particles);
        }
        if let Some(p) = over.profile {
            let base = self.profile.get_or_insert_with(Default::default);
            pick(&mut base.grid_points, p.grid_points);
            pick(&mut base.omega_max, p.omega_max);
            pick(&mut base.trials_per_point, p.trials_per_point);
        }
        self
    }
}

fn non_negative(key: &str, value: i64) -> Result<u64, ConfigError> {
    u64::try_from(value).map_err(|_| ConfigError::new(key, format!("must be non-negative, got {value}")))
}

fn positive(key: &str, value: i64) -> Result<u64, ConfigError> {
    match non_negative(key, value)? {
        0 => Err(ConfigError::new(key, "must be positive, got 0")),
        v => Ok(v),
    }
}

fn positive_real(key: &str, value: f64) -> Result<f64, ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ConfigError::new(
            key,
            format!("must be a positive finite number, got {value}"),
        ))
    }
}

fn finite(key: &str, value: f64) -> Result<f64, ConfigError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::new(key, format!("must be finite, got {value}")))
    }
}

/// Applies defaults and checks every invariant of the resolved config.
pub fn resolve(raw: RawConfig) -> Result<SuiteConfig, ConfigError> {
    let mut config = SuiteConfig::default();

    if let Some(s) = raw.suite.as_deref() {
        config.suite = s.parse()?;
    }
    if let Some(n) = raw.n_trials {
        config.n_trials = positive("n_trials", n)?;
    }
    if let Some(seed) = raw.master_seed {
        config.master_seed = non_negative("master_seed", seed)?;
    }
    if let Some(dir) = raw.output_dir {
        config.output_dir = dir;
    }

    if let Some(w) = raw.walker {
        let walker = &mut config.walker;
        if let Some(v) = w.mu0 {
            walker.mu0 = finite("walker.mu0", v)?;
        }
        if let Some(v) = w.sigma0 {
            walker.sigma0 = positive_real("walker.sigma0", v)?;
        }
        if let Some(v) = w.n_exp {
            walker.n_exp = non_negative("walker.n_exp", v)?;
        }
        if let Some(v) = w.tau_check {
            walker.tau_check = positive_real("walker.tau_check", v)?;
        }
        if let Some(v) = w.n_unwind {
            walker.n_unwind = non_negative("walker.n_unwind", v)?;
        }
        if let Some(v) = w.unwind_mode.as_deref() {
            walker.unwind_mode = parse_unwind_mode(v)?;
        }
        if let Some(v) = w.max_total_experiments {
            walker.max_total_experiments = positive("walker.max_total_experiments", v)?;
        }
    }
    if config.walker.max_total_experiments < config.walker.n_exp {
        return Err(ConfigError::new(
            "walker.max_total_experiments",
            format!(
                "must be at least walker.n_exp ({}), got {}",
                config.walker.n_exp, config.walker.max_total_experiments
            ),
        ));
    }

    if let Some(p) = raw.pf {
        let mut pf = LiuWestConfig::default();
        if let Some(a) = p.a {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ConfigError::new("pf.a", format!("must lie in (0, 1], got {a}")));
            }
            pf.a = a;
        }
        if let Some(r) = p.resample_threshold {
            if !(r > 0.0 && r <= 1.0) {
                return Err(ConfigError::new(
                    "pf.resample_threshold",
                    format!("must lie in (0, 1], got {r}"),
                ));
            }
            pf.resample_threshold = r;
        }
        if let Some(n) = p.n_particles {
            pf.n_particles = positive("pf.n_particles", n)? as usize;
        }
        config.pf = Some(pf);
    }
    match (config.suite, config.pf.is_some()) {
        (Suite::PfComparison, false) => {
            return Err(ConfigError::new(
                "pf",
                "the pf_comparison suite needs a [pf] block (or --pf-particles)",
            ))
        }
        (suite, true) if suite != Suite::PfComparison => {
            return Err(ConfigError::new(
                "pf",
                format!("a [pf] block is only valid with pf_comparison, not {suite}"),
            ))
        }
        _ => {}
    }

    if let Some(p) = raw.profile {
        if let Some(n) = p.grid_points {
            config.profile.grid_points = positive("profile.grid_points", n)? as usize;
        }
        if let Some(m) = p.omega_max {
            if !(m.is_finite() && m >= 0.0) {
                return Err(ConfigError::new(
                    "profile.omega_max",
                    format!("must be finite and non-negative, got {m}"),
                ));
            }
            config.profile.omega_max = m;
        }
        if let Some(n) = p.trials_per_point {
            config.profile.trials_per_point = positive("profile.trials_per_point", n)?;
        }
    }

    Ok(config)
}

/// Reads `path` (if any), lays `overrides` on top, and resolves the result.
pub fn parse_config(path: Option<&Path>, overrides: RawConfig) -> Result<SuiteConfig, ConfigError> {
    let base = match path {
        Some(p) => RawConfig::from_path(p)?,
        None => RawConfig::default(),
    };
    resolve(base.overlay(overrides))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let config = resolve(RawConfig::from_toml("").unwrap()).unwrap();
        assert_eq!(config, SuiteConfig::default());
        assert_eq!(config.walker.n_exp, 100);
        assert_eq!(config.walker.n_unwind, 2);
        assert_eq!(config.walker.tau_check, 0.01);
        assert_eq!(config.walker.sigma0, 1.0);
        assert_eq!(config.walker.mu0, 0.0);
        assert_eq!(config.master_seed, 0);
    }

    #[test]
    fn negative_unwind_is_rejected() {
        let err = resolve(RawConfig::from_toml("[walker]\nn_unwind = -1\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "walker.n_unwind");
    }

    #[test]
    fn pf_block_required_exactly_for_pf_comparison() {
        let err = resolve(RawConfig::from_toml("suite = \"pf_comparison\"\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "pf");
        let err = resolve(RawConfig::from_toml("suite = \"loss_histogram\"\n[pf]\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "pf");
        let ok =
            resolve(RawConfig::from_toml("suite = \"pf_comparison\"\n[pf]\nn_particles = 800\n").unwrap()).unwrap();
        assert_eq!(
            ok.pf,
            Some(LiuWestConfig {
                n_particles: 800,
                ..LiuWestConfig::default()
            })
        );
    }

    #[test]
    fn unknown_keys_and_values_are_reported() {
        let err = RawConfig::from_toml("[walker]\nn_unwnd = 2\n").unwrap_err();
        assert!(err.message.contains("n_unwnd"), "{err}");
        let err = resolve(RawConfig::from_toml("suite = \"everything\"\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "suite");
        let err = resolve(RawConfig::from_toml("[walker]\nunwind_mode = \"sideways\"\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "walker.unwind_mode");
        let err = resolve(RawConfig::from_toml("[walker]\ntau_check = 0.0\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "walker.tau_check");
        let err =
            resolve(RawConfig::from_toml("[walker]\nn_exp = 10\nmax_total_experiments = 5\n").unwrap()).unwrap_err();
        assert_eq!(err.key, "walker.max_total_experiments");
    }

    #[test]
    fn overrides_win_over_file() {
        let file = RawConfig::from_toml("n_trials = 10\n[walker]\nn_exp = 50\ntau_check = 1.0\n").unwrap();
        let flags = RawConfig {
            walker: Some(RawWalker {
                n_exp: Some(25),
                unwind_mode: Some("constrained".into()),
                ..Default::default()
            }),
            ..Default::default()
        };
        let config = resolve(file.overlay(flags)).unwrap();
        assert_eq!(config.n_trials, 10);
        assert_eq!(config.walker.n_exp, 25);
        assert_eq!(config.walker.tau_check, 1.0);
        assert_eq!(config.walker.unwind_mode, UnwindMode::ConstrainedToPrior);
    }
}
