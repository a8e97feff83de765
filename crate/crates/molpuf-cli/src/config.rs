//! Experiment configuration: a flat `key=value` file, overridable from
//! the command line, hashed so every artifact can state exactly which
//! settings produced it.

use std::fmt;
use std::path::{Path, PathBuf};

use molpuf::arbiter::{ArbiterConfig, ArbiterMode};
use molpuf::kinetics::{IntegratorConfig, SampleRetention};
use molpuf::puf::{NoiseStructure, PerturbationMode};
use thiserror::Error;

use crate::seeds::fnv1a64;

/// Which simulation backend produces response bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full reaction-network integration.
    Crn,
    /// The linear-delay surrogate (fast, used for large populations).
    DelayModel,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Crn => write!(f, "crn"),
            Mode::DelayModel => write!(f, "delay-model"),
        }
    }
}

/// Config-file spelling of [`NoiseStructure`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKey {
    Common,
    Independent,
}

impl fmt::Display for NoiseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseKey::Common => write!(f, "common"),
            NoiseKey::Independent => write!(f, "independent"),
        }
    }
}

impl From<NoiseKey> for NoiseStructure {
    fn from(k: NoiseKey) -> Self {
        match k {
            NoiseKey::Common => NoiseStructure::Common,
            NoiseKey::Independent => NoiseStructure::Independent,
        }
    }
}

/// Config-file spelling of [`PerturbationMode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbKey {
    Additive,
    Relative,
}

impl fmt::Display for PerturbKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbKey::Additive => write!(f, "additive"),
            PerturbKey::Relative => write!(f, "relative"),
        }
    }
}

impl From<PerturbKey> for PerturbationMode {
    fn from(k: PerturbKey) -> Self {
        match k {
            PerturbKey::Additive => PerturbationMode::Additive,
            PerturbKey::Relative => PerturbationMode::Relative,
        }
    }
}

/// Everything an experiment run depends on. `jobs` and `output_dir`
/// never influence results and are excluded from the config hash.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Stages per device (N).
    pub n_stages: usize,
    /// Device population size (K) for uniqueness studies.
    pub devices: usize,
    /// Challenges per signature (L).
    pub challenges: usize,
    /// Environmental conditions (m) for reliability studies.
    pub conditions: usize,
    /// Mean of the gate-rate distribution (per-nM per-second).
    pub mu: f64,
    /// Standard deviation of the gate-rate distribution.
    pub sigma: f64,
    /// Standard deviation of the environmental rate noise.
    pub sigma_s: f64,
    /// Master seed; every derived stream is a pure function of it.
    pub seed: u64,
    /// Simulation backend.
    pub mode: Mode,
    /// Artifact directory.
    pub output_dir: PathBuf,
    /// Worker threads; must never affect output bytes.
    pub jobs: usize,
    /// Stage counts visited by `sweep`.
    pub stages: Vec<usize>,
    /// Readout decision rule.
    pub arbiter_mode: ArbiterMode,
    /// Crossing threshold in nM.
    pub threshold: f64,
    /// Race margin below which the readout reports a tie.
    pub tie_window: f64,
    /// Simulation horizon in seconds; `None` scales with device size.
    pub horizon: Option<f64>,
    /// Relative integration tolerance.
    pub rtol: f64,
    /// Absolute integration tolerance (nM).
    pub atol: f64,
    /// Correlation structure of environmental noise across gates.
    pub noise: NoiseKey,
    /// How rate offsets combine with base rates.
    pub perturbation: PerturbKey,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_stages: 16,
            devices: 50,
            challenges: 64,
            conditions: 20,
            mu: 16.0,
            sigma: 1.0,
            sigma_s: 0.05,
            seed: 42,
            mode: Mode::Crn,
            output_dir: PathBuf::from("out"),
            jobs: 1,
            stages: vec![8, 16, 32, 64],
            arbiter_mode: ArbiterMode::Race,
            threshold: 50.0,
            tie_window: 1e-6,
            horizon: None,
            // Experiment-grade tolerances: response bits are stable down
            // to far tighter settings (the convergence criterion pins
            // this), and races resolve ~8x faster than at the library's
            // reference tolerances.
            rtol: 1e-4,
            atol: 1e-7,
            noise: NoiseKey::Common,
            perturbation: PerturbKey::Additive,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: expected key=value, got {text:?}", locate(*line))]
    Syntax { line: usize, text: String },
    #[error("{}: unknown key {key:?}", locate(*line))]
    UnknownKey { line: usize, key: String },
    #[error("{}: key {key}: cannot parse {value:?} ({expected})", locate(*line))]
    BadValue {
        line: usize,
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Error-message location: line 0 means a command-line override.
fn locate(line: usize) -> String {
    if line == 0 {
        "command line".to_owned()
    } else {
        format!("config line {line}")
    }
}

impl ExperimentConfig {
    /// Builds a config from defaults, then the optional file, then the
    /// command-line overrides (applied in that order), and validates.
    pub fn from_sources(
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut config = ExperimentConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                    line: lineno + 1,
                    text: raw.to_owned(),
                })?;
                config.apply(key.trim(), value.trim(), lineno + 1)?;
            }
        }
        for (key, value) in overrides {
            config.apply(key, value, 0)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Sets one key from its textual form. `line` is only for error
    /// reporting (0 = command line).
    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(
            line: usize,
            key: &str,
            value: &str,
            expected: &'static str,
        ) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                line,
                key: key.to_owned(),
                value: value.to_owned(),
                expected,
            })
        }
        match key {
            "n_stages" => self.n_stages = parse(line, key, value, "positive integer")?,
            "devices" => self.devices = parse(line, key, value, "positive integer")?,
            "challenges" => self.challenges = parse(line, key, value, "positive integer")?,
            "conditions" => self.conditions = parse(line, key, value, "positive integer")?,
            "mu" => self.mu = parse(line, key, value, "real")?,
            "sigma" => self.sigma = parse(line, key, value, "real")?,
            "sigma_s" => self.sigma_s = parse(line, key, value, "real")?,
            "seed" => self.seed = parse(line, key, value, "unsigned 64-bit integer")?,
            "mode" => {
                self.mode = match value {
                    "crn" => Mode::Crn,
                    "delay-model" => Mode::DelayModel,
                    _ => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "crn or delay-model",
                        })
                    }
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "jobs" => self.jobs = parse(line, key, value, "positive integer")?,
            "stages" => {
                let mut stages = Vec::new();
                for part in value.split(',') {
                    stages.push(parse(line, key, part.trim(), "comma-separated integers")?);
                }
                self.stages = stages;
            }
            "arbiter_mode" => {
                self.arbiter_mode = match value {
                    "race" => ArbiterMode::Race,
                    "difference" => ArbiterMode::Difference,
                    _ => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "race or difference",
                        })
                    }
                }
            }
            "threshold" => self.threshold = parse(line, key, value, "real")?,
            "tie_window" => self.tie_window = parse(line, key, value, "real")?,
            "horizon" => {
                self.horizon = if value == "auto" {
                    None
                } else {
                    Some(parse(line, key, value, "real or auto")?)
                }
            }
            "rtol" => self.rtol = parse(line, key, value, "real")?,
            "atol" => self.atol = parse(line, key, value, "real")?,
            "noise" => {
                self.noise = match value {
                    "common" => NoiseKey::Common,
                    "independent" => NoiseKey::Independent,
                    _ => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "common or independent",
                        })
                    }
                }
            }
            "perturbation" => {
                self.perturbation = match value {
                    "additive" => PerturbKey::Additive,
                    "relative" => PerturbKey::Relative,
                    _ => {
                        return Err(ConfigError::BadValue {
                            line,
                            key: key.to_owned(),
                            value: value.to_owned(),
                            expected: "additive or relative",
                        })
                    }
                }
            }
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_owned(),
                })
            }
        }
        Ok(())
    }

    /// Rejects configurations no experiment can run. Population sizes
    /// are unbounded: full-scale settings are accepted whether or not
    /// they are practical on the current machine.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.n_stages == 0 {
            return bad("n_stages must be at least 1".into());
        }
        if self.devices == 0 || self.challenges == 0 || self.conditions == 0 {
            return bad("devices, challenges, and conditions must be at least 1".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be at least 1".into());
        }
        if self.stages.is_empty() || self.stages.iter().any(|&n| n == 0) {
            return bad("stages must be a non-empty list of positive integers".into());
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return bad(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.sigma_s.is_finite() && self.sigma_s >= 0.0) {
            return bad(format!("sigma_s must be non-negative, got {}", self.sigma_s));
        }
        if !(self.threshold.is_finite() && self.threshold > 0.0) {
            return bad(format!("threshold must be positive, got {}", self.threshold));
        }
        if !(self.tie_window.is_finite() && self.tie_window >= 0.0) {
            return bad(format!("tie_window must be non-negative, got {}", self.tie_window));
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h > 0.0) {
                return bad(format!("horizon must be positive or auto, got {h}"));
            }
        }
        if !(self.rtol.is_finite() && self.rtol > 0.0) || !(self.atol.is_finite() && self.atol > 0.0)
        {
            return bad("rtol and atol must be positive".into());
        }
        Ok(())
    }

    /// Canonical `key=value` lines for the result-relevant settings, in
    /// fixed order. This is the hashed representation.
    pub fn canonical_lines(&self) -> Vec<String> {
        let stages = self
            .stages
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        let horizon = match self.horizon {
            None => "auto".to_owned(),
            Some(h) => format!("{h}"),
        };
        vec![
            format!("arbiter_mode={}", match self.arbiter_mode {
                ArbiterMode::Race => "race",
                ArbiterMode::Difference => "difference",
            }),
            format!("atol={}", self.atol),
            format!("challenges={}", self.challenges),
            format!("conditions={}", self.conditions),
            format!("devices={}", self.devices),
            format!("horizon={horizon}"),
            format!("mode={}", self.mode),
            format!("mu={}", self.mu),
            format!("n_stages={}", self.n_stages),
            format!("noise={}", self.noise),
            format!("perturbation={}", self.perturbation),
            format!("rtol={}", self.rtol),
            format!("seed={}", self.seed),
            format!("sigma={}", self.sigma),
            format!("sigma_s={}", self.sigma_s),
            format!("stages={stages}"),
            format!("threshold={}", self.threshold),
            format!("tie_window={}", self.tie_window),
        ]
    }

    /// 16-hex-digit digest of the result-relevant configuration.
    /// `output_dir` and `jobs` are excluded: they never change results.
    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_lines().join("\n").as_bytes()))
    }

    /// The arbiter settings this config describes.
    pub fn arbiter_config(&self) -> ArbiterConfig {
        ArbiterConfig {
            mode: self.arbiter_mode,
            threshold: self.threshold,
            horizon: self.horizon,
            tie_window: self.tie_window,
            integrator: self.integrator_config(),
        }
    }

    /// The integrator settings this config describes. Experiments never
    /// retain dense trajectories.
    pub fn integrator_config(&self) -> IntegratorConfig {
        IntegratorConfig {
            rtol: self.rtol,
            atol: self.atol,
            retention: SampleRetention::Sparse,
            ..IntegratorConfig::default()
        }
    }
}
