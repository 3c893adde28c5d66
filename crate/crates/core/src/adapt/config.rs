use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::Prior;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{0}")]
    Invalid(String),
    #[error("unknown setting `{0}`")]
    UnknownKey(String),
    #[error("setting `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
}

/// Tunables of an adaptation run. Loadable from a flat `key = value` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptConfig {
    /// Paths whose precision falls below this are adapted.
    pub precision_threshold: f64,
    /// K: children appended per restriction and per-node child cap.
    pub children_cap: usize,
    pub sample_rate: f64,
    pub epsilon: f64,
    pub window: usize,
    pub seed: u64,
    /// Verified items a path needs before it is judged.
    pub min_path_evidence: u64,
    pub max_depth: usize,
    /// Offer concept candidates besides keywords.
    pub conceptual: bool,
    pub cost_per_verdict: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            precision_threshold: 0.75,
            children_cap: 10,
            sample_rate: 0.03,
            epsilon: 0.01,
            window: 3,
            seed: 0,
            min_path_evidence: 5,
            max_depth: 8,
            conceptual: true,
            cost_per_verdict: 1.0,
            prior_alpha: 1.0,
            prior_beta: 1.0,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.precision_threshold > 0.0 && self.precision_threshold < 1.0) {
            return bad("precision_threshold must be in (0, 1)");
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return bad("sample_rate must be in (0, 1]");
        }
        if self.window < 2 {
            return bad("window must be at least 2");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if self.children_cap == 0 {
            return bad("children_cap must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.cost_per_verdict >= 0.0 && self.cost_per_verdict.is_finite()) {
            return bad("cost_per_verdict must be non-negative");
        }
        Prior::new(self.prior_alpha, self.prior_beta).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn prior(&self) -> Prior {
        Prior { alpha: self.prior_alpha, beta: self.prior_beta }
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(src)
            .map_err(|e| ConfigError::File { path: "<inline>".into(), message: e.message().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::File { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&src).map_err(|e| match e {
            ConfigError::File { message, .. } => ConfigError::File { path: path.display().to_string(), message },
            other => other,
        })
    }

    /// Applies one `key=value` override. Validation is left to the caller.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn p<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::BadValue { key: key.to_string(), value: value.to_string() })
        }
        match key.trim().replace('-', "_").as_str() {
            "precision_threshold" => self.precision_threshold = p(key, value)?,
            "children_cap" | "k" => self.children_cap = p(key, value)?,
            "sample_rate" => self.sample_rate = p(key, value)?,
            "epsilon" => self.epsilon = p(key, value)?,
            "window" => self.window = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            "min_path_evidence" => self.min_path_evidence = p(key, value)?,
            "max_depth" => self.max_depth = p(key, value)?,
            "conceptual" => self.conceptual = p(key, value)?,
            "cost_per_verdict" => self.cost_per_verdict = p(key, value)?,
            "prior_alpha" => self.prior_alpha = p(key, value)?,
            "prior_beta" => self.prior_beta = p(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}
