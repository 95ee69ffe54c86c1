//! Run configuration and the error type that maps to exit code 1.

use std::fmt;
use std::path::{Path, PathBuf};

use combforge::verify::Branch;
use combforge::Params;
use serde::{Deserialize, Serialize};

/// A configuration problem, reported with the offending key.
#[derive(Debug, Clone)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Solve,
    Continue,
    Sweep,
    SmallEigs,
    Evolve,
    Diffusive,
    Comb,
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub period: f64,
    pub n: usize,
}

/// Task-specific settings; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    /// Which root of the bifurcation equation seeds the pulses.
    pub branch: Branch,
    /// Pulse positions of the initial guess.
    pub centers: Vec<f64>,
    /// Number of Floquet exponents in the Bloch sweep.
    pub xi_count: usize,
    /// Target periods for `continue`.
    pub periods: Vec<f64>,
    /// Number of periods in the evolution domain.
    pub copies: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    /// L2 size of the random perturbation in `evolve`.
    pub perturbation: f64,
    /// Radius of the small-eigenvalue ball.
    pub delta0: f64,
    /// Previously written `solution.json` to start from instead of solving.
    pub solution: Option<PathBuf>,
    /// Emit gnuplot scripts next to the data files.
    pub plot: bool,
    /// Acceptance criteria for `verify`; all when empty.
    pub criteria: Vec<u32>,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            branch: Branch::Stable,
            centers: vec![0.0],
            xi_count: 16,
            periods: Vec::new(),
            copies: 1,
            t_end: 50.0,
            dt: 0.01,
            seed: 7,
            perturbation: 1e-3,
            delta0: 0.05,
            solution: None,
            plot: false,
            criteria: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: Params,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    pub task: Task,
    #[serde(default)]
    pub options: Options,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parses JSON, naming the path of the first offending key on failure.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let key = unknown_field(&inner.to_string()).map(|f| join_key(&path, &f)).unwrap_or(path);
            ConfigError::new(key, inner.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate().map_err(|e| ConfigError::new("params", e.to_string()))?;
        let o = &self.options;
        let needs_grid = o.solution.is_none() && !matches!(self.task, Task::Verify);
        match self.grid {
            Some(g) => {
                if !(g.period.is_finite() && g.period > 0.0) {
                    return Err(ConfigError::new("grid.period", "must be positive"));
                }
                if g.n < 4 || g.n % 2 != 0 {
                    return Err(ConfigError::new("grid.n", "must be even and at least 4"));
                }
            }
            None if needs_grid => return Err(ConfigError::new("grid", "required for this task")),
            None => {}
        }
        if o.centers.is_empty() || o.centers.iter().any(|c| !c.is_finite()) {
            return Err(ConfigError::new("options.centers", "need at least one finite center"));
        }
        let mut c = o.centers.clone();
        c.sort_by(f64::total_cmp);
        if c.iter().zip(c.iter().rev()).any(|(a, b)| (a + b).abs() > 1e-12) {
            return Err(ConfigError::new("options.centers", "centers must be symmetric about 0"));
        }
        if o.xi_count < 2 {
            return Err(ConfigError::new("options.xi_count", "must be at least 2"));
        }
        if self.task == Task::Continue && o.periods.is_empty() {
            return Err(ConfigError::new("options.periods", "required for task continue"));
        }
        if o.periods.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(ConfigError::new("options.periods", "periods must be positive"));
        }
        if o.copies == 0 {
            return Err(ConfigError::new("options.copies", "must be at least 1"));
        }
        if self.task == Task::Diffusive && o.copies < 16 {
            return Err(ConfigError::new("options.copies", "diffusive runs need at least 16 copies"));
        }
        if !(o.t_end.is_finite() && o.t_end > 0.0) {
            return Err(ConfigError::new("options.t_end", "must be positive"));
        }
        if !(o.dt.is_finite() && o.dt > 0.0 && o.dt <= o.t_end) {
            return Err(ConfigError::new("options.dt", "must be positive and at most t_end"));
        }
        if !(o.perturbation.is_finite() && o.perturbation >= 0.0) {
            return Err(ConfigError::new("options.perturbation", "must be non-negative"));
        }
        if !(o.delta0.is_finite() && o.delta0 > 0.0) {
            return Err(ConfigError::new("options.delta0", "must be positive"));
        }
        if let Some(bad) = o.criteria.iter().find(|c| !(1..=13).contains(*c)) {
            return Err(ConfigError::new("options.criteria", format!("no criterion {bad}")));
        }
        Ok(())
    }
}

fn unknown_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

fn join_key(path: &str, field: &str) -> String {
    if path.is_empty() || path == "." {
        field.to_string()
    } else {
        // The path already ends at the offending field for unknown keys.
        if path.ends_with(field) {
            path.to_string()
        } else {
            format!("{path}.{field}")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"params": {"zeta": 1, "f": 2, "epsilon": 0}, "grid": {"period": 40, "n": 256}, "task": "solve"}"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.task, Task::Solve);
        assert_eq!(c.options, Options::default());
    }

    #[test]
    fn unknown_option_is_named() {
        let text = MINIMAL.replace(r#""task": "solve""#, r#""task": "solve", "options": {"xi_cnt": 4}"#);
        let e = RunConfig::parse(&text).unwrap_err();
        assert_eq!(e.key, "options.xi_cnt");
    }

    #[test]
    fn bad_value_is_named() {
        let e = RunConfig::parse(&MINIMAL.replace(r#""n": 256"#, r#""n": "many""#)).unwrap_err();
        assert_eq!(e.key, "grid.n");
        let e = RunConfig::parse(&MINIMAL.replace(r#""zeta": 1"#, r#""zeta": -1"#)).unwrap_err();
        assert_eq!(e.key, "params");
    }

    #[test]
    fn missing_grid_is_reported() {
        let e = RunConfig::parse(r#"{"params": {"zeta": 1, "f": 2, "epsilon": 0}, "task": "comb"}"#).unwrap_err();
        assert_eq!(e.key, "grid");
    }
}
