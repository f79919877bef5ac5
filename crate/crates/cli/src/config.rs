//! Line-oriented `key = value` run configuration.
//!
//! Every key is optional; unset keys fall back to the reference server
//! defaults. `#` starts a comment anywhere on a line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use vodsim::engine::{PolicySource, Scenario, SweepAxis, DEFAULT_SEED};
use vodsim::model::{ControlMatrix, REFERENCE_PORTS_PER_SECTION, REFERENCE_SECTIONS};
use vodsim::traffic::{cluster_rates, generate_matrix, RateMapping};
use vodsim::{HoldingDistribution, OnPolicyReject, Scan};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub source: String,
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}: {}", self.source, self.message)
        } else {
            write!(f, "{}:{}: {}", self.source, self.line, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario_id: String,
    pub capacities: Option<Vec<u32>>,
    pub sections: usize,
    pub ports_per_section: u32,
    pub clusters: Option<usize>,
    pub min_rate: f64,
    pub max_rate: f64,
    pub playback_rate: f64,
    pub rate_scale: f64,
    pub population_multiplier: f64,
    pub holding_time: f64,
    pub holding_distribution: HoldingDistribution,
    pub sim_time: f64,
    pub warmup: f64,
    pub seed: u64,
    pub scan: Scan,
    pub on_policy_reject: OnPolicyReject,
    pub policy_enabled: bool,
    pub policy_column: usize,
    pub matrix: Option<PathBuf>,
    /// Generate the control matrix from this seed instead of using the bundled one.
    pub matrix_seed: Option<u64>,
    pub matrix_columns: usize,
    pub output_dir: PathBuf,
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario_id: "run".into(),
            capacities: None,
            sections: REFERENCE_SECTIONS,
            ports_per_section: REFERENCE_PORTS_PER_SECTION,
            clusters: None,
            min_rate: 1.0,
            max_rate: 10.5,
            playback_rate: 4.0,
            rate_scale: 1.0,
            population_multiplier: 1.0,
            holding_time: 140.0,
            holding_distribution: HoldingDistribution::Deterministic,
            sim_time: 460.0,
            warmup: 0.0,
            seed: DEFAULT_SEED,
            scan: Scan::WrapAround,
            on_policy_reject: OnPolicyReject::Continue,
            policy_enabled: true,
            policy_column: 2,
            matrix: None,
            matrix_seed: None,
            matrix_columns: 10,
            output_dir: PathBuf::from("vodsim-out"),
            axis: None,
            values: Vec::new(),
            jobs: 1,
        }
    }
}

fn parse_value<T: std::str::FromStr>(raw: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>().map_err(|e| format!("invalid value '{raw}': {e}"))
}

pub fn parse_list<T: std::str::FromStr>(raw: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| parse_value(s.trim())).collect()
}

fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("invalid boolean '{raw}'")),
    }
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "scenario_id" | "id" => {
                if value.contains([',', '\n']) || value.is_empty() {
                    return Err(format!("scenario id '{value}' must be non-empty without commas"));
                }
                self.scenario_id = value.to_string();
            }
            "capacities" => self.capacities = Some(parse_list(value)?),
            "sections" => self.sections = parse_value(value)?,
            "ports_per_section" => self.ports_per_section = parse_value(value)?,
            "clusters" => self.clusters = Some(parse_value(value)?),
            "min_rate" => self.min_rate = parse_value(value)?,
            "max_rate" => self.max_rate = parse_value(value)?,
            "playback_rate" => self.playback_rate = parse_value(value)?,
            "rate_scale" => self.rate_scale = parse_value(value)?,
            "population_multiplier" => self.population_multiplier = parse_value(value)?,
            "holding_time" => self.holding_time = parse_value(value)?,
            "holding_distribution" => {
                self.holding_distribution = value.parse().map_err(|e: vodsim::Error| e.to_string())?
            }
            "sim_time" => self.sim_time = parse_value(value)?,
            "warmup" => self.warmup = parse_value(value)?,
            "seed" => self.seed = parse_value(value)?,
            "scan" => self.scan = value.parse().map_err(|e: vodsim::Error| e.to_string())?,
            "on_policy_reject" => self.on_policy_reject = value.parse().map_err(|e: vodsim::Error| e.to_string())?,
            "policy" | "policy_enabled" => self.policy_enabled = parse_bool(value)?,
            "policy_column" => self.policy_column = parse_value(value)?,
            "matrix" => self.matrix = Some(PathBuf::from(value)),
            "matrix_seed" => self.matrix_seed = Some(parse_value(value)?),
            "matrix_columns" => self.matrix_columns = parse_value(value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "axis" => self.axis = Some(value.parse().map_err(|e: vodsim::Error| e.to_string())?),
            "values" => self.values = parse_list(value)?,
            "jobs" => self.jobs = parse_value(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text, source)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError {
                source: source.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            self.set(key.trim(), value.trim()).map_err(err)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let source = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source: source.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text, &source)
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.capacities
            .clone()
            .unwrap_or_else(|| vec![self.ports_per_section; self.sections])
    }

    pub fn control_matrix(&self) -> vodsim::Result<ControlMatrix> {
        match (&self.matrix, self.matrix_seed) {
            (Some(path), _) => ControlMatrix::read_csv(path),
            (None, Some(seed)) => generate_matrix(self.capacities().len(), self.matrix_columns, seed),
            (None, None) => Ok(ControlMatrix::table1()),
        }
    }

    /// Resolves into a scenario. The control matrix is loaded only when the
    /// policy is enabled.
    pub fn scenario(&self) -> vodsim::Result<Scenario> {
        let capacities = self.capacities();
        let clusters = self.clusters.unwrap_or(capacities.len());
        let policy = if self.policy_enabled {
            PolicySource::Column {
                matrix: Arc::new(self.control_matrix()?),
                column: self.policy_column,
            }
        } else {
            PolicySource::Disabled
        };
        let scenario = Scenario {
            id: self.scenario_id.clone(),
            capacities,
            policy,
            cascade: vodsim::CascadeMode::new(self.scan, self.on_policy_reject),
            ladder: cluster_rates(self.min_rate, self.max_rate, clusters)?,
            mapping: RateMapping {
                playback_rate: self.playback_rate,
                scale: self.rate_scale,
            },
            population_multiplier: self.population_multiplier,
            holding_time: self.holding_time,
            holding_distribution: self.holding_distribution,
            sim_time: self.sim_time,
            warmup: self.warmup,
            seed: self.seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_server() {
        let s = RunConfig::default().scenario().unwrap();
        assert_eq!(s.capacities, vec![10; 20]);
        assert_eq!(s.ladder.rates().first(), Some(&1.0));
        assert_eq!(s.ladder.rates().last(), Some(&10.5));
        assert_eq!(s.ladder.count(), 20);
        assert_eq!(s.holding_time, 140.0);
        assert_eq!(s.sim_time, 460.0);
        assert_eq!(s.warmup, 0.0);
        assert_eq!(s, Scenario::default());
    }

    #[test]
    fn parses_keys_and_comments() {
        let text = "# demo\nsim_time = 1000  # longer\ncapacities = 2, 2\nmin_rate=0.08\nmax_rate = 0.16\npolicy = false\nholding_distribution = exponential\n";
        let cfg = RunConfig::parse(text, "demo.cfg").unwrap();
        let s = cfg.scenario().unwrap();
        assert_eq!(s.sim_time, 1000.0);
        assert_eq!(s.capacities, vec![2, 2]);
        assert!(!s.policy.is_enabled());
        assert_eq!(s.holding_distribution, HoldingDistribution::Exponential);
        let rates = s.arrival_rates().unwrap();
        assert!((rates[0] - 0.02).abs() < 1e-15 && (rates[1] - 0.04).abs() < 1e-15);
    }

    #[test]
    fn errors_are_line_anchored() {
        let err = RunConfig::parse("seed = 1\n\nbogus = 3\n", "x.cfg").unwrap_err();
        assert_eq!(err.line, 3);
        assert_eq!(err.to_string(), "x.cfg:3: unknown key 'bogus'");
        let err = RunConfig::parse("sim_time = soon\n", "x.cfg").unwrap_err();
        assert_eq!(err.line, 1);
        let err = RunConfig::parse("just text\n", "x.cfg").unwrap_err();
        assert!(err.message.contains("key = value"));
    }

    #[test]
    fn mismatched_clusters_fail_to_resolve() {
        let cfg = RunConfig::parse("clusters = 5\n", "x").unwrap();
        assert!(cfg.scenario().is_err());
    }
}
