//! Scenario schema (`fpsteer/1`): the full problem instance plus optional
//! config overrides, loaded from JSON and validated field by field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::DensitySpec;
use crate::controller::ControllerConfig;
use crate::moments::{gaussian_noise_moments, MomentSequence};
use crate::realizer::RealizerConfig;
use crate::report::ReportConfig;
use crate::simulate::SimulationConfig;
use crate::{Error, Result};

pub const SCHEMA_VERSION: &str = "fpsteer/1";

/// A gain that is either constant over the horizon or listed per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSequence {
    Constant(f64),
    PerStep(Vec<f64>),
}

impl GainSequence {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            GainSequence::Constant(v) => *v,
            GainSequence::PerStep(v) => v[k],
        }
    }

    fn validate(&self, name: &str, horizon: usize, nonzero: bool) -> Result<()> {
        let values: Vec<f64> = match self {
            GainSequence::Constant(v) => vec![*v],
            GainSequence::PerStep(v) => {
                if v.len() != horizon {
                    return Err(Error::Config(format!(
                        "gains.{name} lists {} entries for horizon {horizon}",
                        v.len()
                    )));
                }
                v.clone()
            }
        };
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Config(format!("gains.{name}[{k}] is not finite")));
            }
            if nonzero && *v == 0.0 {
                return Err(Error::Config(format!(
                    "gains.{name}[{k}] must be nonzero (kernel recovery divides by it)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSpec {
    pub a: GainSequence,
    pub b: GainSequence,
}

/// One complete steering problem.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub name: String,
    /// Number of transitions `K`.
    pub horizon: usize,
    /// Half moment order `n`; the pipeline tracks moments up to `2n`.
    pub half_order: usize,
    pub gains: GainSpec,
    /// Variance of the additive Gaussian noise.
    pub noise_variance: f64,
    pub initial: DensitySpec,
    pub target: DensitySpec,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub realizer: RealizerConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

impl Scenario {
    /// Moment truncation order `2n`.
    pub fn order(&self) -> usize {
        2 * self.half_order
    }

    pub fn a(&self, k: usize) -> f64 {
        self.gains.a.at(k)
    }

    pub fn b(&self, k: usize) -> f64 {
        self.gains.b.at(k)
    }

    /// Noise moments at the scenario order.
    pub fn noise_moments(&self) -> Result<MomentSequence> {
        self.noise_moments_for(self.order())
    }

    /// Noise moments at an explicit order (plans may be probed at the order
    /// of their states).
    pub fn noise_moments_for(&self, order: usize) -> Result<MomentSequence> {
        gaussian_noise_moments(self.noise_variance, order)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema must be \"{SCHEMA_VERSION}\", got \"{}\"",
                self.schema
            )));
        }
        if self.name.is_empty() {
            return Err(Error::Config("name must not be empty".into()));
        }
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.half_order < 1 {
            return Err(Error::Config("half_order must be at least 1".into()));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::Config(format!(
                "noise_variance must be positive and finite, got {}",
                self.noise_variance
            )));
        }
        self.gains.a.validate("a", self.horizon, false)?;
        self.gains.b.validate("b", self.horizon, true)?;
        self.initial
            .validate()
            .map_err(|e| Error::Config(format!("initial: {e}")))?;
        self.target
            .validate()
            .map_err(|e| Error::Config(format!("target: {e}")))?;
        self.controller.validate()?;
        self.realizer.validate()?;
        self.simulation.validate()?;
        self.report.validate()?;
        Ok(())
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario<P: AsRef<Path>>(path: P) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Config(format!("cannot read scenario {}: {e}", path.display()))
    })?;
    let scenario: Scenario = serde_json::from_str(&text).map_err(|e| {
        Error::Config(format!("cannot parse scenario {}: {e}", path.display()))
    })?;
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// The bundled first example: Gaussian to Gaussian mixture in four steps.
    pub fn example1_scenario() -> Scenario {
        Scenario {
            schema: SCHEMA_VERSION.into(),
            name: "example1".into(),
            horizon: 4,
            half_order: 2,
            gains: GainSpec {
                a: GainSequence::Constant(0.5),
                b: GainSequence::Constant(0.8),
            },
            noise_variance: 1.0,
            initial: DensitySpec::Gaussian { mean: 0.0, variance: 1.0 },
            target: DensitySpec::GaussianMixture {
                weights: vec![0.3, 0.7],
                means: vec![-2.0, 2.0],
                variances: vec![4.0, 4.0],
            },
            controller: ControllerConfig::default(),
            realizer: RealizerConfig::default(),
            simulation: SimulationConfig::default(),
            report: ReportConfig::default(),
        }
    }

    /// The bundled second example: Gaussian to a generalized-logistic
    /// mixture.
    pub fn example2_scenario() -> Scenario {
        let mut s = example1_scenario();
        s.name = "example2".into();
        s.target = DensitySpec::GlogisticMixture {
            weights: vec![0.4, 0.6],
            shapes: vec![2.0, 3.0],
            locations: vec![0.0, -2.0],
        };
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> serde_json::Value {
        serde_json::json!({
            "schema": "fpsteer/1",
            "name": "t",
            "horizon": 2,
            "half_order": 2,
            "gains": {"a": 0.5, "b": 0.8},
            "noise_variance": 1.0,
            "initial": {"kind": "gaussian", "mean": 0.0, "variance": 1.0},
            "target": {"kind": "gaussian", "mean": 1.0, "variance": 4.0},
        })
    }

    fn parse(v: serde_json::Value) -> Result<Scenario> {
        let s: Scenario = serde_json::from_value(v).map_err(Error::from)?;
        s.validate()?;
        Ok(s)
    }

    #[test]
    fn minimal_scenario_with_defaults() {
        let s = parse(minimal_json()).unwrap();
        assert_eq!(s.order(), 4);
        assert_eq!(s.controller.c_grid, 201);
        assert_eq!(s.realizer.quadrature_nodes, 4001);
        assert_eq!(s.simulation.runs, 2000);
        assert_eq!(s.report.z, 4.0);
        assert_eq!(s.a(1), 0.5);
        assert_eq!(s.b(0), 0.8);
    }

    #[test]
    fn per_step_gains() {
        let mut v = minimal_json();
        v["gains"] = serde_json::json!({"a": [0.5, 0.6], "b": [0.8, -0.9]});
        let s = parse(v).unwrap();
        assert_eq!(s.a(1), 0.6);
        assert_eq!(s.b(1), -0.9);

        let mut bad = minimal_json();
        bad["gains"] = serde_json::json!({"a": [0.5], "b": 0.8});
        assert!(parse(bad).is_err());
    }

    #[test]
    fn zero_b_rejected() {
        let mut v = minimal_json();
        v["gains"] = serde_json::json!({"a": 0.5, "b": [0.8, 0.0]});
        let err = parse(v).unwrap_err();
        assert!(err.to_string().contains("gains.b[1]"), "{err}");
    }

    #[test]
    fn schema_and_ranges_enforced() {
        let mut v = minimal_json();
        v["schema"] = serde_json::json!("fpsteer/2");
        assert!(parse(v).is_err());

        let mut v = minimal_json();
        v["noise_variance"] = serde_json::json!(0.0);
        assert!(parse(v).is_err());

        let mut v = minimal_json();
        v["half_order"] = serde_json::json!(0);
        assert!(parse(v).is_err());

        let mut v = minimal_json();
        v["target"] = serde_json::json!({"kind": "gaussian", "mean": 0.0, "variance": -1.0});
        assert!(parse(v).is_err());
    }

    #[test]
    fn config_overrides_apply() {
        let mut v = minimal_json();
        v["simulation"] = serde_json::json!({"runs": 10, "seed": 99});
        v["controller"] = serde_json::json!({"cost": "physical"});
        let s = parse(v).unwrap();
        assert_eq!(s.simulation.runs, 10);
        assert_eq!(s.simulation.seed, 99);
        assert!(s.simulation.record_full_trajectories);
        assert_eq!(s.controller.cost, crate::controller::CostVariant::Physical);
    }

    #[test]
    fn unparseable_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{not json").unwrap();
        let err = load_scenario(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(load_scenario(dir.path().join("missing.json")).is_err());
    }
}
