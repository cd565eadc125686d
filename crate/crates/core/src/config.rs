//! JSON project configuration for the command-line front end.
//!
//! ```json
//! {
//!   "system": { "kind": "suite", "name": "pendulum", "without": ["SwingUp"] },
//!   "grid": { "periodic_n": 16, "transient_n": 16 },
//!   "oracle_horizon": 10.0,
//!   "seed": 0
//! }
//! ```
//!
//! User systems are limited to the declarative `linear` family
//! `ẋ = A x + B u` with fixed setpoints held by `u = u* - K (x - x*)`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::benchmarks::{suite_by_name, BenchmarkSuite};
use crate::canonical::{sha256_hex, to_canonical_string};
use crate::dynamics::{BoxBounds, ControlLaw, IntegratorConfig, State, SystemModel};
use crate::error::{Error, Result};
use crate::graph::GridPolicy;
use crate::oracle::OracleConfig;
use crate::planner::TimedGoal;
use crate::primitives::{Constraint, ExplicitRoA, MotionPrimitive, SafetySpec, Setpoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemSelection {
    Suite {
        name: String,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        without: Vec<String>,
    },
    Linear(LinearSystemSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSystemSpec {
    pub name: String,
    /// Row-major `n x n`.
    pub a: Vec<Vec<f64>>,
    /// Row-major `n x m`.
    pub b: Vec<Vec<f64>>,
    /// Symmetric input limits, one per input.
    pub input_limit: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bounds: Option<BoxBounds>,
    pub primitives: Vec<LinearPrimitiveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearPrimitiveSpec {
    pub name: String,
    pub setpoint: Vec<f64>,
    /// Row-major `m x n` feedback gain.
    pub gain: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedforward: Option<Vec<f64>>,
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<BoundSpec>,
}

/// `lower <= x[index] <= upper`; either side may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub name: String,
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub start: String,
    pub goals: Vec<TimedGoal>,
}

impl ScenarioSpec {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub system: SystemSelection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safety_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorConfig>,
    /// Seed for calibration boundary sampling.
    #[serde(default)]
    pub seed: u64,
    /// Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    /// Not part of the hash: results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl ProjectConfig {
    pub fn for_suite(name: &str) -> Self {
        Self {
            system: SystemSelection::Suite {
                name: name.to_string(),
                without: Vec::new(),
            },
            grid: None,
            oracle_horizon: None,
            safety_slack: None,
            integrator: None,
            seed: 0,
            output_dir: None,
            threads: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let Some(i) = &self.integrator {
            i.validate()?;
        }
        if let Some(h) = self.oracle_horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::config(format!("oracle horizon must be positive, got {h}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be at least 1"));
        }
        Ok(())
    }

    /// sha256 of the canonical JSON of everything that affects results.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = None;
        c.threads = None;
        Ok(sha256_hex(to_canonical_string(&c)?.as_bytes()))
    }

    /// Builds the selected suite with this config's overrides applied.
    pub fn resolve(&self) -> Result<BenchmarkSuite> {
        self.validate()?;
        let mut suite = match &self.system {
            SystemSelection::Suite { name, without } => {
                let s = suite_by_name(name)?;
                let names: Vec<&str> = without.iter().map(String::as_str).collect();
                s.without(&names)?
            }
            SystemSelection::Linear(spec) => spec.build()?,
        };
        if let Some(g) = self.grid {
            suite.grid_policy = g;
        }
        if let Some(h) = self.oracle_horizon {
            suite.oracle.horizon = h;
        }
        if let Some(s) = self.safety_slack {
            suite.oracle.safety_slack = s;
        }
        if let Some(i) = self.integrator {
            suite.oracle.integrator = i;
        }
        suite.oracle.validate()?;
        Ok(suite)
    }
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, context: &'static str) -> Result<DMatrix<f64>> {
    if rows.len() != r {
        return Err(Error::Dimension {
            context,
            expected: r,
            actual: rows.len(),
        });
    }
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::Dimension {
            context,
            expected: c,
            actual: bad.len(),
        });
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

impl LinearSystemSpec {
    pub fn build(&self) -> Result<BenchmarkSuite> {
        let n = self.a.len();
        let m = self.input_limit.len();
        let a = matrix(&self.a, n, n, "linear system A")?;
        let b = matrix(&self.b, n, m, "linear system B")?;
        let mut model = SystemModel::new(self.name.clone(), n, m, move |x: &State| &a * x, move |_: &State| b.clone())?;
        if let Some(bounds) = &self.state_bounds {
            model = model.with_state_bounds(bounds.clone())?;
        }
        let model = Arc::new(model);
        let inputs = BoxBounds::new(
            self.input_limit.iter().map(|l| -l.abs()).collect(),
            self.input_limit.iter().map(|l| l.abs()).collect(),
        )?;
        let mut primitives = Vec::with_capacity(self.primitives.len());
        for p in &self.primitives {
            if p.setpoint.len() != n {
                return Err(Error::Dimension {
                    context: "linear primitive setpoint",
                    expected: n,
                    actual: p.setpoint.len(),
                });
            }
            let k = matrix(&p.gain, m, n, "linear primitive gain")?;
            let xs = DVector::from_vec(p.setpoint.clone());
            let uff = DVector::from_vec(p.feedforward.clone().unwrap_or_else(|| vec![0.0; m]));
            if uff.len() != m {
                return Err(Error::Dimension {
                    context: "linear primitive feedforward",
                    expected: m,
                    actual: uff.len(),
                });
            }
            let target = xs.clone();
            let law = ControlLaw::new("linear state feedback", inputs.clone(), move |x: &State, _| {
                &uff - &k * (x - &target)
            });
            let mut safety = SafetySpec::new();
            for c in &p.constraints {
                if c.index >= n {
                    return Err(Error::config(format!("constraint `{}` indexes state {} of {n}", c.name, c.index)));
                }
                match (c.lower, c.upper) {
                    (Some(lo), Some(hi)) => {
                        safety = safety
                            .with(Constraint::lower(format!("{}-lower", c.name), c.index, lo))
                            .with(Constraint::upper(format!("{}-upper", c.name), c.index, hi))
                    }
                    (Some(lo), None) => safety = safety.with(Constraint::lower(c.name.clone(), c.index, lo)),
                    (None, Some(hi)) => safety = safety.with(Constraint::upper(c.name.clone(), c.index, hi)),
                    (None, None) => return Err(Error::config(format!("constraint `{}` has no bound", c.name))),
                }
            }
            let roa = match &p.weights {
                Some(w) => ExplicitRoA::new(p.radius, w.clone())?,
                None => ExplicitRoA::unit_weights(p.radius, n)?,
            };
            primitives.push(
                MotionPrimitive::builder(p.name.clone(), model.clone())
                    .setpoint(Setpoint::fixed(xs))
                    .law(law)
                    .safety(safety)
                    .roa(roa)
                    .build()?,
            );
        }
        let (scenario_start, scenario) = match &self.scenario {
            Some(s) => (s.start.clone(), s.goals.clone()),
            None => (
                primitives.first().map(|p| p.name().to_string()).unwrap_or_default(),
                Vec::new(),
            ),
        };
        Ok(BenchmarkSuite {
            name: self.name.clone(),
            model,
            primitives,
            grid_policy: GridPolicy::default(),
            oracle: OracleConfig::new(5.0),
            scenario_start,
            scenario,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINEAR: &str = r#"{
        "system": {
            "kind": "linear",
            "name": "di",
            "a": [[0, 1], [0, 0]],
            "b": [[0], [1]],
            "input_limit": [10],
            "primitives": [
                {"name": "left", "setpoint": [0, 0], "gain": [[4, 4]], "radius": 0.1},
                {"name": "right", "setpoint": [1, 0], "gain": [[4, 4]], "radius": 0.1,
                 "constraints": [{"name": "speed", "index": 1, "lower": -0.5, "upper": 0.5}]}
            ]
        },
        "oracle_horizon": 5
    }"#;

    #[test]
    fn linear_config_builds() {
        let cfg = ProjectConfig::from_json(LINEAR).unwrap();
        let suite = cfg.resolve().unwrap();
        assert_eq!(suite.names(), vec!["left", "right"]);
        assert_eq!(suite.primitive("right").unwrap().safety().constraints().len(), 2);
        let g = suite.build_graph().unwrap();
        // Peak speed of the unit hop is 2/e > 0.5.
        assert!(g.edge("left", "right").is_none());
        assert!(g.edge("right", "left").is_some());
    }

    #[test]
    fn hash_ignores_threads_and_output() {
        let a = ProjectConfig::for_suite("double-integrator");
        let mut b = a.clone();
        b.threads = Some(8);
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn bad_configs() {
        assert!(ProjectConfig::from_json("{}").is_err());
        assert!(ProjectConfig::from_json(r#"{"system": {"kind": "suite", "name": "x"}}"#)
            .unwrap()
            .resolve()
            .is_err());
        let mut c = ProjectConfig::for_suite("pendulum");
        c.oracle_horizon = Some(-1.0);
        assert!(c.resolve().is_err());
        let bad_a = LINEAR.replace("[[0, 1], [0, 0]]", "[[0, 1]]");
        assert!(ProjectConfig::from_json(&bad_a).unwrap().resolve().is_err());
    }

    #[test]
    fn without_is_case_insensitive() {
        let mut c = ProjectConfig::for_suite("pendulum");
        c.system = SystemSelection::Suite {
            name: "pendulum".into(),
            without: vec!["swingup".into()],
        };
        assert_eq!(c.resolve().unwrap().names(), vec!["Down", "Up"]);
    }
}
