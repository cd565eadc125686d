//! Built-in analog systems and their primitive suites.

mod double_integrator;
mod pendulum;
mod quadruped;

use std::sync::Arc;

pub use double_integrator::{double_integrator_boxed_suite, double_integrator_suite, DI_V_MAX};
pub use pendulum::{pendulum_suite, swing_up_table, PENDULUM_DAMPING, PENDULUM_GRAVITY, PENDULUM_TORQUE};
pub use quadruped::{quadruped_analog_suite, quadruped_analog_suite_with, QuadrupedConstants};

use crate::dynamics::SystemModel;
use crate::error::{Error, Result};
use crate::graph::{build_graph, GridPolicy, MotionPrimitiveGraph};
use crate::oracle::OracleConfig;
use crate::planner::TimedGoal;
use crate::primitives::MotionPrimitive;

pub const SUITE_NAMES: [&str; 4] = ["pendulum", "quadruped-analog", "double-integrator", "double-integrator-boxed"];

/// A model, its primitives, the pinned build settings and a goal scenario.
#[derive(Clone, Debug)]
pub struct BenchmarkSuite {
    pub name: String,
    pub model: Arc<SystemModel>,
    pub primitives: Vec<MotionPrimitive>,
    pub grid_policy: GridPolicy,
    pub oracle: OracleConfig,
    pub scenario_start: String,
    pub scenario: Vec<TimedGoal>,
}

impl BenchmarkSuite {
    pub fn primitive(&self, name: &str) -> Option<&MotionPrimitive> {
        self.primitives.iter().find(|p| p.name() == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.primitives.iter().map(MotionPrimitive::name).collect()
    }

    /// Drops primitives by name (case-insensitive). Unknown names are an error.
    pub fn without(mut self, names: &[&str]) -> Result<Self> {
        for n in names {
            if !self.primitives.iter().any(|p| p.name().eq_ignore_ascii_case(n)) {
                return Err(Error::UnknownPrimitive(n.to_string()));
            }
        }
        self.primitives
            .retain(|p| !names.iter().any(|n| p.name().eq_ignore_ascii_case(n)));
        Ok(self)
    }

    pub fn build_graph(&self) -> Result<MotionPrimitiveGraph> {
        build_graph(&self.primitives, &self.grid_policy, &self.oracle)
    }

    /// File name of the committed graph fixture.
    pub fn fixture_name(&self) -> String {
        format!("{}.json", self.name)
    }
}

pub fn suite_by_name(name: &str) -> Result<BenchmarkSuite> {
    match name {
        "pendulum" => pendulum_suite(),
        "quadruped-analog" | "quadruped" => quadruped_analog_suite(),
        "double-integrator" => double_integrator_suite(),
        "double-integrator-boxed" => double_integrator_boxed_suite(),
        other => Err(Error::config(format!(
            "unknown suite `{other}` (known: {})",
            SUITE_NAMES.join(", ")
        ))),
    }
}
