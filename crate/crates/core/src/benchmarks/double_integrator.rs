use std::sync::Arc;

use nalgebra::{dmatrix, dvector};

use super::BenchmarkSuite;
use crate::dynamics::{BoxBounds, State, SystemModel};
use crate::error::Result;
use crate::graph::GridPolicy;
use crate::oracle::OracleConfig;
use crate::planner::TimedGoal;
use crate::primitives::{split_output, Constraint, ExplicitRoA, MotionPrimitive, PdLaw, SafetySpec, Setpoint};

const KP: f64 = 4.0;
const KD: f64 = 4.0;
const U_MAX: f64 = 10.0;
const RADIUS: f64 = 0.1;
/// Below the 2/e peak speed of the unit hop.
pub const DI_V_MAX: f64 = 0.5;

fn model() -> Result<Arc<SystemModel>> {
    Ok(Arc::new(SystemModel::new(
        "double-integrator",
        2,
        1,
        |x: &State| dvector![x[1], 0.0],
        |_: &State| dmatrix![0.0; 1.0],
    )?))
}

fn hold(model: &Arc<SystemModel>, q: f64, safety: SafetySpec) -> Result<MotionPrimitive> {
    let law = PdLaw::new(vec![KP], vec![KD], move |_| (dvector![q], dvector![0.0]), split_output(1))
        .build(format!("pd kp={KP} kd={KD} about q={q}"), BoxBounds::symmetric(1, U_MAX))?;
    MotionPrimitive::builder(format!("Hold({q})"), model.clone())
        .family("Hold")
        .argument(format!("{q}"))
        .setpoint(Setpoint::fixed(dvector![q, 0.0]))
        .law(law)
        .safety(safety)
        .roa(ExplicitRoA::unit_weights(RADIUS, 2)?)
        .build()
}

fn suite(name: &str, safety: impl Fn() -> SafetySpec) -> Result<BenchmarkSuite> {
    let model = model()?;
    let primitives = vec![hold(&model, 0.0, safety())?, hold(&model, 1.0, safety())?];
    Ok(BenchmarkSuite {
        name: name.into(),
        model,
        primitives,
        grid_policy: GridPolicy::default(),
        oracle: OracleConfig::new(5.0),
        scenario_start: "Hold(0)".into(),
        scenario: vec![TimedGoal::new(0.0, "Hold(0)"), TimedGoal::new(2.0, "Hold(1)")],
    })
}

/// Two holds under unconstrained PD.
pub fn double_integrator_suite() -> Result<BenchmarkSuite> {
    suite("double-integrator", SafetySpec::new)
}

/// Same holds with `|v| <= DI_V_MAX`.
pub fn double_integrator_boxed_suite() -> Result<BenchmarkSuite> {
    suite("double-integrator-boxed", || SafetySpec::new().with(Constraint::abs("speed", 1, DI_V_MAX)))
}
