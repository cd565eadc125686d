use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{dmatrix, dvector};

use super::BenchmarkSuite;
use crate::dynamics::{simulate_flow, BoxBounds, ClosedLoopSystem, ControlLaw, EventKind, IntegratorConfig, Monitor, State, SystemModel};
use crate::error::{Error, Result};
use crate::graph::GridPolicy;
use crate::oracle::OracleConfig;
use crate::planner::TimedGoal;
use crate::primitives::{Constraint, ExplicitRoA, FlowTable, MotionPrimitive, SafetySpec, Setpoint};

pub const PENDULUM_GRAVITY: f64 = 9.81;
pub const PENDULUM_DAMPING: f64 = 0.1;
/// Too small to hold the pendulum beyond about 0.15 rad from upright.
pub const PENDULUM_TORQUE: f64 = 1.5;
const SPEED_LIMIT: f64 = 8.0;
const WEIGHTS: [f64; 2] = [1.0, 0.3];
const KICK_DURATION: f64 = 0.5;
/// Swing-up hands over once within this angle of upright.
const CAPTURE_ANGLE: f64 = 0.1;

fn model() -> Result<Arc<SystemModel>> {
    Ok(Arc::new(SystemModel::new(
        "pendulum",
        2,
        1,
        |x: &State| dvector![x[1], -PENDULUM_GRAVITY * x[0].sin() - PENDULUM_DAMPING * x[1]],
        |_: &State| dmatrix![0.0; 1.0],
    )?))
}

fn torque() -> BoxBounds {
    BoxBounds::symmetric(1, PENDULUM_TORQUE)
}

fn safety() -> SafetySpec {
    SafetySpec::new().with(Constraint::abs("speed", 1, SPEED_LIMIT))
}

/// `E = θ̇²/2 + g (1 - cos θ)`; the upright rest state has `2g`.
fn energy(x: &State) -> f64 {
    0.5 * x[1] * x[1] + PENDULUM_GRAVITY * (1.0 - x[0].cos())
}

fn swing_up_law() -> ControlLaw {
    ControlLaw::new(
        "energy pumping with initial kick",
        torque(),
        |x: &State, t: f64| {
            let kick = -PENDULUM_TORQUE * (1.0 - t / KICK_DURATION).max(0.0);
            let pump = (2.0 * PENDULUM_GRAVITY - energy(x)) * x[1];
            dvector![kick + PENDULUM_DAMPING * x[1] + pump]
        },
    )
}

/// Flow of the swing-up law from rest at the bottom until the capture cone.
pub fn swing_up_table(model: &Arc<SystemModel>) -> Result<FlowTable> {
    let sys = ClosedLoopSystem::new(model.clone(), swing_up_law())?;
    let cfg = IntegratorConfig {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        max_step: 2e-3,
        min_step: 1e-14,
        event_refine_tol: 1e-9,
    };
    let capture = Monitor::new(EventKind::EnteredExplicitRoa, |x: &State, _| (x[0] - PI).abs() - CAPTURE_ANGLE);
    let tr = simulate_flow(&sys, &dvector![0.0, 0.0], 0.0, 60.0, &[capture], &cfg)?;
    if tr.terminal_event().map(|e| e.kind) != Some(EventKind::EnteredExplicitRoa) {
        return Err(Error::config("swing-up never reached the capture cone"));
    }
    FlowTable::from_trajectory(&sys, &tr)
}

fn fixed(model: &Arc<SystemModel>, name: &str, target: f64, kp: f64, kd: f64, radius: f64) -> Result<MotionPrimitive> {
    let law = ControlLaw::new(format!("sat(-{kp}(θ - {target:.4}) - {kd}θ̇)"), torque(), move |x: &State, _| {
        dvector![-kp * (x[0] - target) - kd * x[1]]
    });
    MotionPrimitive::builder(name, model.clone())
        .setpoint(Setpoint::fixed(dvector![target, 0.0]))
        .law(law)
        .safety(safety())
        .roa(ExplicitRoA::new(radius, WEIGHTS.to_vec())?)
        .build()
}

/// Down and Up holds plus the SwingUp transient that joins them.
pub fn pendulum_suite() -> Result<BenchmarkSuite> {
    let model = model()?;
    let down = fixed(&model, "Down", 0.0, 2.0, 2.0, 0.1)?;
    let up = fixed(&model, "Up", PI, 20.0, 6.0, 0.05)?;
    let swing = MotionPrimitive::builder("SwingUp", model.clone())
        .setpoint(Setpoint::tabulated(swing_up_table(&model)?)?)
        .law(swing_up_law())
        .safety(safety())
        .roa(ExplicitRoA::new(0.02, WEIGHTS.to_vec())?)
        .next_primitive("Up")
        .build()?;
    Ok(BenchmarkSuite {
        name: "pendulum".into(),
        model,
        primitives: vec![down, swing, up],
        grid_policy: GridPolicy::default(),
        oracle: OracleConfig::new(10.0),
        scenario_start: "Down".into(),
        scenario: vec![TimedGoal::new(0.0, "Down"), TimedGoal::new(1.0, "Up")],
    })
}
