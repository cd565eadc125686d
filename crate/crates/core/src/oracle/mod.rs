//! Horizon-limited safety oracle and brute-force RoA probing.

mod roa;

pub use roa::{
    brute_force_roa, brute_force_roa_with, calibrate_radius, calibrate_radius_with, classify_state,
    BruteForceOptions, CalibrationOptions, CalibrationResult, CalibrationWarning, RoAClass, RoAEstimate,
};

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_flow, EventKind, IntegratorConfig, Monitor, State, Trajectory};
use crate::error::{Error, Result};
use crate::primitives::{MotionPrimitive, SetpointKind};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub horizon: f64,
    pub integrator: IntegratorConfig,
    pub record_trajectory: bool,
    /// Tolerance on `h >= 0` at event-refined states.
    pub safety_slack: f64,
}

impl OracleConfig {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            integrator: IntegratorConfig::default(),
            record_trajectory: false,
            safety_slack: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::config(format!("oracle horizon must be positive, got {}", self.horizon)));
        }
        if !(self.safety_slack.is_finite() && self.safety_slack >= 0.0) {
            return Err(Error::config("oracle safety slack must be finite and non-negative"));
        }
        self.integrator.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerdictReason {
    EnteredExplicitRoa,
    SafetyViolated,
    HorizonExhausted,
    IntegrationFailed,
    LeftStateBounds,
}

impl VerdictReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictReason::EnteredExplicitRoa => "entered-explicit-roa",
            VerdictReason::SafetyViolated => "safety-violated",
            VerdictReason::HorizonExhausted => "horizon-exhausted",
            VerdictReason::IntegrationFailed => "integration-failed",
            VerdictReason::LeftStateBounds => "left-state-bounds",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub accepted: bool,
    pub reason: VerdictReason,
    /// Time since activation at which the verdict was decided.
    pub event_time: f64,
    /// Smallest safety margin over the recorded samples.
    #[serde(with = "crate::canonical::nonfinite")]
    pub min_margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated_constraint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
}

const MONITOR_SAFETY: usize = 0;

/// Integrates `B`'s closed loop from `x0` activated at local time `tb`. Accepts
/// on the first entry into `E_B` with the safe set held up to that time; rejects
/// on a safety violation, on leaving the state bounds, when the horizon runs out,
/// or when integration fails.
///
/// For a transient `B` the horizon is clipped to the end of its domain.
pub fn safety_oracle(b: &MotionPrimitive, x0: &State, tb: f64, cfg: &OracleConfig) -> Result<OracleVerdict> {
    cfg.validate()?;
    b.setpoint().check_time(tb)?;
    let tb = b.setpoint().clamp_time(tb);
    let n = b.model().state_dim();
    if x0.len() != n {
        return Err(Error::Dimension {
            context: "oracle initial state",
            expected: n,
            actual: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("oracle initial state must be finite"));
    }

    let horizon = match b.setpoint().kind() {
        SetpointKind::Transient { tf, .. } => cfg.horizon.min(tf - tb),
        _ => cfg.horizon,
    };
    let slack = cfg.safety_slack;
    let safety = b.safety();
    let radius = b.radius();

    if horizon <= 0.0 {
        // Entered at the very end of a transient: only an immediate decision is possible.
        let m = safety.margin(x0, tb);
        let (accepted, reason) = if m.value + slack < 0.0 || m.value.is_nan() {
            (false, VerdictReason::SafetyViolated)
        } else if b.model().state_bounds().is_some_and(|bx| !bx.contains(x0)) {
            (false, VerdictReason::LeftStateBounds)
        } else if b.roa_distance_clamped(x0, tb) < radius {
            (true, VerdictReason::EnteredExplicitRoa)
        } else {
            (false, VerdictReason::HorizonExhausted)
        };
        let traj = cfg.record_trajectory.then(|| Trajectory::start(x0.clone(), tb));
        return Ok(OracleVerdict {
            accepted,
            reason,
            event_time: 0.0,
            min_margin: m.value,
            violated_constraint: (reason == VerdictReason::SafetyViolated)
                .then(|| m.constraint.map(|i| safety.constraint_name(i).to_string()))
                .flatten(),
            trajectory: traj,
        });
    }

    let monitors = [
        Monitor::new(EventKind::LeftSafeSet, move |x, t| safety.margin(x, t).value + slack),
        Monitor::new(EventKind::EnteredExplicitRoa, move |x, t| b.roa_distance_clamped(x, t) - radius),
    ];

    let traj = match simulate_flow(b.closed_loop(), x0, tb, horizon, &monitors, &cfg.integrator) {
        Ok(tr) => tr,
        Err(Error::IntegrationFailure { t, .. }) | Err(Error::ModelEvaluation { t, .. }) => {
            return Ok(OracleVerdict {
                accepted: false,
                reason: VerdictReason::IntegrationFailed,
                event_time: (t - tb).max(0.0),
                min_margin: f64::NAN,
                violated_constraint: None,
                trajectory: None,
            })
        }
        Err(e) => return Err(e),
    };

    let mut min_margin = f64::INFINITY;
    let mut worst = None;
    for (t, x) in traj.iter() {
        let m = safety.margin(x, tb + t);
        if m.value < min_margin || worst.is_none() {
            min_margin = m.value;
            worst = m.constraint;
        }
    }
    let event = traj.terminal_event().expect("simulate_flow always records a terminal event");
    let reason = match event.kind {
        EventKind::EnteredExplicitRoa => VerdictReason::EnteredExplicitRoa,
        EventKind::LeftSafeSet => VerdictReason::SafetyViolated,
        EventKind::HorizonReached => VerdictReason::HorizonExhausted,
        EventKind::StateLeftBounds => VerdictReason::LeftStateBounds,
    };
    let violated_constraint = if event.monitor == Some(MONITOR_SAFETY) && reason == VerdictReason::SafetyViolated {
        let x = traj.final_state();
        safety
            .margin(x, tb + event.t)
            .constraint
            .or(worst)
            .map(|i| safety.constraint_name(i).to_string())
    } else {
        None
    };
    Ok(OracleVerdict {
        accepted: reason == VerdictReason::EnteredExplicitRoa,
        reason,
        event_time: event.t,
        min_margin,
        violated_constraint,
        trajectory: cfg.record_trajectory.then_some(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BoxBounds, SystemModel};
    use crate::primitives::{pd_law, split_output, Constraint, ExplicitRoA, SafetySpec, Setpoint};
    use nalgebra::{dvector, DMatrix};
    use std::sync::Arc;

    fn hold(vmax: f64) -> MotionPrimitive {
        let model = Arc::new(
            SystemModel::new(
                "di",
                2,
                1,
                |x: &State| dvector![x[1], 0.0],
                |_x: &State| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            )
            .unwrap(),
        );
        let law = pd_law(
            vec![4.0],
            vec![4.0],
            |_t| (dvector![0.0], dvector![0.0]),
            split_output(1),
            BoxBounds::symmetric(1, 10.0),
        )
        .unwrap();
        MotionPrimitive::builder("hold", model)
            .setpoint(Setpoint::fixed(dvector![0.0, 0.0]))
            .law(law)
            .safety(SafetySpec::new().with(Constraint::abs("v", 1, vmax)))
            .roa(ExplicitRoA::unit_weights(0.05, 2).unwrap())
            .build()
            .unwrap()
    }

    #[test]
    fn setpoint_accepts_immediately() {
        let p = hold(1.0);
        let v = safety_oracle(&p, &dvector![0.0, 0.0], 0.0, &OracleConfig::new(5.0)).unwrap();
        assert!(v.accepted);
        assert_eq!(v.event_time, 0.0);
        assert_eq!(v.reason, VerdictReason::EnteredExplicitRoa);
    }

    #[test]
    fn unsafe_start_rejects_at_zero() {
        let p = hold(1.0);
        let v = safety_oracle(&p, &dvector![0.0, 1.5], 0.0, &OracleConfig::new(5.0)).unwrap();
        assert!(!v.accepted);
        assert_eq!(v.reason, VerdictReason::SafetyViolated);
        assert_eq!(v.event_time, 0.0);
        assert_eq!(v.violated_constraint.as_deref(), Some("v"));
    }

    #[test]
    fn step_accepts_or_violates() {
        // Unit step under this PD peaks at |v| ≈ 0.736.
        let loose = hold(1.0);
        let v = safety_oracle(&loose, &dvector![1.0, 0.0], 0.0, &OracleConfig::new(5.0)).unwrap();
        assert!(v.accepted, "{v:?}");
        assert!(v.min_margin > 0.2 && v.min_margin < 0.3);
        let tight = hold(0.5);
        let v = safety_oracle(&tight, &dvector![1.0, 0.0], 0.0, &OracleConfig::new(5.0)).unwrap();
        assert_eq!(v.reason, VerdictReason::SafetyViolated);
    }

    #[test]
    fn short_horizon_exhausts() {
        let p = hold(1.0);
        let v = safety_oracle(&p, &dvector![1.0, 0.0], 0.0, &OracleConfig::new(0.5)).unwrap();
        assert_eq!(v.reason, VerdictReason::HorizonExhausted);
        assert!((v.event_time - 0.5).abs() < 1e-12);
    }

    #[test]
    fn horizon_monotone_first_entry() {
        let p = hold(1.0);
        let a = safety_oracle(&p, &dvector![1.0, 0.0], 0.0, &OracleConfig::new(5.0)).unwrap();
        let b = safety_oracle(&p, &dvector![1.0, 0.0], 0.0, &OracleConfig::new(20.0)).unwrap();
        assert!(a.accepted && b.accepted);
        assert_eq!(a.event_time, b.event_time);
    }

    #[test]
    fn verdict_json_with_trajectory() {
        let p = hold(1.0);
        let cfg = OracleConfig {
            record_trajectory: true,
            ..OracleConfig::new(5.0)
        };
        let v = safety_oracle(&p, &dvector![0.3, 0.0], 0.0, &cfg).unwrap();
        let js = serde_json::to_value(&v).unwrap();
        assert_eq!(js["reason"], "entered-explicit-roa");
        assert!(js["trajectory"]["t"].as_array().unwrap().len() > 2);
        let back: OracleVerdict = serde_json::from_value(js).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn bad_inputs() {
        let p = hold(1.0);
        assert!(safety_oracle(&p, &dvector![0.0], 0.0, &OracleConfig::new(1.0)).is_err());
        assert!(safety_oracle(&p, &dvector![f64::NAN, 0.0], 0.0, &OracleConfig::new(1.0)).is_err());
        assert!(safety_oracle(&p, &dvector![0.0, 0.0], 0.0, &OracleConfig::new(0.0)).is_err());
    }
}
