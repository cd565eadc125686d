use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{ClosedLoopSystem, State, Trajectory};
use crate::error::{Error, Result};

/// Slack allowed when a transient setpoint is queried just outside its domain
/// because of floating-point accumulation in callers' clocks.
pub const DOMAIN_SLACK: f64 = 1e-9;

pub type SetpointFn = dyn Fn(f64) -> State + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetpointKind {
    Fixed,
    Periodic { period: f64 },
    Transient { t0: f64, tf: f64 },
}

/// Node shape class of a primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveClass {
    Fixed,
    Periodic,
    Transient,
}

impl PrimitiveClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrimitiveClass::Fixed => "fixed",
            PrimitiveClass::Periodic => "periodic",
            PrimitiveClass::Transient => "transient",
        }
    }
}

/// Desired state `x*(t)` on the primitive-local clock.
#[derive(Clone)]
pub struct Setpoint {
    kind: SetpointKind,
    value: Arc<SetpointFn>,
    derivative_hint: Option<Arc<SetpointFn>>,
}

impl Setpoint {
    pub fn fixed(x: State) -> Self {
        Self {
            kind: SetpointKind::Fixed,
            value: Arc::new(move |_| x.clone()),
            derivative_hint: None,
        }
    }

    pub fn periodic(period: f64, value: impl Fn(f64) -> State + Send + Sync + 'static) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidDuration(period));
        }
        Ok(Self {
            kind: SetpointKind::Periodic { period },
            value: Arc::new(value),
            derivative_hint: None,
        })
    }

    pub fn transient(
        t0: f64,
        tf: f64,
        value: impl Fn(f64) -> State + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(t0.is_finite() && tf.is_finite() && tf > t0) {
            return Err(Error::InvalidDuration(tf - t0));
        }
        Ok(Self {
            kind: SetpointKind::Transient { t0, tf },
            value: Arc::new(value),
            derivative_hint: None,
        })
    }

    /// Transient setpoint interpolated from a recorded closed-loop flow.
    pub fn tabulated(table: FlowTable) -> Result<Self> {
        let (t0, tf) = (table.start(), table.end());
        let derivative = table.clone();
        let mut sp = Self::transient(t0, tf, move |t| table.eval(t))?;
        sp.derivative_hint = Some(Arc::new(move |t| derivative.eval_derivative(t)));
        Ok(sp)
    }

    pub fn with_derivative(mut self, d: impl Fn(f64) -> State + Send + Sync + 'static) -> Self {
        self.derivative_hint = Some(Arc::new(d));
        self
    }

    pub fn kind(&self) -> SetpointKind {
        self.kind
    }

    pub fn class(&self) -> PrimitiveClass {
        match self.kind {
            SetpointKind::Fixed => PrimitiveClass::Fixed,
            SetpointKind::Periodic { .. } => PrimitiveClass::Periodic,
            SetpointKind::Transient { .. } => PrimitiveClass::Transient,
        }
    }

    pub fn period(&self) -> Option<f64> {
        match self.kind {
            SetpointKind::Periodic { period } => Some(period),
            _ => None,
        }
    }

    /// First valid local time (0 for fixed and periodic setpoints).
    pub fn domain_start(&self) -> f64 {
        match self.kind {
            SetpointKind::Transient { t0, .. } => t0,
            _ => 0.0,
        }
    }

    pub fn domain_end(&self) -> Option<f64> {
        match self.kind {
            SetpointKind::Transient { tf, .. } => Some(tf),
            _ => None,
        }
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(Error::Domain {
                t,
                start: self.domain_start(),
                end: self.domain_end().unwrap_or(f64::INFINITY),
            });
        }
        if let SetpointKind::Transient { t0, tf } = self.kind {
            if t < t0 - DOMAIN_SLACK || t > tf + DOMAIN_SLACK {
                return Err(Error::Domain { t, start: t0, end: tf });
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> Result<State> {
        self.check_time(t)?;
        Ok(self.value_clamped(t))
    }

    /// Value with the time clamped into the domain; never fails.
    pub fn value_clamped(&self, t: f64) -> State {
        (self.value)(self.clamp_time(t))
    }

    pub fn clamp_time(&self, t: f64) -> f64 {
        match self.kind {
            SetpointKind::Transient { t0, tf } => t.clamp(t0, tf),
            _ => t,
        }
    }

    pub fn derivative_hint(&self, t: f64) -> Option<State> {
        self.derivative_hint.as_ref().map(|d| d(self.clamp_time(t)))
    }
}

impl fmt::Debug for Setpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Setpoint").field("kind", &self.kind).finish_non_exhaustive()
    }
}

/// Piecewise cubic Hermite interpolant of a closed-loop flow, using exact
/// vector-field values as node derivatives.
#[derive(Clone, Debug)]
pub struct FlowTable {
    times: Arc<[f64]>,
    states: Arc<[State]>,
    derivs: Arc<[State]>,
}

impl FlowTable {
    /// Tabulates `traj` (which must come from `sys`). Node times are shifted onto
    /// the primitive-local clock.
    pub fn from_trajectory(sys: &ClosedLoopSystem, traj: &Trajectory) -> Result<Self> {
        let offset = traj.activation_time();
        let mut times = Vec::with_capacity(traj.len());
        let mut states = Vec::with_capacity(traj.len());
        let mut derivs = Vec::with_capacity(traj.len());
        for (t, x) in traj.iter() {
            if let Some(last) = times.last() {
                if offset + t <= *last {
                    continue;
                }
            }
            times.push(offset + t);
            derivs.push(sys.evaluate(x, offset + t)?);
            states.push(x.clone());
        }
        if times.len() < 2 {
            return Err(Error::config("flow table needs at least two samples"));
        }
        Ok(Self {
            times: times.into(),
            states: states.into(),
            derivs: derivs.into(),
        })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let t = t.clamp(self.start(), self.end());
        let i = match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        };
        let h = self.times[i + 1] - self.times[i];
        (i, (t - self.times[i]) / h, h)
    }

    pub fn eval(&self, t: f64) -> State {
        let (i, s, h) = self.locate(t);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.states[i] * h00
            + &self.derivs[i] * (h10 * h)
            + &self.states[i + 1] * h01
            + &self.derivs[i + 1] * (h11 * h)
    }

    pub fn eval_derivative(&self, t: f64) -> State {
        let (i, s, h) = self.locate(t);
        let s2 = s * s;
        let d00 = (6.0 * s2 - 6.0 * s) / h;
        let d10 = 3.0 * s2 - 4.0 * s + 1.0;
        let d01 = (-6.0 * s2 + 6.0 * s) / h;
        let d11 = 3.0 * s2 - 2.0 * s;
        &self.states[i] * d00
            + &self.derivs[i] * d10
            + &self.states[i + 1] * d01
            + &self.derivs[i + 1] * d11
    }
}
