use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{weighted_norm, State};
use crate::error::{Error, Result};

pub type ConstraintFn = dyn Fn(&State, f64) -> f64 + Send + Sync;

/// Named scalar safety function `h(x, t)`; safe where `h >= 0`.
#[derive(Clone)]
pub struct Constraint {
    name: String,
    func: Arc<ConstraintFn>,
}

impl Constraint {
    pub fn new(name: impl Into<String>, f: impl Fn(&State, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            func: Arc::new(f),
        }
    }

    /// `h = hi - x[i]`
    pub fn upper(name: impl Into<String>, i: usize, hi: f64) -> Self {
        Self::new(name, move |x, _| hi - x[i])
    }

    /// `h = x[i] - lo`
    pub fn lower(name: impl Into<String>, i: usize, lo: f64) -> Self {
        Self::new(name, move |x, _| x[i] - lo)
    }

    /// `h = limit - |x[i]|`
    pub fn abs(name: impl Into<String>, i: usize, limit: f64) -> Self {
        Self::new(name, move |x, _| limit - x[i].abs())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: &State, t: f64) -> f64 {
        (self.func)(x, t)
    }
}

impl fmt::Debug for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Constraint").field("name", &self.name).finish_non_exhaustive()
    }
}

/// A time window `[start, end)` and the constraint names active inside it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleWindow {
    pub start: f64,
    pub end: f64,
    pub active: Vec<String>,
}

impl ScheduleWindow {
    pub fn new(start: f64, end: f64, active: &[&str]) -> Self {
        Self {
            start,
            end,
            active: active.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
struct ResolvedWindow {
    start: f64,
    end: f64,
    active: Vec<usize>,
}

/// Minimum over active constraints, with the index of the minimizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub constraint: Option<usize>,
}

impl Margin {
    pub fn is_safe(&self) -> bool {
        self.value >= 0.0
    }
}

/// `C(t) = { x : h_i(x, t) >= 0 for all active i }`.
///
/// Without a schedule every constraint is always active. With a schedule, the
/// windows are consulted by time: the first window also applies before its start
/// and the last window after its end.
#[derive(Clone, Debug, Default)]
pub struct SafetySpec {
    constraints: Vec<Constraint>,
    schedule: Option<Vec<ResolvedWindow>>,
    raw_schedule: Option<Vec<ScheduleWindow>>,
}

impl SafetySpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    pub fn with_schedule(mut self, windows: Vec<ScheduleWindow>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::config("safety schedule must contain at least one window"));
        }
        let mut resolved = Vec::with_capacity(windows.len());
        for (k, w) in windows.iter().enumerate() {
            if !(w.start.is_finite() && w.end.is_finite() && w.end > w.start) {
                return Err(Error::config(format!(
                    "schedule window {k} has invalid bounds [{}, {})",
                    w.start, w.end
                )));
            }
            if k > 0 && windows[k - 1].end != w.start {
                return Err(Error::config(format!(
                    "schedule window {k} must start where window {} ends",
                    k - 1
                )));
            }
            let active = w
                .active
                .iter()
                .map(|name| {
                    self.index_of(name)
                        .ok_or_else(|| Error::config(format!("schedule names unknown constraint `{name}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            resolved.push(ResolvedWindow {
                start: w.start,
                end: w.end,
                active,
            });
        }
        self.schedule = Some(resolved);
        self.raw_schedule = Some(windows);
        Ok(self)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn schedule(&self) -> Option<&[ScheduleWindow]> {
        self.raw_schedule.as_deref()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.constraints.iter().position(|c| c.name == name)
    }

    pub fn constraint_name(&self, i: usize) -> &str {
        &self.constraints[i].name
    }

    /// Time span covered by the schedule, if any.
    pub fn schedule_span(&self) -> Option<(f64, f64)> {
        self.schedule
            .as_ref()
            .map(|w| (w[0].start, w[w.len() - 1].end))
    }

    fn window_at(&self, t: f64) -> Option<&ResolvedWindow> {
        let windows = self.schedule.as_ref()?;
        let k = windows.partition_point(|w| w.end <= t);
        Some(&windows[k.min(windows.len() - 1)])
    }

    /// Indices of the constraints active at `t`.
    pub fn active(&self, t: f64) -> Vec<usize> {
        match self.window_at(t) {
            Some(w) => w.active.clone(),
            None => (0..self.constraints.len()).collect(),
        }
    }

    /// +inf when nothing is active.
    pub fn margin(&self, x: &State, t: f64) -> Margin {
        let mut best = Margin {
            value: f64::INFINITY,
            constraint: None,
        };
        let mut visit = |i: usize| {
            let v = self.constraints[i].eval(x, t);
            // NaN is treated as a violation of that constraint.
            let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
            if v < best.value || best.constraint.is_none() && v == best.value {
                best = Margin {
                    value: v,
                    constraint: Some(i),
                };
            }
        };
        match self.window_at(t) {
            Some(w) => w.active.iter().for_each(|&i| visit(i)),
            None => (0..self.constraints.len()).for_each(visit),
        }
        best
    }

    pub fn contains(&self, x: &State, t: f64) -> bool {
        self.margin(x, t).is_safe()
    }
}

/// Weighted norm ball `|| x - x*(t) ||_w < r` about the owning primitive's setpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplicitRoA {
    pub radius: f64,
    pub weights: Vec<f64>,
}

impl ExplicitRoA {
    pub fn new(radius: f64, weights: Vec<f64>) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::config(format!("RoA radius must be positive, got {radius}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("RoA weights must be finite and positive"));
        }
        Ok(Self { radius, weights })
    }

    pub fn unit_weights(radius: f64, dim: usize) -> Result<Self> {
        Self::new(radius, vec![1.0; dim])
    }

    pub fn distance(&self, x: &State, center: &State) -> f64 {
        weighted_norm(&(x - center), &self.weights)
    }

    pub fn contains(&self, x: &State, center: &State) -> bool {
        self.distance(x, center) < self.radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn velocity_box_margin() {
        let s = SafetySpec::new().with(Constraint::abs("v", 1, 1.0));
        let m = s.margin(&dvector![0.0, 2.0], 0.0);
        assert_eq!(m.value, -1.0);
        assert_eq!(m.constraint, Some(0));
    }

    #[test]
    fn schedule_selects_window() {
        let s = SafetySpec::new()
            .with(Constraint::upper("low", 0, 1.0))
            .with(Constraint::lower("high", 0, -1.0))
            .with_schedule(vec![
                ScheduleWindow::new(0.0, 1.0, &["low"]),
                ScheduleWindow::new(1.0, 2.0, &["high"]),
            ])
            .unwrap();
        let x = dvector![5.0];
        assert!(s.margin(&x, 0.5).value < 0.0);
        assert!(s.margin(&x, 1.5).value >= 0.0);
        assert_eq!(s.active(1.0), vec![1]);
        assert_eq!(s.active(2.0), vec![1]);
        assert_eq!(s.active(-1.0), vec![0]);
    }

    #[test]
    fn schedule_rejects_gaps_and_unknown() {
        let base = SafetySpec::new().with(Constraint::upper("a", 0, 1.0));
        assert!(base
            .clone()
            .with_schedule(vec![
                ScheduleWindow::new(0.0, 1.0, &["a"]),
                ScheduleWindow::new(1.5, 2.0, &["a"]),
            ])
            .is_err());
        assert!(base
            .with_schedule(vec![ScheduleWindow::new(0.0, 1.0, &["b"])])
            .is_err());
    }

    #[test]
    fn empty_active_set_is_unconstrained() {
        let s = SafetySpec::new()
            .with(Constraint::upper("a", 0, 1.0))
            .with_schedule(vec![ScheduleWindow::new(0.0, 1.0, &[])])
            .unwrap();
        assert_eq!(s.margin(&dvector![10.0], 0.5).value, f64::INFINITY);
    }

    #[test]
    fn nan_constraint_is_unsafe() {
        let s = SafetySpec::new().with(Constraint::new("nan", |_, _| f64::NAN));
        assert!(!s.contains(&dvector![0.0], 0.0));
    }

    #[test]
    fn roa_boundary_is_open() {
        let e = ExplicitRoA::new(1.0, vec![1.0, 2.0]).unwrap();
        let c = dvector![0.0, 0.0];
        assert!(e.contains(&c, &c));
        assert!(!e.contains(&dvector![1.0, 0.0], &c));
        assert!(!e.contains(&dvector![0.0, 0.5], &c));
        assert!(e.contains(&dvector![0.0, 0.25], &c));
        assert!(ExplicitRoA::new(0.0, vec![1.0]).is_err());
        assert!(ExplicitRoA::new(1.0, vec![0.0]).is_err());
    }
}
