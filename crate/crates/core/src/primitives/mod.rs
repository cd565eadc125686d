//! Motion primitives: setpoint, feedback law, safe set and explicit safe RoA.

mod profile;
mod safety;
mod setpoint;

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use profile::{cubic_profile, pd_law, split_output, CubicProfile, DesiredFn, FeedforwardFn, OutputFn, PdLaw};
pub use safety::{Constraint, ConstraintFn, ExplicitRoA, Margin, SafetySpec, ScheduleWindow};
pub use setpoint::{FlowTable, PrimitiveClass, Setpoint, SetpointFn, SetpointKind, DOMAIN_SLACK};

use crate::dynamics::{simulate_flow, ClosedLoopSystem, ControlLaw, IntegratorConfig, State, SystemModel};
use crate::error::{Error, Result};

/// Checks run when a primitive is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Max weighted distance between the flow from `x*(t0)` and `x*(t + t0)`.
    pub consistency_tol: f64,
    pub periodicity_tol: f64,
    /// Probe horizon for fixed setpoints.
    pub fixed_probe: f64,
    /// Sample times per period or transient domain.
    pub time_samples: usize,
    /// Random RoA-boundary directions in addition to the coordinate axes.
    pub boundary_directions: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    /// Skips the flow-consistency probe (used when the caller has already run it).
    pub check_consistency: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            consistency_tol: 1e-4,
            periodicity_tol: 1e-9,
            fixed_probe: 5.0,
            time_samples: 64,
            boundary_directions: 16,
            seed: 7,
            integrator: IntegratorConfig::default(),
            check_consistency: true,
        }
    }
}

/// Numbers recorded by the construction checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub consistency_residual: f64,
    pub periodicity_residual: f64,
    pub min_setpoint_margin: f64,
    pub min_boundary_margin: f64,
}

/// `P = (x*, k, Ω, C, S, E)`. Ω and S are never materialized; E is a weighted
/// ball about the setpoint.
#[derive(Clone)]
pub struct MotionPrimitive {
    name: String,
    family: String,
    argument: Option<String>,
    setpoint: Setpoint,
    safety: SafetySpec,
    roa: ExplicitRoA,
    next_primitive: Option<String>,
    closed_loop: ClosedLoopSystem,
    report: ValidationReport,
}

impl fmt::Debug for MotionPrimitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MotionPrimitive")
            .field("name", &self.name)
            .field("argument", &self.argument)
            .field("setpoint", &self.setpoint)
            .field("roa", &self.roa)
            .field("next_primitive", &self.next_primitive)
            .finish_non_exhaustive()
    }
}

impl MotionPrimitive {
    pub fn builder(name: impl Into<String>, model: Arc<SystemModel>) -> PrimitiveBuilder {
        PrimitiveBuilder {
            name: name.into(),
            family: None,
            argument: None,
            model,
            setpoint: None,
            law: None,
            safety: SafetySpec::new(),
            roa: None,
            next_primitive: None,
            options: ValidationOptions::default(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Behaviour family; argument-quantized variants share it.
    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn argument(&self) -> Option<&str> {
        self.argument.as_deref()
    }

    pub fn class(&self) -> PrimitiveClass {
        self.setpoint.class()
    }

    pub fn model(&self) -> &Arc<SystemModel> {
        self.closed_loop.model()
    }

    pub fn setpoint(&self) -> &Setpoint {
        &self.setpoint
    }

    pub fn law(&self) -> &ControlLaw {
        self.closed_loop.law()
    }

    pub fn closed_loop(&self) -> &ClosedLoopSystem {
        &self.closed_loop
    }

    pub fn safety(&self) -> &SafetySpec {
        &self.safety
    }

    pub fn explicit_roa(&self) -> &ExplicitRoA {
        &self.roa
    }

    pub fn radius(&self) -> f64 {
        self.roa.radius
    }

    pub fn next_primitive(&self) -> Option<&str> {
        self.next_primitive.as_deref()
    }

    pub fn validation_report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn setpoint_at(&self, t: f64) -> Result<State> {
        self.setpoint.value(t)
    }

    pub fn margin(&self, x: &State, t: f64) -> Result<Margin> {
        self.setpoint.check_time(t)?;
        Ok(self.safety.margin(x, t))
    }

    /// Weighted distance to `x*(t)`.
    pub fn roa_distance(&self, x: &State, t: f64) -> Result<f64> {
        Ok(self.roa.distance(x, &self.setpoint.value(t)?))
    }

    /// Distance with `t` clamped into the setpoint domain.
    pub fn roa_distance_clamped(&self, x: &State, t: f64) -> f64 {
        self.roa.distance(x, &self.setpoint.value_clamped(t))
    }

    /// Same primitive with a different explicit-RoA radius; the E ⊆ C check is rerun.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        let roa = ExplicitRoA::new(radius, self.roa.weights.clone())?;
        let mut p = self.clone();
        p.roa = roa;
        let opts = ValidationOptions {
            check_consistency: false,
            ..ValidationOptions::default()
        };
        let report = p.validate(&opts)?;
        p.report = ValidationReport {
            consistency_residual: self.report.consistency_residual,
            ..report
        };
        Ok(p)
    }

    /// Max weighted residual `||φ_t(x*(t0)) - x*(t + t0)||` over the accepted
    /// integrator steps of a probe from `t0`.
    pub fn consistency_residual(&self, t0: f64, horizon: f64, cfg: &IntegratorConfig) -> Result<f64> {
        let x0 = self.setpoint.value(t0)?;
        let tr = simulate_flow(&self.closed_loop, &x0, t0, horizon, &[], cfg)?;
        let mut worst = 0.0f64;
        for (t, x) in tr.iter() {
            let d = self.roa.distance(x, &self.setpoint.value_clamped(t0 + t));
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Probe windows `(t0, horizon)` used by the consistency check.
    pub fn consistency_probes(&self, fixed_probe: f64) -> Vec<(f64, f64)> {
        match self.setpoint.kind() {
            SetpointKind::Fixed => vec![(0.0, fixed_probe)],
            SetpointKind::Periodic { period } => vec![(0.0, period)],
            SetpointKind::Transient { t0, tf } => vec![(t0, tf - t0)],
        }
    }

    fn check_times(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let mut ts: Vec<f64> = match self.setpoint.kind() {
            SetpointKind::Fixed => vec![0.0],
            SetpointKind::Periodic { period } => (0..n).map(|k| period * k as f64 / n as f64).collect(),
            SetpointKind::Transient { t0, tf } => {
                (0..n).map(|k| t0 + (tf - t0) * k as f64 / (n - 1) as f64).collect()
            }
        };
        // Sample both sides of every schedule switch inside the domain.
        if let Some(windows) = self.safety.schedule() {
            let start = self.setpoint.domain_start();
            let end = self.setpoint.domain_end().unwrap_or(f64::INFINITY);
            for w in windows.iter().skip(1) {
                if w.start > start && w.start < end {
                    ts.push(w.start);
                    ts.push(w.start - 1e-9);
                }
            }
            ts.sort_by(f64::total_cmp);
        }
        ts
    }

    fn validate(&self, opts: &ValidationOptions) -> Result<ValidationReport> {
        let invalid = |reason: String| Error::invalid_primitive(&self.name, reason);
        let n = self.model().state_dim();
        let mut report = ValidationReport::default();

        match (self.class(), &self.next_primitive) {
            (PrimitiveClass::Transient, None) => return Err(invalid("transient primitives must name a next primitive".into())),
            (PrimitiveClass::Fixed | PrimitiveClass::Periodic, Some(_)) => {
                return Err(invalid("only transient primitives may name a next primitive".into()))
            }
            _ => {}
        }
        if self.roa.weights.len() != n {
            return Err(invalid(format!("RoA has {} weights for a {n}-dimensional state", self.roa.weights.len())));
        }
        let x_start = self.setpoint.value(self.setpoint.domain_start())?;
        if x_start.len() != n {
            return Err(invalid(format!("setpoint has dimension {}, state has {n}", x_start.len())));
        }
        if let (Some((s, e)), SetpointKind::Transient { t0, tf }) = (self.safety.schedule_span(), self.setpoint.kind()) {
            if s > t0 || e < tf {
                return Err(invalid(format!("safety schedule [{s}, {e}] does not cover setpoint domain [{t0}, {tf}]")));
            }
        }
        if let SetpointKind::Periodic { period } = self.setpoint.kind() {
            let m = opts.time_samples.max(2);
            for k in 0..m {
                let t = period * k as f64 / m as f64;
                let d = (self.setpoint.value_clamped(t) - self.setpoint.value_clamped(t + period)).norm();
                report.periodicity_residual = report.periodicity_residual.max(d);
            }
            if report.periodicity_residual > opts.periodicity_tol {
                return Err(invalid(format!(
                    "setpoint is not {period}-periodic (residual {:e})",
                    report.periodicity_residual
                )));
            }
        }

        let directions = boundary_directions(n, opts.boundary_directions, opts.seed);
        report.min_setpoint_margin = f64::INFINITY;
        report.min_boundary_margin = f64::INFINITY;
        for t in self.check_times(opts.time_samples) {
            let xs = self.setpoint.value_clamped(t);
            let m = self.safety.margin(&xs, t);
            report.min_setpoint_margin = report.min_setpoint_margin.min(m.value);
            if !m.is_safe() {
                return Err(invalid(format!(
                    "setpoint leaves the safe set at t = {t} (constraint `{}`, margin {:e})",
                    m.constraint.map_or("?", |i| self.safety.constraint_name(i)),
                    m.value
                )));
            }
            for d in &directions {
                let x = &xs + d.component_div(&State::from_column_slice(&self.roa.weights)) * self.roa.radius;
                let m = self.safety.margin(&x, t);
                report.min_boundary_margin = report.min_boundary_margin.min(m.value);
                if !m.is_safe() {
                    return Err(invalid(format!(
                        "explicit RoA of radius {} is not inside the safe set at t = {t} (constraint `{}`)",
                        self.roa.radius,
                        m.constraint.map_or("?", |i| self.safety.constraint_name(i)),
                    )));
                }
            }
        }

        if opts.check_consistency {
            for (t0, horizon) in self.consistency_probes(opts.fixed_probe) {
                let r = self.consistency_residual(t0, horizon, &opts.integrator)?;
                report.consistency_residual = report.consistency_residual.max(r);
            }
            if report.consistency_residual > opts.consistency_tol {
                return Err(invalid(format!(
                    "setpoint is not a closed-loop solution (residual {:e} > {:e})",
                    report.consistency_residual, opts.consistency_tol
                )));
            }
        }
        Ok(report)
    }
}

/// Unit directions: the `2n` signed coordinate axes followed by `extra`
/// seeded Gaussian directions.
pub fn boundary_directions(n: usize, extra: usize, seed: u64) -> Vec<State> {
    let mut out = Vec::with_capacity(2 * n + extra);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = State::zeros(n);
            e[i] = s;
            out.push(e);
        }
    }
    out.extend(gaussian_directions(n, extra, seed));
    out
}

/// `count` unit vectors drawn uniformly on the sphere from a seeded ChaCha stream.
pub fn gaussian_directions(n: usize, count: usize, seed: u64) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = State::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
        let norm = v.norm();
        if norm > 1e-12 {
            out.push(v / norm);
        }
    }
    out
}

#[derive(Clone)]
pub struct PrimitiveBuilder {
    name: String,
    family: Option<String>,
    argument: Option<String>,
    model: Arc<SystemModel>,
    setpoint: Option<Setpoint>,
    law: Option<ControlLaw>,
    safety: SafetySpec,
    roa: Option<ExplicitRoA>,
    next_primitive: Option<String>,
    options: ValidationOptions,
}

impl PrimitiveBuilder {
    pub fn family(mut self, family: impl Into<String>) -> Self {
        self.family = Some(family.into());
        self
    }

    pub fn argument(mut self, argument: impl Into<String>) -> Self {
        self.argument = Some(argument.into());
        self
    }

    pub fn setpoint(mut self, setpoint: Setpoint) -> Self {
        self.setpoint = Some(setpoint);
        self
    }

    pub fn law(mut self, law: ControlLaw) -> Self {
        self.law = Some(law);
        self
    }

    pub fn safety(mut self, safety: SafetySpec) -> Self {
        self.safety = safety;
        self
    }

    pub fn roa(mut self, roa: ExplicitRoA) -> Self {
        self.roa = Some(roa);
        self
    }

    pub fn next_primitive(mut self, name: impl Into<String>) -> Self {
        self.next_primitive = Some(name.into());
        self
    }

    pub fn validation(mut self, options: ValidationOptions) -> Self {
        self.options = options;
        self
    }

    pub fn build(self) -> Result<MotionPrimitive> {
        let missing = |what: &str| Error::invalid_primitive(&self.name, format!("missing {what}"));
        let setpoint = self.setpoint.clone().ok_or_else(|| missing("setpoint"))?;
        let law = self.law.clone().ok_or_else(|| missing("control law"))?;
        let roa = self.roa.clone().ok_or_else(|| missing("explicit RoA"))?;
        if self.name.is_empty() {
            return Err(Error::invalid_primitive("", "name must not be empty"));
        }
        let closed_loop = ClosedLoopSystem::new(self.model, law)?;
        let mut p = MotionPrimitive {
            family: self.family.unwrap_or_else(|| self.name.clone()),
            name: self.name,
            argument: self.argument,
            setpoint,
            safety: self.safety,
            roa,
            next_primitive: self.next_primitive,
            closed_loop,
            report: ValidationReport::default(),
        };
        p.report = p.validate(&self.options)?;
        Ok(p)
    }
}

/// `min_i h_i(x, t)` over the constraints active at `t`.
pub fn safe_set_margin(p: &MotionPrimitive, x: &State, t: f64) -> Result<f64> {
    Ok(p.margin(x, t)?.value)
}

/// `||x - x*(t)||_w < r`
pub fn explicit_roa_contains(p: &MotionPrimitive, x: &State, t: f64) -> Result<bool> {
    Ok(p.roa_distance(x, t)? < p.radius())
}
