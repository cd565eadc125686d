use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_flow, EventKind, IntegratorConfig, Monitor, State};
use crate::error::{Error, Result};
use crate::graph::{EdgeClass, MotionPrimitiveGraph, TimeGrid};
use crate::oracle::{safety_oracle, OracleConfig};
use crate::primitives::{MotionPrimitive, PrimitiveClass, SetpointKind};

use super::LookupTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedGoal {
    pub time: f64,
    pub goal: String,
}

impl TimedGoal {
    pub fn new(time: f64, goal: impl Into<String>) -> Self {
        Self {
            time,
            goal: goal.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecConfig {
    pub integrator: IntegratorConfig,
    /// A switch waits until the state is within this fraction of the current
    /// primitive's RoA radius of its setpoint.
    pub settle_fraction: f64,
    /// Re-check interval while settling in a fixed primitive.
    pub settle_step: f64,
    /// Longest wait for one hop: this many periods (periodic) or seconds (fixed).
    pub max_wait_periods: f64,
    /// Hold time after the last goal is reached.
    pub tail: f64,
    /// Margin below which the run counts as a safety violation.
    pub violation_slack: f64,
    /// Simulation budget beyond the last goal time.
    pub time_budget: f64,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            settle_fraction: 0.05,
            settle_step: 0.05,
            max_wait_periods: 10.0,
            tail: 2.0,
            violation_slack: 1e-6,
            time_budget: 120.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    CompletedSafe,
    SafetyViolated { t: f64, constraint: String, primitive: String },
    TrackingFailed { t: f64, reason: String },
}

impl Outcome {
    pub fn is_safe(&self) -> bool {
        matches!(self, Outcome::CompletedSafe)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Outcome::CompletedSafe => "completed-safe",
            Outcome::SafetyViolated { .. } => "safety-violated",
            Outcome::TrackingFailed { .. } => "tracking-failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub primitive: String,
    pub t_start: f64,
    pub t_end: f64,
    /// Primitive-local time at activation.
    pub local_start: f64,
    #[serde(with = "crate::canonical::nonfinite")]
    pub min_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchRecord {
    pub t: f64,
    pub from: String,
    pub to: String,
    pub ta: f64,
    pub tb: f64,
    /// Edge class used, when the switch followed a graph edge.
    pub class: Option<EdgeClass>,
    /// Transient completion rather than a commanded hop.
    pub automatic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalRecord {
    pub commanded: f64,
    pub goal: String,
    pub reached: Option<f64>,
}

/// Samples of one continuous simulated run, tagged with the active segment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExecutionLog {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub segment_of: Vec<usize>,
    pub margins: Vec<f64>,
    pub segments: Vec<SegmentRecord>,
    pub switches: Vec<SwitchRecord>,
    pub goals: Vec<GoalRecord>,
    pub outcome: Outcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSummary {
    pub outcome: Outcome,
    #[serde(with = "crate::canonical::nonfinite")]
    pub min_margin: f64,
    pub executed: Vec<String>,
    pub segments: Vec<SegmentRecord>,
    pub switches: Vec<SwitchRecord>,
    pub goals: Vec<GoalRecord>,
    pub samples: usize,
    pub final_time: f64,
}

impl ExecutionLog {
    /// Lowest margin seen, including the instant of each switch.
    pub fn min_margin(&self) -> f64 {
        let samples = self.margins.iter().copied().fold(f64::INFINITY, f64::min);
        self.segments.iter().map(|s| s.min_margin).fold(samples, f64::min)
    }

    /// Primitive names in execution order.
    pub fn executed(&self) -> Vec<&str> {
        self.segments.iter().map(|s| s.primitive.as_str()).collect()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn summary(&self) -> ExecutionSummary {
        ExecutionSummary {
            outcome: self.outcome.clone(),
            min_margin: self.min_margin(),
            executed: self.executed().into_iter().map(str::to_string).collect(),
            segments: self.segments.clone(),
            switches: self.switches.clone(),
            goals: self.goals.clone(),
            samples: self.times.len(),
            final_time: self.final_time(),
        }
    }

    /// `t,x0,...,active_primitive,min_margin`, one row per sample.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, |x| x.len());
        let mut out = String::from("t");
        for i in 0..dim {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",active_primitive,min_margin\n");
        for k in 0..self.times.len() {
            let _ = write!(out, "{:.17e}", self.times[k]);
            for v in self.states[k].iter() {
                let _ = write!(out, ",{v:.17e}");
            }
            let m = self.margins[k];
            let m = if m.is_finite() { format!("{m:.17e}") } else { format!("{m}") };
            let _ = writeln!(out, ",{},{m}", self.segments[self.segment_of[k]].primitive);
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Planned,
    Naive,
}

struct Runner<'a> {
    lib: BTreeMap<&'a str, &'a MotionPrimitive>,
    graph: Option<&'a MotionPrimitiveGraph>,
    cfg: &'a ExecConfig,
    mode: Mode,
    p: &'a MotionPrimitive,
    tau: f64,
    t: f64,
    x: State,
    log: ExecutionLog,
    done: bool,
}

impl<'a> Runner<'a> {
    fn new(
        library: &'a [MotionPrimitive],
        graph: Option<&'a MotionPrimitiveGraph>,
        goals: &[TimedGoal],
        start: &str,
        cfg: &'a ExecConfig,
        mode: Mode,
    ) -> Result<Self> {
        let lib: BTreeMap<&str, &MotionPrimitive> = library.iter().map(|p| (p.name(), p)).collect();
        let p = *lib.get(start).ok_or_else(|| Error::UnknownPrimitive(start.to_string()))?;
        for g in goals {
            if !lib.contains_key(g.goal.as_str()) {
                return Err(Error::UnknownPrimitive(g.goal.clone()));
            }
            if !g.time.is_finite() || g.time < 0.0 {
                return Err(Error::config(format!("goal time {} must be finite and non-negative", g.time)));
            }
        }
        if goals.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::config("goal times must be non-decreasing"));
        }
        let tau = p.setpoint().domain_start();
        let x = p.setpoint_at(tau)?;
        let margin = p.safety().margin(&x, tau).value;
        let log = ExecutionLog {
            times: vec![0.0],
            states: vec![x.clone()],
            segment_of: vec![0],
            margins: vec![margin],
            segments: vec![SegmentRecord {
                primitive: p.name().to_string(),
                t_start: 0.0,
                t_end: 0.0,
                local_start: tau,
                min_margin: margin,
            }],
            switches: Vec::new(),
            goals: goals
                .iter()
                .map(|g| GoalRecord {
                    commanded: g.time,
                    goal: g.goal.clone(),
                    reached: None,
                })
                .collect(),
            outcome: Outcome::CompletedSafe,
        };
        Ok(Self {
            lib,
            graph,
            cfg,
            mode,
            p,
            tau,
            t: 0.0,
            x,
            log,
            done: false,
        })
    }

    fn fail(&mut self, reason: impl Into<String>) {
        self.log.outcome = Outcome::TrackingFailed {
            t: self.t,
            reason: reason.into(),
        };
        self.done = true;
    }

    /// Simulates the active primitive for `duration` seconds.
    fn run(&mut self, duration: f64) {
        if self.done || duration <= 1e-12 {
            return;
        }
        let p = self.p;
        let slack = self.cfg.violation_slack;
        let safety = p.safety();
        let monitors = [Monitor::new(EventKind::LeftSafeSet, move |x, t| safety.margin(x, t).value + slack)];
        let tr = match simulate_flow(p.closed_loop(), &self.x, self.tau, duration, &monitors, &self.cfg.integrator) {
            Ok(tr) => tr,
            Err(e) => {
                self.fail(format!("integration failed in `{}`: {e}", p.name()));
                return;
            }
        };
        let seg = self.log.segments.len() - 1;
        for (dt, x) in tr.iter().skip(1) {
            let m = safety.margin(x, self.tau + dt).value;
            self.log.times.push(self.t + dt);
            self.log.states.push(x.clone());
            self.log.segment_of.push(seg);
            self.log.margins.push(m);
            let s = &mut self.log.segments[seg];
            s.min_margin = s.min_margin.min(m);
        }
        let elapsed = tr.final_time();
        let event = tr.terminal_event().cloned();
        self.t += elapsed;
        self.tau += elapsed;
        self.x = tr.final_state().clone();
        self.log.segments[seg].t_end = self.t;
        match event.map(|e| e.kind) {
            Some(EventKind::LeftSafeSet) => {
                let m = safety.margin(&self.x, self.tau);
                self.log.outcome = Outcome::SafetyViolated {
                    t: self.t,
                    constraint: m.constraint.map_or_else(String::new, |i| safety.constraint_name(i).to_string()),
                    primitive: p.name().to_string(),
                };
                self.done = true;
            }
            Some(EventKind::StateLeftBounds) => {
                self.log.outcome = Outcome::SafetyViolated {
                    t: self.t,
                    constraint: "state-bounds".into(),
                    primitive: p.name().to_string(),
                };
                self.done = true;
            }
            _ => {}
        }
    }

    fn switch(&mut self, q: &'a MotionPrimitive, ta: f64, tb: f64, class: Option<EdgeClass>, automatic: bool) {
        self.log.switches.push(SwitchRecord {
            t: self.t,
            from: self.p.name().to_string(),
            to: q.name().to_string(),
            ta,
            tb,
            class,
            automatic,
        });
        let margin = q.safety().margin(&self.x, tb).value;
        self.log.segments.push(SegmentRecord {
            primitive: q.name().to_string(),
            t_start: self.t,
            t_end: self.t,
            local_start: tb,
            min_margin: margin,
        });
        self.p = q;
        self.tau = tb;
        if margin + self.cfg.violation_slack < 0.0 {
            let m = q.safety().margin(&self.x, tb);
            self.log.outcome = Outcome::SafetyViolated {
                t: self.t,
                constraint: m.constraint.map_or_else(String::new, |i| q.safety().constraint_name(i).to_string()),
                primitive: q.name().to_string(),
            };
            self.done = true;
        }
    }

    fn oracle_cfg(&self, horizon: f64) -> OracleConfig {
        OracleConfig {
            integrator: self.cfg.integrator,
            ..OracleConfig::new(horizon)
        }
    }

    /// Accepted candidate entry time with the largest margin, from the current state.
    fn best_entry(&self, q: &MotionPrimitive, candidates: &[f64], horizon: f64) -> Option<f64> {
        let ocfg = self.oracle_cfg(horizon);
        let mut best: Option<(f64, f64)> = None;
        for &tb in candidates {
            if let Ok(v) = safety_oracle(q, &self.x, tb, &ocfg) {
                if v.accepted && best.is_none_or(|(_, m)| v.min_margin > m) {
                    best = Some((tb, v.min_margin));
                }
            }
        }
        best.map(|(tb, _)| tb)
    }

    /// Transient completion: hand over to the declared next primitive.
    fn auto_chain(&mut self) {
        let p = self.p;
        let Some(next) = p.next_primitive() else { return };
        let Some(&q) = self.lib.get(next) else {
            self.fail(format!("`{}` chains to unknown primitive `{next}`", p.name()));
            return;
        };
        let ta = self.tau;
        let tb = match (self.mode, self.graph) {
            (Mode::Planned, Some(g)) => {
                let edge = g.edge(p.name(), q.name());
                let mut candidates = edge.map(|e| e.entry_times_for(e.feasible[0].0)).unwrap_or_default();
                if candidates.is_empty() {
                    candidates = TimeGrid::entry(q, &g.meta.grid_policy).points;
                }
                let horizon = edge.map_or(g.meta.oracle.horizon, |e| e.horizon);
                self.best_entry(q, &candidates, horizon).unwrap_or(candidates[0])
            }
            _ => q.setpoint().domain_start(),
        };
        let class = self.graph.and_then(|g| g.edge(p.name(), q.name())).map(|e| e.class);
        self.switch(q, ta, tb, class, true);
    }

    /// Runs until global time `t_end`, chaining through transients.
    fn hold_until(&mut self, t_end: f64) {
        while !self.done && self.t < t_end - 1e-12 {
            if let SetpointKind::Transient { tf, .. } = self.p.setpoint().kind() {
                let left = tf - self.tau;
                if left <= 1e-12 {
                    self.auto_chain();
                    continue;
                }
                self.run(left.min(t_end - self.t));
            } else {
                self.run(t_end - self.t);
            }
        }
    }

    fn finish_transient(&mut self) {
        if let SetpointKind::Transient { tf, .. } = self.p.setpoint().kind() {
            self.run(tf - self.tau);
            if !self.done {
                self.auto_chain();
            }
        }
    }

    fn settled(&self) -> bool {
        let d = self.p.roa_distance_clamped(&self.x, self.tau);
        d < self.cfg.settle_fraction * self.p.radius()
    }

    fn mark_reached(&mut self, idx: usize) {
        if self.log.goals[idx].reached.is_none() {
            self.log.goals[idx].reached = Some(self.t);
        }
    }
}

/// Next local time `>= tau` whose phase is one of `exit_times`, skipping `skip`.
fn next_exit_time(tau: f64, period: f64, exit_times: &[f64], skip: Option<f64>) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &ta in exit_times {
        let mut n = ((tau - ta) / period - 1e-9).ceil().max(0.0);
        let mut cand = n * period + ta;
        if skip.is_some_and(|s| (cand - s).abs() < 1e-9) {
            n += 1.0;
            cand = n * period + ta;
        }
        if best.is_none_or(|(c, _)| cand < c) {
            best = Some((cand, ta));
        }
    }
    best
}

/// Follows lookup-table paths toward each commanded goal, switching only at
/// certified exit times from a settled state.
///
/// Goals are adopted at primitive boundaries: a goal commanded mid-path replaces the
/// current one at the next decision point. Transients always run to completion and
/// hand over to their next primitive. A transient goal counts as reached when it is
/// entered.
pub fn execute_sequence(
    library: &[MotionPrimitive],
    graph: &MotionPrimitiveGraph,
    table: &LookupTable,
    goals: &[TimedGoal],
    start: &str,
    cfg: &ExecConfig,
) -> Result<ExecutionLog> {
    let mut r = Runner::new(library, Some(graph), goals, start, cfg, Mode::Planned)?;
    let deadline = goals.last().map_or(0.0, |g| g.time) + cfg.time_budget;
    let mut hop_started: Option<(String, String, f64)> = None;
    let mut failed_at: Option<f64> = None;

    while !r.done {
        if r.t > deadline {
            r.fail("time budget exhausted");
            break;
        }
        let current = goals.iter().rposition(|g| g.time <= r.t + 1e-9);
        if let Some(ci) = current {
            if goals[ci].goal == r.p.name() {
                r.mark_reached(ci);
            }
        }
        if r.p.class() == PrimitiveClass::Transient {
            r.finish_transient();
            continue;
        }
        let Some(ci) = current else {
            let Some(first) = goals.first() else {
                let end = r.t + cfg.tail;
                r.hold_until(end);
                break;
            };
            r.hold_until(first.time);
            continue;
        };
        if r.log.goals[ci].reached.is_some() {
            match goals.get(ci + 1) {
                Some(next) => r.hold_until(next.time),
                None => {
                    let end = r.t + cfg.tail;
                    r.hold_until(end);
                    break;
                }
            }
            continue;
        }

        let goal = goals[ci].goal.as_str();
        let Some(path) = table.get(r.p.name(), goal) else {
            r.fail(format!("no path from `{}` to `{goal}`", r.p.name()));
            break;
        };
        let q_name = path.nodes[1].clone();
        let q = r.lib[q_name.as_str()];
        let edge = graph
            .edge(r.p.name(), &q_name)
            .ok_or_else(|| Error::config(format!("lookup table hop {} -> {q_name} is not an edge", r.p.name())))?;

        let key = (r.p.name().to_string(), q_name.clone());
        let wait_start = match &hop_started {
            Some((a, b, t0)) if *a == key.0 && *b == key.1 => *t0,
            _ => {
                hop_started = Some((key.0.clone(), key.1.clone(), r.t));
                failed_at = None;
                r.t
            }
        };
        let (max_wait, period) = match r.p.setpoint().period() {
            Some(tp) => (cfg.max_wait_periods * tp, Some(tp)),
            None => (cfg.max_wait_periods, None),
        };
        if r.t - wait_start > max_wait {
            r.fail(format!("no certified switch {} -> {q_name} within {max_wait} s", r.p.name()));
            break;
        }

        let exit_times = edge.feasible_exit_times();
        let (tau_switch, ta) = match period {
            Some(tp) => next_exit_time(r.tau, tp, &exit_times, failed_at).expect("edges have feasible cells"),
            None => (r.tau, exit_times[0]),
        };
        if tau_switch > r.tau + 1e-12 {
            r.run(tau_switch - r.tau);
            if r.done {
                break;
            }
            // Re-enter the loop so newer goals are seen before switching.
            if goals.iter().rposition(|g| g.time <= r.t + 1e-9) != current {
                continue;
            }
        }
        if !r.settled() {
            match period {
                Some(_) => failed_at = Some(r.tau),
                None => r.run(cfg.settle_step),
            }
            continue;
        }
        let candidates = edge.entry_times_for(ta);
        match r.best_entry(q, &candidates, edge.horizon) {
            Some(tb) => {
                r.switch(q, ta, tb, Some(edge.class), false);
                hop_started = None;
                failed_at = None;
            }
            None => match period {
                Some(_) => failed_at = Some(r.tau),
                None => r.run(cfg.settle_step),
            },
        }
    }
    Ok(r.log)
}

/// Baseline: at each goal time switch straight to the goal primitive at its
/// local start time, with no path or timing logic.
pub fn naive_execute(
    library: &[MotionPrimitive],
    goals: &[TimedGoal],
    start: &str,
    cfg: &ExecConfig,
) -> Result<ExecutionLog> {
    let mut r = Runner::new(library, None, goals, start, cfg, Mode::Naive)?;
    for (i, g) in goals.iter().enumerate() {
        r.hold_until(g.time);
        if r.done {
            break;
        }
        if g.goal != r.p.name() {
            let q = r.lib[g.goal.as_str()];
            let ta = r.tau;
            r.switch(q, ta, q.setpoint().domain_start(), None, false);
        }
        if !r.done {
            r.mark_reached(i);
        }
    }
    if !r.done {
        let end = r.t + cfg.tail;
        r.hold_until(end);
    }
    Ok(r.log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_time_search() {
        let ex = [0.25, 0.75];
        assert_eq!(next_exit_time(0.0, 1.0, &ex, None), Some((0.25, 0.25)));
        assert_eq!(next_exit_time(0.3, 1.0, &ex, None), Some((0.75, 0.75)));
        assert_eq!(next_exit_time(0.8, 1.0, &ex, None), Some((1.25, 0.25)));
        assert_eq!(next_exit_time(0.75, 1.0, &ex, None), Some((0.75, 0.75)));
        assert_eq!(next_exit_time(0.75, 1.0, &ex, Some(0.75)), Some((1.25, 0.25)));
        assert_eq!(next_exit_time(3.0, 1.0, &[0.0], None), Some((3.0, 0.0)));
    }
}
