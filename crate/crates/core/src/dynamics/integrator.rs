use super::{ClosedLoopSystem, Event, EventKind, IntegratorConfig, State, Trajectory};
use crate::error::{Error, Result};

// Cash–Karp 5(4) tableau.
const C: [f64; 6] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 3.0 / 5.0, 1.0, 7.0 / 8.0];
const A: [[f64; 5]; 6] = [
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0],
    [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0, 0.0, 0.0],
    [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0, 0.0],
    [
        1631.0 / 55296.0,
        175.0 / 512.0,
        575.0 / 13824.0,
        44275.0 / 110592.0,
        253.0 / 4096.0,
    ],
];
const B5: [f64; 6] = [
    37.0 / 378.0,
    0.0,
    250.0 / 621.0,
    125.0 / 594.0,
    0.0,
    512.0 / 1771.0,
];
const B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

const SAFETY: f64 = 0.9;
const GROW_MAX: f64 = 5.0;
const SHRINK_MIN: f64 = 0.1;

type EventFn<'a> = Box<dyn Fn(&State, f64) -> f64 + Sync + 'a>;

/// Scalar event function. The event fires when the value becomes negative.
///
/// Monitors receive the state and the primitive-local time
/// (`activation_time + t`).
pub struct Monitor<'a> {
    pub kind: EventKind,
    func: EventFn<'a>,
}

impl<'a> Monitor<'a> {
    pub fn new(kind: EventKind, func: impl Fn(&State, f64) -> f64 + Sync + 'a) -> Self {
        Self {
            kind,
            func: Box::new(func),
        }
    }

    pub fn value(&self, x: &State, t_local: f64) -> f64 {
        (self.func)(x, t_local)
    }

    fn fired(&self, x: &State, t_local: f64) -> bool {
        // NaN counts as fired: a monitor that cannot be evaluated is not satisfied.
        !(self.value(x, t_local) >= 0.0)
    }
}

struct Stepper<'s> {
    sys: &'s ClosedLoopSystem,
    activation: f64,
}

impl Stepper<'_> {
    fn rhs(&self, x: &State, t: f64) -> Result<State> {
        self.sys.evaluate(x, self.activation + t)
    }

    /// One Cash–Karp step of size `h` from `(t, x)` with `k1 = f(t, x)`.
    /// Returns the fifth-order solution and the embedded error estimate, or
    /// `None` when a stage produced non-finite values.
    fn step(&self, t: f64, x: &State, k1: &State, h: f64) -> Result<Option<(State, State)>> {
        let mut k: Vec<State> = Vec::with_capacity(6);
        k.push(k1.clone());
        for s in 1..6 {
            let mut xs = x.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[s][j];
                if a != 0.0 {
                    xs.axpy(h * a, kj, 1.0);
                }
            }
            if xs.iter().any(|v| !v.is_finite()) {
                return Ok(None);
            }
            let ks = self.rhs(&xs, t + C[s] * h)?;
            if ks.iter().any(|v| !v.is_finite()) {
                return Ok(None);
            }
            k.push(ks);
        }
        let mut x_new = x.clone();
        let mut err = State::zeros(x.len());
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                x_new.axpy(h * B5[j], kj, 1.0);
            }
            let e = B5[j] - B4[j];
            if e != 0.0 {
                err.axpy(h * e, kj, 1.0);
            }
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        Ok(Some((x_new, err)))
    }
}

fn error_norm(x: &State, x_new: &State, err: &State, cfg: &IntegratorConfig) -> f64 {
    x.iter()
        .zip(x_new.iter())
        .zip(err.iter())
        .map(|((a, b), e)| e.abs() / (cfg.abs_tol + cfg.rel_tol * a.abs().max(b.abs())))
        .fold(0.0, f64::max)
}

/// Integrates the closed loop from `x0` with the law activated at primitive-local
/// time `t0`, until the first monitor fires or `horizon` elapses.
///
/// Monitors are checked at every accepted step; a sign change is localized by
/// bisection on the step length (re-stepping from the last accepted state) to
/// within `cfg.event_refine_tol`. When several monitors fire in the same step the
/// earliest localized crossing wins, ties going to the lower monitor index. If the
/// model declares state bounds, a `state-left-bounds` monitor is appended.
pub fn simulate_flow(
    sys: &ClosedLoopSystem,
    x0: &State,
    t0: f64,
    horizon: f64,
    monitors: &[Monitor<'_>],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = sys.model().state_dim();
    if x0.len() != n {
        return Err(Error::Dimension {
            context: "initial state",
            expected: n,
            actual: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelEvaluation {
            t: 0.0,
            message: "initial state is not finite".into(),
        });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::config(format!("horizon must be positive, got {horizon}")));
    }

    let bounds_monitor = sys.model().state_bounds().map(|b| {
        let b = b.clone();
        Monitor::new(EventKind::StateLeftBounds, move |x, _| b.margin(x))
    });
    let all: Vec<&Monitor<'_>> = monitors.iter().chain(bounds_monitor.iter()).collect();

    let stepper = Stepper {
        sys,
        activation: t0,
    };
    let mut traj = Trajectory::start(x0.clone(), t0);

    for (i, m) in all.iter().enumerate() {
        if m.fired(x0, t0) {
            traj.events.push(Event {
                t: 0.0,
                kind: m.kind,
                monitor: Some(i),
            });
            return Ok(traj);
        }
    }

    let mut t = 0.0_f64;
    let mut x = x0.clone();
    let mut k1 = derivative(&stepper, &x, t)?;
    let mut h = cfg.max_step.min(horizon);
    let end_slack = 1e-12 * horizon.max(1.0);

    while t < horizon {
        let remaining = horizon - t;
        let last = h >= remaining - end_slack;
        let h_try = if last { remaining } else { h };

        let trial = stepper.step(t, &x, &k1, h_try)?;
        let accepted = match &trial {
            Some((x_new, err)) => {
                let norm = error_norm(&x, x_new, err, cfg);
                if norm <= 1.0 {
                    Some(norm)
                } else {
                    let factor = (SAFETY * norm.powf(-0.25)).max(SHRINK_MIN);
                    h = h_try * factor;
                    None
                }
            }
            None => {
                h = h_try * 0.25;
                None
            }
        };

        let Some(norm) = accepted else {
            if h < cfg.min_step {
                return Err(Error::IntegrationFailure {
                    t,
                    step: h,
                    last_state: x.iter().copied().collect(),
                });
            }
            continue;
        };

        let (x_new, _) = trial.expect("accepted trial step");
        let t_new = if last { horizon } else { t + h_try };

        let mut first: Option<(f64, usize, State)> = None;
        for (i, m) in all.iter().enumerate() {
            if m.fired(&x_new, t0 + t_new) {
                let (tau, xe) = localize(&stepper, m, t, &x, &k1, h_try, cfg)?;
                let candidate = t + tau;
                if first.as_ref().is_none_or(|(best, _, _)| candidate < *best) {
                    first = Some((candidate, i, xe));
                }
            }
        }
        if let Some((te, i, xe)) = first {
            let te = if te >= t_new { t_new } else { te };
            traj.push(te, xe);
            traj.events.push(Event {
                t: te,
                kind: all[i].kind,
                monitor: Some(i),
            });
            return Ok(traj);
        }

        traj.push(t_new, x_new.clone());
        t = t_new;
        x = x_new;
        k1 = derivative(&stepper, &x, t)?;

        let grow = if norm == 0.0 {
            GROW_MAX
        } else {
            (SAFETY * norm.powf(-0.2)).min(GROW_MAX)
        };
        h = (h_try * grow).min(cfg.max_step);
    }

    traj.events.push(Event {
        t: horizon,
        kind: EventKind::HorizonReached,
        monitor: None,
    });
    Ok(traj)
}

fn derivative(stepper: &Stepper<'_>, x: &State, t: f64) -> Result<State> {
    let dx = stepper.rhs(x, t)?;
    if dx.iter().any(|v| !v.is_finite()) {
        return Err(Error::ModelEvaluation {
            t,
            message: "non-finite derivative".into(),
        });
    }
    Ok(dx)
}

/// Bisects the step `[t, t + h]` for the first time the monitor is negative.
/// Returns the offset from `t` of the right bracket and the state there.
fn localize(
    stepper: &Stepper<'_>,
    m: &Monitor<'_>,
    t: f64,
    x: &State,
    k1: &State,
    h: f64,
    cfg: &IntegratorConfig,
) -> Result<(f64, State)> {
    let mut lo = 0.0_f64;
    let mut hi = h;
    let mut x_hi: Option<State> = None;
    while hi - lo > cfg.event_refine_tol {
        let mid = 0.5 * (lo + hi);
        match stepper.step(t, x, k1, mid)? {
            Some((xm, _)) if !m.fired(&xm, stepper.activation + t + mid) => lo = mid,
            Some((xm, _)) => {
                hi = mid;
                x_hi = Some(xm);
            }
            None => hi = mid,
        }
    }
    let x_hi = match x_hi {
        Some(v) => v,
        None => match stepper.step(t, x, k1, hi)? {
            Some((v, _)) => v,
            None => {
                return Err(Error::ModelEvaluation {
                    t: t + hi,
                    message: "non-finite state while localizing event".into(),
                })
            }
        },
    };
    Ok((hi, x_hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{BoxBounds, ControlLaw, SystemModel};
    use nalgebra::{dvector, DMatrix};
    use std::sync::Arc;

    fn decay() -> ClosedLoopSystem {
        let model = SystemModel::new(
            "decay",
            1,
            1,
            |x: &State| -x.clone(),
            |_x: &State| DMatrix::zeros(1, 1),
        )
        .unwrap();
        let law = ControlLaw::new("none", BoxBounds::symmetric(1, 1.0), |_x, _t| State::zeros(1));
        ClosedLoopSystem::new(Arc::new(model), law).unwrap()
    }

    fn oscillator() -> ClosedLoopSystem {
        let model = SystemModel::new(
            "osc",
            2,
            1,
            |x: &State| dvector![x[1], -x[0]],
            |_x: &State| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let law = ControlLaw::new("none", BoxBounds::symmetric(1, 1.0), |_x, _t| State::zeros(1));
        ClosedLoopSystem::new(Arc::new(model), law).unwrap()
    }

    #[test]
    fn exponential_decay_matches_analytic() {
        let tr = simulate_flow(&decay(), &dvector![1.0], 0.0, 1.0, &[], &Default::default()).unwrap();
        assert_eq!(tr.final_time(), 1.0);
        assert!((tr.final_state()[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(tr.terminal_event().unwrap().kind, EventKind::HorizonReached);
        assert_eq!(tr.times()[0], 0.0);
        assert!(tr.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn event_is_localized() {
        // x(t) = e^{-t} crosses 0.5 at ln 2.
        let m = Monitor::new(EventKind::EnteredExplicitRoa, |x: &State, _| x[0] - 0.5);
        let cfg = IntegratorConfig::default();
        let tr = simulate_flow(&decay(), &dvector![1.0], 0.0, 5.0, &[m], &cfg).unwrap();
        let ev = tr.terminal_event().unwrap();
        assert_eq!(ev.kind, EventKind::EnteredExplicitRoa);
        assert!((ev.t - 2f64.ln()).abs() <= 2.0 * cfg.event_refine_tol);
        assert!(tr.final_state()[0] < 0.5);
        assert!(tr.final_state()[0] > 0.5 - 1e-5);
    }

    #[test]
    fn immediate_event_at_zero() {
        let m = Monitor::new(EventKind::LeftSafeSet, |x: &State, _| 0.1 - x[0]);
        let tr = simulate_flow(&decay(), &dvector![1.0], 0.0, 5.0, &[m], &Default::default()).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.terminal_event().unwrap().t, 0.0);
    }

    #[test]
    fn earliest_monitor_wins() {
        let late = Monitor::new(EventKind::LeftSafeSet, |x: &State, _| x[0] - 0.2);
        let early = Monitor::new(EventKind::EnteredExplicitRoa, |x: &State, _| x[0] - 0.6);
        let tr =
            simulate_flow(&decay(), &dvector![1.0], 0.0, 5.0, &[late, early], &Default::default())
                .unwrap();
        assert_eq!(tr.terminal_event().unwrap().kind, EventKind::EnteredExplicitRoa);
    }

    #[test]
    fn state_bounds_monitor() {
        let model = SystemModel::new(
            "grow",
            1,
            1,
            |x: &State| x.clone(),
            |_x: &State| DMatrix::zeros(1, 1),
        )
        .unwrap()
        .with_state_bounds(BoxBounds::symmetric(1, 2.0))
        .unwrap();
        let law = ControlLaw::new("none", BoxBounds::symmetric(1, 1.0), |_x, _t| State::zeros(1));
        let sys = ClosedLoopSystem::new(Arc::new(model), law).unwrap();
        let tr = simulate_flow(&sys, &dvector![1.0], 0.0, 5.0, &[], &Default::default()).unwrap();
        let ev = tr.terminal_event().unwrap();
        assert_eq!(ev.kind, EventKind::StateLeftBounds);
        assert!((ev.t - 2f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn blow_up_reports_integration_failure() {
        let model = SystemModel::new(
            "blowup",
            1,
            1,
            |x: &State| dvector![x[0] * x[0]],
            |_x: &State| DMatrix::zeros(1, 1),
        )
        .unwrap();
        let law = ControlLaw::new("none", BoxBounds::symmetric(1, 1.0), |_x, _t| State::zeros(1));
        let sys = ClosedLoopSystem::new(Arc::new(model), law).unwrap();
        let err = simulate_flow(&sys, &dvector![1.0], 0.0, 2.0, &[], &Default::default()).unwrap_err();
        match err {
            Error::IntegrationFailure { t, last_state, .. } => {
                assert!(t < 1.01 && t > 0.9, "t = {t}");
                assert!(last_state[0] > 10.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn time_shift_consistency_for_autonomous_law() {
        let a = simulate_flow(&oscillator(), &dvector![1.0, 0.0], 0.0, 3.0, &[], &Default::default())
            .unwrap();
        let b = simulate_flow(&oscillator(), &dvector![1.0, 0.0], 7.5, 3.0, &[], &Default::default())
            .unwrap();
        assert_eq!(a.states(), b.states());
        assert_eq!(a.times(), b.times());
    }

    #[test]
    fn semigroup_property() {
        let cfg = IntegratorConfig::default();
        let x0 = dvector![1.0, 0.5];
        let direct = simulate_flow(&oscillator(), &x0, 0.0, 3.0, &[], &cfg).unwrap();
        let first = simulate_flow(&oscillator(), &x0, 0.0, 1.2, &[], &cfg).unwrap();
        let second =
            simulate_flow(&oscillator(), first.final_state(), 1.2, 1.8, &[], &cfg).unwrap();
        let diff = direct.final_state() - second.final_state();
        assert!(diff.amax() <= 10.0 * cfg.abs_tol, "diff {diff}");
    }

    #[test]
    fn determinism() {
        let cfg = IntegratorConfig::default();
        let m = || Monitor::new(EventKind::LeftSafeSet, |x: &State, _| 2.0 - x[0].abs());
        let a = simulate_flow(&oscillator(), &dvector![0.3, 1.0], 0.0, 10.0, &[m()], &cfg).unwrap();
        let b = simulate_flow(&oscillator(), &dvector![0.3, 1.0], 0.0, 10.0, &[m()], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = IntegratorConfig::default();
        assert!(simulate_flow(&decay(), &dvector![1.0], 0.0, 0.0, &[], &cfg).is_err());
        assert!(simulate_flow(&decay(), &dvector![f64::NAN], 0.0, 1.0, &[], &cfg).is_err());
        assert!(simulate_flow(&decay(), &dvector![1.0, 2.0], 0.0, 1.0, &[], &cfg).is_err());
    }
}
