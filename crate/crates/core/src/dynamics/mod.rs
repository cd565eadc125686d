//! Control-affine systems, feedback laws and their closed-loop flows.
//!
//! A [`SystemModel`] supplies the drift `f(x)` and actuation `g(x)` of
//! `ẋ = f(x) + g(x) u`. A [`ControlLaw`] maps `(x, t)` to a saturated input,
//! where `t` is measured on the primitive-local clock. Pairing the two gives a
//! [`ClosedLoopSystem`] whose flow is computed by [`simulate_flow`].

mod integrator;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use integrator::{simulate_flow, Monitor};
pub use trajectory::{Event, EventKind, Trajectory};

/// State, input and derivative vectors.
pub type State = DVector<f64>;

pub type DriftFn = dyn Fn(&State) -> State + Send + Sync;
pub type ActuationFn = dyn Fn(&State) -> DMatrix<f64> + Send + Sync;
pub type LawFn = dyn Fn(&State, f64) -> State + Send + Sync;

/// Axis-aligned compact box, used for `X`, `U` and sampling regions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                context: "box bounds",
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::config("box bounds must satisfy lower <= upper"));
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `[-limit, limit]^dim`.
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        Self {
            lower: vec![-limit; dim],
            upper: vec![limit; dim],
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::symmetric(dim, f64::INFINITY)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &State) -> bool {
        self.margin(x) >= 0.0
    }

    /// Signed distance-like margin: non-negative iff `x` lies in the box.
    pub fn margin(&self, x: &State) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(x.iter())
            .map(|((l, u), v)| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn clamp(&self, u: &State) -> State {
        State::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(v, (l, h))| v.clamp(*l, *h)),
        )
    }
}

/// The open-loop plant `ẋ = f(x) + g(x) u`.
#[derive(Clone)]
pub struct SystemModel {
    name: String,
    state_dim: usize,
    input_dim: usize,
    drift: Arc<DriftFn>,
    actuation: Arc<ActuationFn>,
    state_bounds: Option<BoxBounds>,
}

impl SystemModel {
    pub fn new(
        name: impl Into<String>,
        state_dim: usize,
        input_dim: usize,
        drift: impl Fn(&State) -> State + Send + Sync + 'static,
        actuation: impl Fn(&State) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if state_dim == 0 || input_dim == 0 {
            return Err(Error::config("state and input dimensions must be positive"));
        }
        Ok(Self {
            name: name.into(),
            state_dim,
            input_dim,
            drift: Arc::new(drift),
            actuation: Arc::new(actuation),
            state_bounds: None,
        })
    }

    pub fn with_state_bounds(mut self, bounds: BoxBounds) -> Result<Self> {
        if bounds.dim() != self.state_dim {
            return Err(Error::Dimension {
                context: "state bounds",
                expected: self.state_dim,
                actual: bounds.dim(),
            });
        }
        self.state_bounds = Some(bounds);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn state_bounds(&self) -> Option<&BoxBounds> {
        self.state_bounds.as_ref()
    }

    pub fn drift(&self, x: &State) -> Result<State> {
        let fx = (self.drift)(x);
        if fx.len() != self.state_dim {
            return Err(Error::Dimension {
                context: "drift output",
                expected: self.state_dim,
                actual: fx.len(),
            });
        }
        Ok(fx)
    }

    pub fn actuation(&self, x: &State) -> Result<DMatrix<f64>> {
        let gx = (self.actuation)(x);
        if gx.nrows() != self.state_dim {
            return Err(Error::Dimension {
                context: "actuation rows",
                expected: self.state_dim,
                actual: gx.nrows(),
            });
        }
        if gx.ncols() != self.input_dim {
            return Err(Error::Dimension {
                context: "actuation columns",
                expected: self.input_dim,
                actual: gx.ncols(),
            });
        }
        Ok(gx)
    }
}

impl fmt::Debug for SystemModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("input_dim", &self.input_dim)
            .field("state_bounds", &self.state_bounds)
            .finish_non_exhaustive()
    }
}

/// Feedback law `u = k(x, t)` with saturation into `U`.
///
/// `t` is primitive-local time. Saturation is part of the law: [`ControlLaw::eval`]
/// always returns a value inside `input_bounds`.
#[derive(Clone)]
pub struct ControlLaw {
    law: Arc<LawFn>,
    input_bounds: BoxBounds,
    description: String,
}

impl ControlLaw {
    pub fn new(
        description: impl Into<String>,
        input_bounds: BoxBounds,
        law: impl Fn(&State, f64) -> State + Send + Sync + 'static,
    ) -> Self {
        Self {
            law: Arc::new(law),
            input_bounds,
            description: description.into(),
        }
    }

    pub fn input_bounds(&self) -> &BoxBounds {
        &self.input_bounds
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Unsaturated law output.
    pub fn raw(&self, x: &State, t: f64) -> State {
        (self.law)(x, t)
    }

    pub fn eval(&self, x: &State, t: f64) -> Result<State> {
        let u = (self.law)(x, t);
        if u.len() != self.input_bounds.dim() {
            return Err(Error::Dimension {
                context: "control law output",
                expected: self.input_bounds.dim(),
                actual: u.len(),
            });
        }
        Ok(self.input_bounds.clamp(&u))
    }
}

impl fmt::Debug for ControlLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlLaw")
            .field("description", &self.description)
            .field("input_bounds", &self.input_bounds)
            .finish_non_exhaustive()
    }
}

/// `f_cl(x, t) = f(x) + g(x) k(x, t)`.
#[derive(Clone, Debug)]
pub struct ClosedLoopSystem {
    model: Arc<SystemModel>,
    law: ControlLaw,
}

impl ClosedLoopSystem {
    pub fn new(model: Arc<SystemModel>, law: ControlLaw) -> Result<Self> {
        if law.input_bounds().dim() != model.input_dim() {
            return Err(Error::Dimension {
                context: "control law input bounds",
                expected: model.input_dim(),
                actual: law.input_bounds().dim(),
            });
        }
        Ok(Self { model, law })
    }

    pub fn model(&self) -> &Arc<SystemModel> {
        &self.model
    }

    pub fn law(&self) -> &ControlLaw {
        &self.law
    }

    pub fn evaluate(&self, x: &State, t: f64) -> Result<State> {
        if x.len() != self.model.state_dim() {
            return Err(Error::Dimension {
                context: "state",
                expected: self.model.state_dim(),
                actual: x.len(),
            });
        }
        let u = self.law.eval(x, t)?;
        let mut dx = self.model.drift(x)?;
        dx += self.model.actuation(x)? * u;
        Ok(dx)
    }
}

/// Evaluates the closed-loop right-hand side at `(x, t)`.
pub fn evaluate_closed_loop(sys: &ClosedLoopSystem, x: &State, t: f64) -> Result<State> {
    sys.evaluate(x, t)
}

/// Adaptive Cash–Karp 5(4) settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Width of the bisection bracket used to localize event times.
    pub event_refine_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-9,
            rel_tol: 1e-6,
            max_step: 1e-2,
            min_step: 1e-12,
            event_refine_tol: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.abs_tol,
            self.rel_tol,
            self.max_step,
            self.min_step,
            self.event_refine_tol,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::config("integrator tolerances must be finite and positive"));
        }
        if self.min_step >= self.max_step {
            return Err(Error::config("integrator min_step must be below max_step"));
        }
        Ok(())
    }
}

/// Weighted Euclidean norm `sqrt(sum (w_i d_i)^2)`.
pub fn weighted_norm(delta: &State, weights: &[f64]) -> f64 {
    delta
        .iter()
        .zip(weights)
        .map(|(d, w)| (d * w) * (d * w))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn double_integrator() -> Arc<SystemModel> {
        Arc::new(
            SystemModel::new(
                "di",
                2,
                1,
                |x: &State| dvector![x[1], 0.0],
                |_x: &State| DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            )
            .unwrap(),
        )
    }

    #[test]
    fn zero_law_zero_drift_gives_zero_derivative() {
        let model = Arc::new(
            SystemModel::new(
                "zero",
                2,
                2,
                |_x: &State| State::zeros(2),
                |_x: &State| DMatrix::identity(2, 2),
            )
            .unwrap(),
        );
        let law = ControlLaw::new("zero", BoxBounds::symmetric(2, 1.0), |_x, _t| State::zeros(2));
        let sys = ClosedLoopSystem::new(model, law).unwrap();
        let dx = evaluate_closed_loop(&sys, &dvector![0.3, -2.0], 0.0).unwrap();
        assert_eq!(dx, State::zeros(2));
    }

    #[test]
    fn double_integrator_substitution() {
        let law = ControlLaw::new("pd", BoxBounds::symmetric(1, 10.0), |x: &State, _t| {
            dvector![-x[0] - x[1]]
        });
        let sys = ClosedLoopSystem::new(double_integrator(), law).unwrap();
        let dx = sys.evaluate(&dvector![1.0, 0.0], 0.0).unwrap();
        assert_eq!(dx, dvector![0.0, -1.0]);
    }

    #[test]
    fn saturation_matches_preclamped_law() {
        let bounds = BoxBounds::symmetric(1, 0.5);
        let wild = ControlLaw::new("wild", bounds.clone(), |x: &State, _t| dvector![-10.0 * x[0]]);
        let clamped = ControlLaw::new("clamped", bounds, |x: &State, _t| {
            dvector![(-10.0 * x[0]).clamp(-0.5, 0.5)]
        });
        let a = ClosedLoopSystem::new(double_integrator(), wild).unwrap();
        let b = ClosedLoopSystem::new(double_integrator(), clamped).unwrap();
        let x = dvector![2.0, 0.1];
        let da = a.evaluate(&x, 0.0).unwrap();
        assert_eq!(da, b.evaluate(&x, 0.0).unwrap());
        assert_eq!(da[1], -0.5);
    }

    #[test]
    fn dimension_mismatch_is_model_error() {
        let law = ControlLaw::new("bad", BoxBounds::symmetric(1, 1.0), |_x, _t| State::zeros(2));
        let sys = ClosedLoopSystem::new(double_integrator(), law).unwrap();
        assert!(matches!(
            sys.evaluate(&dvector![0.0, 0.0], 0.0),
            Err(Error::Dimension { .. })
        ));
        let law = ControlLaw::new("ok", BoxBounds::symmetric(1, 1.0), |_x, _t| State::zeros(1));
        let sys = ClosedLoopSystem::new(double_integrator(), law).unwrap();
        assert!(sys.evaluate(&dvector![0.0, 0.0, 0.0], 0.0).is_err());
    }

    #[test]
    fn integrator_config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        let bad = IntegratorConfig {
            min_step: 1.0,
            max_step: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig {
            abs_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn box_margin_sign() {
        let b = BoxBounds::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(b.contains(&dvector![0.0, 1.0]));
        assert_eq!(b.margin(&dvector![0.0, 1.0]), 1.0);
        assert!(b.margin(&dvector![1.5, 1.0]) < 0.0);
        assert!(BoxBounds::new(vec![1.0], vec![0.0]).is_err());
    }
}
