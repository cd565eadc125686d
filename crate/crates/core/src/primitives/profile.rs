use std::sync::Arc;

use crate::dynamics::{BoxBounds, ControlLaw, State};
use crate::error::{Error, Result};

/// Per-coordinate cubic `p(t) = c0 + c1 t + c2 t^2 + c3 t^3` on `[0, duration]`.
///
/// Outside the interval the profile holds its endpoint: `(q0, qd0)` before and
/// `(qf, qdf)` after.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicProfile {
    duration: f64,
    coeffs: Vec<[f64; 4]>,
    q0: Vec<f64>,
    qf: Vec<f64>,
    qd0: Vec<f64>,
    qdf: Vec<f64>,
}

pub fn cubic_profile(q0: &[f64], qf: &[f64], qd0: &[f64], qdf: &[f64], duration: f64) -> Result<CubicProfile> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidDuration(duration));
    }
    let n = q0.len();
    for (context, v) in [("cubic qf", qf), ("cubic qd0", qd0), ("cubic qdf", qdf)] {
        if v.len() != n {
            return Err(Error::Dimension {
                context,
                expected: n,
                actual: v.len(),
            });
        }
    }
    let th = duration;
    let coeffs = (0..n)
        .map(|i| {
            let dq = qf[i] - q0[i];
            let c2 = (3.0 * dq - (2.0 * qd0[i] + qdf[i]) * th) / (th * th);
            let c3 = (-2.0 * dq + (qd0[i] + qdf[i]) * th) / (th * th * th);
            [q0[i], qd0[i], c2, c3]
        })
        .collect();
    Ok(CubicProfile {
        duration,
        coeffs,
        q0: q0.to_vec(),
        qf: qf.to_vec(),
        qd0: qd0.to_vec(),
        qdf: qdf.to_vec(),
    })
}

impl CubicProfile {
    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    /// `(c0, c1, c2, c3)` per coordinate.
    pub fn coefficients(&self) -> &[[f64; 4]] {
        &self.coeffs
    }

    /// Raw polynomial value, without endpoint clamping.
    pub fn polynomial(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let p = self
            .coeffs
            .iter()
            .map(|c| c[0] + t * (c[1] + t * (c[2] + t * c[3])))
            .collect();
        let v = self
            .coeffs
            .iter()
            .map(|c| c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]))
            .collect();
        (p, v)
    }

    /// Clamped position and velocity.
    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        if t < 0.0 {
            (self.q0.clone(), self.qd0.clone())
        } else if t > self.duration {
            (self.qf.clone(), self.qdf.clone())
        } else {
            self.polynomial(t)
        }
    }

    /// Clamped acceleration (zero outside the interval).
    pub fn acceleration(&self, t: f64) -> Vec<f64> {
        if !(0.0..=self.duration).contains(&t) {
            return vec![0.0; self.dim()];
        }
        self.coeffs.iter().map(|c| 2.0 * c[2] + 6.0 * t * c[3]).collect()
    }

    /// `y_d(t)` as state-sized vectors.
    pub fn desired(&self, t: f64) -> (State, State) {
        let (p, v) = self.eval(t);
        (State::from_vec(p), State::from_vec(v))
    }
}

pub type DesiredFn = dyn Fn(f64) -> (State, State) + Send + Sync;
pub type OutputFn = dyn Fn(&State) -> (State, State) + Send + Sync;
pub type FeedforwardFn = dyn Fn(&State, f64) -> State + Send + Sync;

/// Output-space PD controller `u = ff(x, t) - Kp (y_a - y_d) - Kd (ẏ_a - ẏ_d)`,
/// saturated into the input box.
#[derive(Clone)]
pub struct PdLaw {
    kp: Vec<f64>,
    kd: Vec<f64>,
    desired: Arc<DesiredFn>,
    output: Arc<OutputFn>,
    feedforward: Option<Arc<FeedforwardFn>>,
}

impl PdLaw {
    pub fn new(
        kp: Vec<f64>,
        kd: Vec<f64>,
        desired: impl Fn(f64) -> (State, State) + Send + Sync + 'static,
        output_map: impl Fn(&State) -> (State, State) + Send + Sync + 'static,
    ) -> Self {
        Self {
            kp,
            kd,
            desired: Arc::new(desired),
            output: Arc::new(output_map),
            feedforward: None,
        }
    }

    /// Adds a feedforward term, typically the input that makes the desired
    /// signal an exact closed-loop solution.
    pub fn with_feedforward(mut self, ff: impl Fn(&State, f64) -> State + Send + Sync + 'static) -> Self {
        self.feedforward = Some(Arc::new(ff));
        self
    }

    pub fn build(self, description: impl Into<String>, input_bounds: BoxBounds) -> Result<ControlLaw> {
        let m = input_bounds.dim();
        for (context, g) in [("pd kp", &self.kp), ("pd kd", &self.kd)] {
            if g.len() != m {
                return Err(Error::Dimension {
                    context,
                    expected: m,
                    actual: g.len(),
                });
            }
            if g.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
                return Err(Error::config(format!("{context} gains must be finite and non-negative")));
            }
        }
        let (yd, ydd) = (self.desired)(0.0);
        if yd.len() != m || ydd.len() != m {
            return Err(Error::Dimension {
                context: "pd desired output",
                expected: m,
                actual: yd.len().max(ydd.len()),
            });
        }
        let PdLaw {
            kp,
            kd,
            desired,
            output,
            feedforward,
        } = self;
        Ok(ControlLaw::new(description, input_bounds, move |x, t| {
            let (ya, yad) = output(x);
            let (yd, ydd) = desired(t);
            let mut u = match &feedforward {
                Some(ff) => ff(x, t),
                None => State::zeros(kp.len()),
            };
            for i in 0..kp.len() {
                u[i] -= kp[i] * (ya[i] - yd[i]) + kd[i] * (yad[i] - ydd[i]);
            }
            u
        }))
    }
}

/// `u = -Kp (y_a(x) - y_d(t)) - Kd (ẏ_a(x) - ẏ_d(t))`, clamped into `input_bounds`.
pub fn pd_law(
    kp: Vec<f64>,
    kd: Vec<f64>,
    desired: impl Fn(f64) -> (State, State) + Send + Sync + 'static,
    output_map: impl Fn(&State) -> (State, State) + Send + Sync + 'static,
    input_bounds: BoxBounds,
) -> Result<ControlLaw> {
    PdLaw::new(kp, kd, desired, output_map).build("pd", input_bounds)
}

/// Output map for states laid out as `[q, q̇]` with `n` coordinates each.
pub fn split_output(n: usize) -> impl Fn(&State) -> (State, State) + Send + Sync + Clone + 'static {
    move |x: &State| (x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dvector, DMatrix, DVector};

    // Solves the four boundary conditions as a linear system, independent of the
    // closed form used by `cubic_profile`.
    fn lu_coefficients(q0: f64, qf: f64, qd0: f64, qdf: f64, th: f64) -> [f64; 4] {
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 0.0, 0.0, //
                1.0, th, th * th, th * th * th, //
                0.0, 1.0, 0.0, 0.0, //
                0.0, 1.0, 2.0 * th, 3.0 * th * th,
            ],
        );
        let b = DVector::from_vec(vec![q0, qf, qd0, qdf]);
        let c = m.lu().solve(&b).unwrap();
        [c[0], c[1], c[2], c[3]]
    }

    #[test]
    fn smoothstep() {
        let p = cubic_profile(&[0.0], &[1.0], &[0.0], &[0.0], 1.0).unwrap();
        let c = p.coefficients()[0];
        for (a, b) in c.iter().zip([0.0, 0.0, 3.0, -2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_case() {
        let p = cubic_profile(&[2.5], &[2.5], &[0.0], &[0.0], 0.7).unwrap();
        assert_eq!(p.coefficients()[0], [2.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn matches_linear_solve() {
        let c = cubic_profile(&[0.3], &[-1.2], &[0.5], &[2.0], 1.7).unwrap().coefficients()[0];
        let r = lu_coefficients(0.3, -1.2, 0.5, 2.0, 1.7);
        for k in 0..4 {
            assert!((c[k] - r[k]).abs() < 1e-12, "{c:?} vs {r:?}");
        }
    }

    #[test]
    fn clamps_outside_interval() {
        let p = cubic_profile(&[0.0], &[1.0], &[0.1], &[0.2], 2.0).unwrap();
        assert_eq!(p.eval(-1.0), (vec![0.0], vec![0.1]));
        assert_eq!(p.eval(3.0), (vec![1.0], vec![0.2]));
        assert_eq!(p.acceleration(3.0), vec![0.0]);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            cubic_profile(&[0.0], &[1.0], &[0.0], &[0.0], 0.0),
            Err(Error::InvalidDuration(_))
        ));
        assert!(matches!(
            cubic_profile(&[0.0], &[1.0, 2.0], &[0.0], &[0.0], 1.0),
            Err(Error::Dimension { .. })
        ));
    }

    fn scalar_pd(kp: f64, kd: f64) -> ControlLaw {
        pd_law(
            vec![kp],
            vec![kd],
            |_t| (dvector![0.0], dvector![0.0]),
            split_output(1),
            BoxBounds::symmetric(1, 100.0),
        )
        .unwrap()
    }

    #[test]
    fn pd_formula() {
        let law = scalar_pd(2.0, 0.0);
        assert_eq!(law.eval(&dvector![1.0, 0.0], 0.0).unwrap(), dvector![-2.0]);
        let zero = scalar_pd(0.0, 0.0);
        assert_eq!(zero.eval(&dvector![3.0, -7.0], 1.0).unwrap(), dvector![0.0]);
    }

    #[test]
    fn pd_zero_error() {
        let prof = cubic_profile(&[0.0], &[1.0], &[0.0], &[0.0], 1.0).unwrap();
        let p2 = prof.clone();
        let law = pd_law(
            vec![5.0],
            vec![3.0],
            move |t| prof.desired(t),
            split_output(1),
            BoxBounds::symmetric(1, 100.0),
        )
        .unwrap();
        let (y, yd) = p2.eval(0.4);
        assert_eq!(law.eval(&dvector![y[0], yd[0]], 0.4).unwrap(), dvector![0.0]);
    }

    #[test]
    fn pd_dimension_checks() {
        let r = pd_law(
            vec![1.0, 2.0],
            vec![1.0],
            |_t| (dvector![0.0], dvector![0.0]),
            split_output(1),
            BoxBounds::symmetric(1, 1.0),
        );
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }
}
