use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{MotionPrimitive, SetpointKind};

/// How many entry/exit times each setpoint class gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPolicy {
    /// Uniform points over one period.
    pub periodic_n: usize,
    /// Intervals over a transient domain (`transient_n + 1` entry points).
    pub transient_n: usize,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self {
            periodic_n: 16,
            transient_n: 16,
        }
    }
}

impl GridPolicy {
    pub fn uniform(n: usize) -> Self {
        Self {
            periodic_n: n,
            transient_n: n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.periodic_n == 0 || self.transient_n == 0 {
            return Err(Error::config("grid resolution must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridDerivation {
    /// `{0}` for time-invariant setpoints.
    Single,
    UniformOverPeriod { n: usize },
    UniformOverDomain { n: usize },
    /// `{tf}`: transients are left only at completion.
    EndpointOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub points: Vec<f64>,
    pub derivation: GridDerivation,
}

impl TimeGrid {
    /// Times at which `p` may be entered.
    pub fn entry(p: &MotionPrimitive, policy: &GridPolicy) -> Self {
        match p.setpoint().kind() {
            SetpointKind::Fixed => Self::single(),
            SetpointKind::Periodic { period } => Self::over_period(period, policy.periodic_n),
            SetpointKind::Transient { t0, tf } => {
                let n = policy.transient_n.max(1);
                Self {
                    points: (0..=n)
                        .map(|k| if k == n { tf } else { t0 + (tf - t0) * k as f64 / n as f64 })
                        .collect(),
                    derivation: GridDerivation::UniformOverDomain { n },
                }
            }
        }
    }

    /// Times at which `p` may be left.
    pub fn exit(p: &MotionPrimitive, policy: &GridPolicy) -> Self {
        match p.setpoint().kind() {
            SetpointKind::Transient { tf, .. } => Self {
                points: vec![tf],
                derivation: GridDerivation::EndpointOnly,
            },
            _ => Self::entry(p, policy),
        }
    }

    pub fn single() -> Self {
        Self {
            points: vec![0.0],
            derivation: GridDerivation::Single,
        }
    }

    pub fn over_period(period: f64, n: usize) -> Self {
        let n = n.max(1);
        Self {
            points: (0..n).map(|k| period * k as f64 / n as f64).collect(),
            derivation: GridDerivation::UniformOverPeriod { n },
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate_for(&self, p: &MotionPrimitive) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::config(format!("empty time grid for `{}`", p.name())));
        }
        if self.points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(format!("time grid for `{}` is not increasing", p.name())));
        }
        self.points.iter().try_for_each(|t| p.setpoint().check_time(*t))
    }
}
