use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{simulate_flow, BoxBounds, EventKind, IntegratorConfig, Monitor, State};
use crate::error::{Error, Result};
use crate::primitives::{gaussian_directions, MotionPrimitive, SetpointKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoAClass {
    SafeConvergent,
    Unsafe,
    NonConvergent,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteForceOptions {
    pub probe_horizon: f64,
    /// Defaults to the primitive's own radius.
    pub convergence_radius: Option<f64>,
    pub integrator: IntegratorConfig,
    pub safety_slack: f64,
}

impl BruteForceOptions {
    pub fn new(probe_horizon: f64) -> Self {
        Self {
            probe_horizon,
            convergence_radius: None,
            integrator: IntegratorConfig::default(),
            safety_slack: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoAEstimate {
    pub tb: f64,
    pub samples_per_dim: usize,
    /// Lexicographic, last coordinate fastest.
    pub grid: Vec<Vec<f64>>,
    pub verdicts: Vec<RoAClass>,
    pub probe_horizon: f64,
    pub convergence_radius: f64,
}

impl RoAEstimate {
    pub fn count(&self, class: RoAClass) -> usize {
        self.verdicts.iter().filter(|v| **v == class).count()
    }

    pub fn fraction(&self, class: RoAClass) -> f64 {
        if self.verdicts.is_empty() {
            return 0.0;
        }
        self.count(class) as f64 / self.verdicts.len() as f64
    }
}

/// Classifies one initial state by a long probe: safe-convergent iff the safe set
/// held on the whole probe and the terminal weighted distance to the setpoint is below
/// the convergence radius. Leaving the state bounds counts as unsafe; an integration
/// failure as non-convergent.
pub fn classify_state(b: &MotionPrimitive, x0: &State, tb: f64, opts: &BruteForceOptions) -> Result<RoAClass> {
    b.setpoint().check_time(tb)?;
    let tb = b.setpoint().clamp_time(tb);
    let radius = opts.convergence_radius.unwrap_or(b.radius());
    let horizon = match b.setpoint().kind() {
        SetpointKind::Transient { tf, .. } => opts.probe_horizon.min(tf - tb),
        _ => opts.probe_horizon,
    };
    let safety = b.safety();
    let slack = opts.safety_slack;
    if horizon <= 0.0 {
        let safe = safety.margin(x0, tb).value + slack >= 0.0;
        return Ok(match (safe, b.roa_distance_clamped(x0, tb) < radius) {
            (false, _) => RoAClass::Unsafe,
            (true, true) => RoAClass::SafeConvergent,
            (true, false) => RoAClass::NonConvergent,
        });
    }
    let monitors = [Monitor::new(EventKind::LeftSafeSet, move |x, t| {
        safety.margin(x, t).value + slack
    })];
    let tr = match simulate_flow(b.closed_loop(), x0, tb, horizon, &monitors, &opts.integrator) {
        Ok(tr) => tr,
        Err(Error::IntegrationFailure { .. }) | Err(Error::ModelEvaluation { .. }) => {
            return Ok(RoAClass::NonConvergent)
        }
        Err(e) => return Err(e),
    };
    let kind = tr.terminal_event().map(|e| e.kind);
    Ok(match kind {
        Some(EventKind::LeftSafeSet) | Some(EventKind::StateLeftBounds) => RoAClass::Unsafe,
        _ => {
            let t_end = tb + tr.final_time();
            if b.roa_distance_clamped(tr.final_state(), t_end) < radius {
                RoAClass::SafeConvergent
            } else {
                RoAClass::NonConvergent
            }
        }
    })
}

pub fn brute_force_roa(
    b: &MotionPrimitive,
    tb: f64,
    sample_box: &BoxBounds,
    samples_per_dim: usize,
    probe_horizon: f64,
) -> Result<RoAEstimate> {
    brute_force_roa_with(b, tb, sample_box, samples_per_dim, &BruteForceOptions::new(probe_horizon))
}

/// Classifies every point of a uniform grid over `sample_box` (endpoints included).
pub fn brute_force_roa_with(
    b: &MotionPrimitive,
    tb: f64,
    sample_box: &BoxBounds,
    samples_per_dim: usize,
    opts: &BruteForceOptions,
) -> Result<RoAEstimate> {
    let n = b.model().state_dim();
    if sample_box.dim() != n {
        return Err(Error::Dimension {
            context: "brute-force sample box",
            expected: n,
            actual: sample_box.dim(),
        });
    }
    if samples_per_dim < 2 {
        return Err(Error::config("brute force needs at least 2 samples per dimension"));
    }
    if sample_box
        .lower
        .iter()
        .zip(&sample_box.upper)
        .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo))
    {
        return Err(Error::config("brute-force sample box is empty or unbounded"));
    }
    if !(opts.probe_horizon.is_finite() && opts.probe_horizon > 0.0) {
        return Err(Error::config("probe horizon must be positive"));
    }
    b.setpoint().check_time(tb)?;

    let total = samples_per_dim
        .checked_pow(n as u32)
        .ok_or_else(|| Error::config("brute-force grid is too large"))?;
    let grid: Vec<Vec<f64>> = (0..total)
        .map(|mut idx| {
            let mut p = vec![0.0; n];
            for d in (0..n).rev() {
                let k = idx % samples_per_dim;
                idx /= samples_per_dim;
                let (lo, hi) = (sample_box.lower[d], sample_box.upper[d]);
                p[d] = lo + (hi - lo) * k as f64 / (samples_per_dim - 1) as f64;
            }
            p
        })
        .collect();
    let verdicts = grid
        .par_iter()
        .map(|p| classify_state(b, &State::from_column_slice(p), tb, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(RoAEstimate {
        tb,
        samples_per_dim,
        grid,
        verdicts,
        probe_horizon: opts.probe_horizon,
        convergence_radius: opts.convergence_radius.unwrap_or(b.radius()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationWarning {
    /// No candidate passed; the smallest was returned.
    NoCandidatePassed,
    /// Zero boundary samples: every candidate passes vacuously.
    NoBoundarySamples,
    NoCandidates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub radius: f64,
    pub warning: Option<CalibrationWarning>,
    /// `(candidate, passed)` in the order tried.
    pub tried: Vec<(f64, bool)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    pub probe_horizon: f64,
    pub boundary_samples: usize,
    pub seed: u64,
    pub integrator: IntegratorConfig,
}

pub fn calibrate_radius(
    b: &MotionPrimitive,
    tb_grid: &[f64],
    candidate_radii: &[f64],
    boundary_samples: usize,
    probe_horizon: f64,
) -> CalibrationResult {
    calibrate_radius_with(
        b,
        tb_grid,
        candidate_radii,
        &CalibrationOptions {
            probe_horizon,
            boundary_samples,
            seed: 0,
            integrator: IntegratorConfig::default(),
        },
    )
}

/// Largest candidate radius whose ball boundary (sampled along seeded random
/// directions, scaled by the RoA weights) is safe-convergent by brute force at every
/// `tb`. Each candidate is also the convergence radius for its own probes.
pub fn calibrate_radius_with(
    b: &MotionPrimitive,
    tb_grid: &[f64],
    candidate_radii: &[f64],
    opts: &CalibrationOptions,
) -> CalibrationResult {
    let mut candidates: Vec<f64> = candidate_radii
        .iter()
        .copied()
        .filter(|r| r.is_finite() && *r > 0.0)
        .collect();
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    if candidates.is_empty() {
        return CalibrationResult {
            radius: b.radius(),
            warning: Some(CalibrationWarning::NoCandidates),
            tried: Vec::new(),
        };
    }
    if opts.boundary_samples == 0 {
        return CalibrationResult {
            radius: candidates[0],
            warning: Some(CalibrationWarning::NoBoundarySamples),
            tried: vec![(candidates[0], true)],
        };
    }
    let n = b.model().state_dim();
    let dirs = gaussian_directions(n, opts.boundary_samples, opts.seed);
    let inv_w = State::from_iterator(n, b.explicit_roa().weights.iter().map(|w| 1.0 / w));
    let mut tried = Vec::new();
    for &r in &candidates {
        let bf = BruteForceOptions {
            probe_horizon: opts.probe_horizon,
            convergence_radius: Some(r),
            integrator: opts.integrator,
            safety_slack: 1e-9,
        };
        let cases: Vec<(f64, &State)> = tb_grid.iter().flat_map(|&tb| dirs.iter().map(move |d| (tb, d))).collect();
        let passed = cases.par_iter().all(|(tb, d)| {
            let Ok(center) = b.setpoint().value(*tb) else {
                return false;
            };
            let x = center + d.component_mul(&inv_w) * r;
            matches!(classify_state(b, &x, *tb, &bf), Ok(RoAClass::SafeConvergent))
        });
        tried.push((r, passed));
        if passed {
            return CalibrationResult {
                radius: r,
                warning: None,
                tried,
            };
        }
    }
    CalibrationResult {
        radius: *candidates.last().unwrap(),
        warning: Some(CalibrationWarning::NoCandidatePassed),
        tried,
    }
}
