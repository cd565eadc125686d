//! Planar body analog of a quadruped: horizontal position `p` and height `z`,
//! both driven through acceleration inputs, with gravity on `z`.

use std::f64::consts::TAU;
use std::sync::Arc;

use nalgebra::{dmatrix, dvector};
use serde::{Deserialize, Serialize};

use super::BenchmarkSuite;
use crate::dynamics::{BoxBounds, ControlLaw, State, SystemModel};
use crate::error::Result;
use crate::graph::GridPolicy;
use crate::oracle::OracleConfig;
use crate::planner::TimedGoal;
use crate::primitives::{
    cubic_profile, split_output, Constraint, ExplicitRoA, MotionPrimitive, PdLaw, SafetySpec, ScheduleWindow, Setpoint,
};

/// Suite constants. None of these are hardware values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrupedConstants {
    pub gravity: f64,
    pub z_lie: f64,
    pub z_stand: f64,
    pub z_crouch: f64,
    /// Leg reach: above this height the feet cannot touch the ground.
    pub z_leg: f64,
    /// Lowest body height at which a gait can be executed.
    pub z_floor: f64,
    /// Band around `z_leg` where contact is ambiguous.
    pub contact_band: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub p_limit: f64,
    pub v_limit: f64,
    pub vz_limit: f64,
    /// Bound on `|v_p - v_p*|` while feet are planted.
    pub slip_limit: f64,
    pub input_limit: f64,
    pub kp: f64,
    pub kd: f64,
    pub jump_kp: f64,
    pub jump_kd: f64,
    pub land_kp: f64,
    pub land_kd: f64,
    pub walk_period: f64,
    pub walk_amplitudes: Vec<(String, f64)>,
    pub push_duration: f64,
    /// Ballistic rise time after take-off; sets the take-off speed.
    pub rise_time: f64,
    pub settle_duration: f64,
    pub weights: Vec<f64>,
    pub radius: f64,
    pub transient_radius: f64,
    pub horizon: f64,
}

impl Default for QuadrupedConstants {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            z_lie: 0.10,
            z_stand: 0.30,
            z_crouch: 0.25,
            z_leg: 0.40,
            z_floor: 0.15,
            contact_band: 0.03,
            z_min: 0.05,
            z_max: 0.6,
            p_limit: 0.5,
            v_limit: 2.0,
            vz_limit: 2.0,
            slip_limit: 0.11,
            input_limit: 30.0,
            kp: 16.0,
            kd: 8.0,
            jump_kp: 100.0,
            jump_kd: 20.0,
            land_kp: 100.0,
            land_kd: 30.0,
            walk_period: 1.0,
            walk_amplitudes: vec![
                ("in place".into(), 0.05),
                ("slow".into(), 0.10),
                ("medium".into(), 0.15),
                ("fast".into(), 0.20),
            ],
            push_duration: 0.3,
            rise_time: 0.1,
            settle_duration: 0.5,
            weights: vec![1.0, 1.0, 0.25, 0.25],
            radius: 0.02,
            transient_radius: 0.01,
            horizon: 4.0,
        }
    }
}

/// Desired position, velocity and acceleration of `(p, z)`.
#[derive(Clone, Copy, Debug, Default)]
struct Reference {
    p: f64,
    z: f64,
    vp: f64,
    vz: f64,
    ap: f64,
    az: f64,
}

impl Reference {
    fn rest(z: f64) -> Self {
        Self {
            z,
            ..Self::default()
        }
    }

    fn state(&self) -> State {
        dvector![self.p, self.z, self.vp, self.vz]
    }
}

type RefFn = Arc<dyn Fn(f64) -> Reference + Send + Sync>;

struct Builder {
    c: QuadrupedConstants,
    model: Arc<SystemModel>,
}

impl Builder {
    fn law(&self, desc: String, kp: [f64; 2], kd: [f64; 2], r: &RefFn) -> Result<ControlLaw> {
        let g = self.c.gravity;
        let (rd, rf) = (r.clone(), r.clone());
        PdLaw::new(
            kp.to_vec(),
            kd.to_vec(),
            move |t| {
                let r = rd(t);
                (dvector![r.p, r.z], dvector![r.vp, r.vz])
            },
            split_output(2),
        )
        .with_feedforward(move |_, t| {
            let r = rf(t);
            dvector![r.ap, r.az + g]
        })
        .build(desc, BoxBounds::symmetric(2, self.c.input_limit))
    }

    fn joint_limits(&self, s: SafetySpec) -> SafetySpec {
        let c = &self.c;
        s.with(Constraint::lower("z-min", 1, c.z_min))
            .with(Constraint::upper("z-max", 1, c.z_max))
            .with(Constraint::abs("p-limit", 0, c.p_limit))
            .with(Constraint::abs("vp-limit", 2, c.v_limit))
            .with(Constraint::abs("vz-limit", 3, c.vz_limit))
    }

    fn slip(&self, r: &RefFn) -> Constraint {
        let (r, lim) = (r.clone(), self.c.slip_limit);
        Constraint::new("slip", move |x: &State, t| lim - (x[2] - r(t).vp).abs())
    }

    /// Feet planted: legs reach the ground and must not slide.
    fn ground(&self, r: &RefFn, floor: bool) -> SafetySpec {
        let mut s = self
            .joint_limits(SafetySpec::new())
            .with(Constraint::upper("leg-reach", 1, self.c.z_leg))
            .with(self.slip(r));
        if floor {
            s = s.with(Constraint::lower("floor", 1, self.c.z_floor));
        }
        s
    }

    fn primitive(&self, name: &str, family: &str) -> crate::primitives::PrimitiveBuilder {
        MotionPrimitive::builder(name, self.model.clone()).family(family)
    }

    fn roa(&self, radius: f64) -> Result<ExplicitRoA> {
        ExplicitRoA::new(radius, self.c.weights.clone())
    }

    fn pose(&self, name: &str, z: f64) -> Result<MotionPrimitive> {
        let r: RefFn = Arc::new(move |_| Reference::rest(z));
        let c = &self.c;
        self.primitive(name, name)
            .setpoint(Setpoint::fixed(Reference::rest(z).state()))
            .law(self.law(format!("pd hold z={z}"), [c.kp, c.kp], [c.kd, c.kd], &r)?)
            // Standing still needs no minimum height, so Lie and Stand stay mutually reachable.
            .safety(self.ground(&r, false))
            .roa(self.roa(c.radius)?)
            .build()
    }

    fn walk(&self, argument: &str, amplitude: f64) -> Result<MotionPrimitive> {
        let c = &self.c;
        let (z, w) = (c.z_stand, TAU / c.walk_period);
        let r: RefFn = Arc::new(move |t| {
            let (s, co) = (w * t).sin_cos();
            Reference {
                p: amplitude * s,
                z,
                vp: amplitude * w * co,
                vz: 0.0,
                ap: -amplitude * w * w * s,
                az: 0.0,
            }
        });
        let rs = r.clone();
        self.primitive(&format!("Walk({argument})"), "Walk")
            .argument(argument)
            .setpoint(Setpoint::periodic(c.walk_period, move |t| rs(t).state())?)
            .law(self.law(format!("pd gait A={amplitude}"), [c.kp, c.kp], [c.kd, c.kd], &r)?)
            .safety(self.ground(&r, true))
            .roa(self.roa(c.radius)?)
            .build()
    }

    fn takeoff_speed(&self) -> f64 {
        self.c.gravity * self.c.rise_time
    }

    fn apex(&self) -> f64 {
        let v = self.takeoff_speed();
        self.c.z_leg + v * v / (2.0 * self.c.gravity)
    }

    /// Ground, ambiguous and airborne safety windows along a monotone height reference.
    fn schedule(&self, r: &RefFn, tf: f64, rising: bool) -> Result<SafetySpec> {
        let c = &self.c;
        let lo = crossing(r, tf, c.z_leg - c.contact_band);
        let hi = crossing(r, tf, c.z_leg + c.contact_band);
        let spec = self.ground(r, true).with(Constraint::lower("airborne", 1, c.z_leg));
        let ground = ["z-min", "z-max", "p-limit", "vp-limit", "vz-limit", "leg-reach", "slip", "floor"];
        let air = ["z-min", "z-max", "p-limit", "vp-limit", "vz-limit", "airborne"];
        let joints = &ground[..5];
        let windows = if rising {
            vec![
                ScheduleWindow::new(0.0, lo, &ground),
                ScheduleWindow::new(lo, hi, joints),
                ScheduleWindow::new(hi, tf, &air),
            ]
        } else {
            vec![
                ScheduleWindow::new(0.0, hi, &air),
                ScheduleWindow::new(hi, lo, joints),
                ScheduleWindow::new(lo, tf, &ground),
            ]
        };
        spec.with_schedule(windows)
    }

    fn jump(&self) -> Result<MotionPrimitive> {
        let c = &self.c;
        let (g, v, z_leg, push) = (c.gravity, self.takeoff_speed(), c.z_leg, c.push_duration);
        let profile = cubic_profile(&[c.z_stand], &[z_leg], &[0.0], &[v], push)?;
        let tf = push + c.rise_time;
        let r: RefFn = Arc::new(move |t| {
            if t <= push {
                let (q, qd) = profile.eval(t);
                Reference {
                    z: q[0],
                    vz: qd[0],
                    az: profile.acceleration(t)[0],
                    ..Reference::default()
                }
            } else {
                let s = t - push;
                Reference {
                    z: z_leg + v * s - 0.5 * g * s * s,
                    vz: v - g * s,
                    az: -g,
                    ..Reference::default()
                }
            }
        });
        let rs = r.clone();
        self.primitive("Jump", "Jump")
            .setpoint(Setpoint::transient(0.0, tf, move |t| rs(t).state())?)
            .law(self.law("pd push then ballistic".into(), [c.kp, c.jump_kp], [c.kd, c.jump_kd], &r)?)
            .safety(self.schedule(&r, tf, true)?)
            .roa(self.roa(c.transient_radius)?)
            .next_primitive("Land")
            .build()
    }

    fn land(&self) -> Result<MotionPrimitive> {
        let c = &self.c;
        let (g, v, fall, apex) = (c.gravity, self.takeoff_speed(), c.rise_time, self.apex());
        let profile = cubic_profile(&[c.z_leg], &[c.z_crouch], &[-v], &[0.0], c.settle_duration)?;
        let tf = fall + c.settle_duration;
        let r: RefFn = Arc::new(move |t| {
            if t <= fall {
                Reference {
                    z: apex - 0.5 * g * t * t,
                    vz: -g * t,
                    az: -g,
                    ..Reference::default()
                }
            } else {
                let (q, qd) = profile.eval(t - fall);
                Reference {
                    z: q[0],
                    vz: qd[0],
                    az: profile.acceleration(t - fall)[0],
                    ..Reference::default()
                }
            }
        });
        let rs = r.clone();
        self.primitive("Land", "Land")
            .setpoint(Setpoint::transient(0.0, tf, move |t| rs(t).state())?)
            .law(self.law("pd fall then damped crouch".into(), [c.kp, c.land_kp], [c.kd, c.land_kd], &r)?)
            .safety(self.schedule(&r, tf, false)?)
            .roa(self.roa(c.transient_radius)?)
            .next_primitive("Stand")
            .build()
    }
}

/// First time in `[0, tf]` at which the height reference crosses `level`.
fn crossing(r: &RefFn, tf: f64, level: f64) -> f64 {
    let f = |t: f64| r(t).z - level;
    let n = 400;
    let (mut a, mut b) = (0.0, tf);
    for k in 0..n {
        let (t0, t1) = (tf * k as f64 / n as f64, tf * (k + 1) as f64 / n as f64);
        if f(t0).signum() != f(t1).signum() {
            (a, b) = (t0, t1);
            break;
        }
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if f(m).signum() == f(a).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn model(c: &QuadrupedConstants) -> Result<Arc<SystemModel>> {
    let g = c.gravity;
    let bounds = BoxBounds::new(vec![-1.0, 0.0, -5.0, -5.0], vec![1.0, 1.0, 5.0, 5.0])?;
    Ok(Arc::new(
        SystemModel::new(
            "quadruped-analog",
            4,
            2,
            move |x: &State| dvector![x[2], x[3], 0.0, -g],
            |_: &State| dmatrix![0.0, 0.0; 0.0, 0.0; 1.0, 0.0; 0.0, 1.0],
        )?
        .with_state_bounds(bounds)?,
    ))
}

pub fn quadruped_analog_suite() -> Result<BenchmarkSuite> {
    quadruped_analog_suite_with(QuadrupedConstants::default())
}

pub fn quadruped_analog_suite_with(c: QuadrupedConstants) -> Result<BenchmarkSuite> {
    let b = Builder {
        model: model(&c)?,
        c: c.clone(),
    };
    let mut primitives = vec![b.pose("Lie", c.z_lie)?, b.pose("Stand", c.z_stand)?];
    for (arg, a) in &c.walk_amplitudes {
        primitives.push(b.walk(arg, *a)?);
    }
    primitives.push(b.jump()?);
    primitives.push(b.land()?);
    let scale = 4.0;
    let scenario = [(0.0, "Lie"), (3.0, "Walk(fast)"), (8.0, "Jump"), (11.0, "Walk(fast)"), (16.0, "Lie")]
        .into_iter()
        .map(|(t, g)| TimedGoal::new(scale * t, g))
        .collect();
    Ok(BenchmarkSuite {
        name: "quadruped-analog".into(),
        model: b.model,
        primitives,
        grid_policy: GridPolicy::default(),
        oracle: OracleConfig::new(c.horizon),
        scenario_start: "Lie".into(),
        scenario,
    })
}
