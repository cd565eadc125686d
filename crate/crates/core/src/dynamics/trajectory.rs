use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::State;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    EnteredExplicitRoa,
    LeftSafeSet,
    HorizonReached,
    StateLeftBounds,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::EnteredExplicitRoa => "entered-explicit-roa",
            EventKind::LeftSafeSet => "left-safe-set",
            EventKind::HorizonReached => "horizon-reached",
            EventKind::StateLeftBounds => "state-left-bounds",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    /// Index of the monitor that fired, when the event came from a monitor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monitor: Option<usize>,
}

/// Flow samples on the integrator's accepted steps, plus the terminal event.
///
/// Times are relative to activation: the first sample is at `t = 0` and the
/// primitive-local clock reads `activation_time + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub(crate) times: Vec<f64>,
    pub(crate) states: Vec<State>,
    pub(crate) events: Vec<Event>,
    pub(crate) activation_time: f64,
}

impl Trajectory {
    pub(crate) fn start(x0: State, activation_time: f64) -> Self {
        Self {
            times: vec![0.0],
            states: vec![x0],
            events: Vec::new(),
            activation_time,
        }
    }

    pub(crate) fn push(&mut self, t: f64, x: State) {
        self.times.push(t);
        self.states.push(x);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn activation_time(&self) -> f64 {
        self.activation_time
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory always has a first sample")
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory always has a first sample")
    }

    pub fn terminal_event(&self) -> Option<&Event> {
        self.events.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &State)> {
        self.times.iter().copied().zip(self.states.iter())
    }

    /// CSV with header `t,x0,x1,...,event`. Each event gets its own row carrying
    /// the state at the event time.
    pub fn to_csv(&self) -> String {
        let dim = self.states.first().map_or(0, |x| x.len());
        let mut out = String::from("t");
        for i in 0..dim {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",event\n");
        let write_row = |out: &mut String, t: f64, x: &State, event: &str| {
            let _ = write!(out, "{t:.17e}");
            for v in x.iter() {
                let _ = write!(out, ",{v:.17e}");
            }
            let _ = writeln!(out, ",{event}");
        };
        for (t, x) in self.iter() {
            write_row(&mut out, t, x, "");
        }
        for ev in &self.events {
            let idx = self
                .times
                .iter()
                .rposition(|t| *t <= ev.t)
                .unwrap_or(0);
            write_row(&mut out, ev.t, &self.states[idx], ev.kind.as_str());
        }
        out
    }
}

/// Array form used when a trajectory is inlined in JSON audit records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) struct TrajectoryRecord {
    pub activation_time: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub events: Vec<Event>,
}

impl From<&Trajectory> for TrajectoryRecord {
    fn from(tr: &Trajectory) -> Self {
        Self {
            activation_time: tr.activation_time,
            t: tr.times.clone(),
            x: tr.states.iter().map(|s| s.iter().copied().collect()).collect(),
            events: tr.events.clone(),
        }
    }
}

impl From<TrajectoryRecord> for Trajectory {
    fn from(rec: TrajectoryRecord) -> Self {
        Self {
            times: rec.t,
            states: rec.x.into_iter().map(State::from_vec).collect(),
            events: rec.events,
            activation_time: rec.activation_time,
        }
    }
}

impl Serialize for Trajectory {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        TrajectoryRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Trajectory {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        TrajectoryRecord::deserialize(d).map(Into::into)
    }
}
