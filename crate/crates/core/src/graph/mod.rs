//! Motion-primitive graph construction by oracle sweeps over `(t_A, t_B)` grids.

mod export;
mod grid;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use export::GraphFormat;
pub use grid::{GridDerivation, GridPolicy, TimeGrid};

use crate::canonical::{sha256_hex, to_canonical_string};
use crate::error::{Error, Result};
use crate::oracle::{safety_oracle, OracleConfig, VerdictReason};
use crate::primitives::{MotionPrimitive, PrimitiveClass};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeClass {
    /// Can be initiated at every exit time of the source.
    One,
    /// Can be initiated only at some exit times.
    Two,
}

impl EdgeClass {
    pub fn number(&self) -> u8 {
        match self {
            EdgeClass::One => 1,
            EdgeClass::Two => 2,
        }
    }
}

impl fmt::Display for EdgeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl Serialize for EdgeClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.number())
    }
}

impl<'de> Deserialize<'de> for EdgeClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match u8::deserialize(d)? {
            1 => Ok(EdgeClass::One),
            2 => Ok(EdgeClass::Two),
            other => Err(serde::de::Error::custom(format!("edge class must be 1 or 2, got {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionEdge {
    pub from: String,
    pub to: String,
    pub class: EdgeClass,
    /// Accepted `(t_A, t_B)` cells, `t_A` outer and `t_B` inner, ascending.
    pub feasible: Vec<(f64, f64)>,
    pub horizon: f64,
}

impl TransitionEdge {
    /// Distinct feasible exit times of the source, ascending.
    pub fn feasible_exit_times(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (ta, _) in &self.feasible {
            if out.last() != Some(ta) {
                out.push(*ta);
            }
        }
        out
    }

    /// Entry times paired with the exit time `ta`.
    pub fn entry_times_for(&self, ta: f64) -> Vec<f64> {
        self.feasible.iter().filter(|(a, _)| *a == ta).map(|(_, b)| *b).collect()
    }
}

/// Oracle outcome counts for one ordered pair.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTally {
    pub from: String,
    pub to: String,
    pub cells: usize,
    pub accepted: usize,
    pub safety_violated: usize,
    pub horizon_exhausted: usize,
    pub left_state_bounds: usize,
    pub integration_failed: usize,
    /// Cells whose oracle call returned an error instead of a verdict.
    pub errors: usize,
}

impl PairTally {
    fn record(&mut self, reason: Option<VerdictReason>) {
        self.cells += 1;
        match reason {
            Some(VerdictReason::EnteredExplicitRoa) => self.accepted += 1,
            Some(VerdictReason::SafetyViolated) => self.safety_violated += 1,
            Some(VerdictReason::HorizonExhausted) => self.horizon_exhausted += 1,
            Some(VerdictReason::LeftStateBounds) => self.left_state_bounds += 1,
            Some(VerdictReason::IntegrationFailed) => self.integration_failed += 1,
            None => self.errors += 1,
        }
    }
}

/// One oracle evaluation of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub ta: f64,
    pub tb: f64,
    /// `None` when the oracle call errored.
    pub reason: Option<VerdictReason>,
    pub event_time: f64,
}

impl CellResult {
    pub fn accepted(&self) -> bool {
        self.reason == Some(VerdictReason::EnteredExplicitRoa)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCheck {
    pub edge: Option<TransitionEdge>,
    pub tally: PairTally,
    pub cells: Vec<CellResult>,
}

fn evaluate_cell(a: &MotionPrimitive, b: &MotionPrimitive, ta: f64, tb: f64, cfg: &OracleConfig) -> CellResult {
    let verdict = a
        .setpoint_at(ta)
        .and_then(|x0| safety_oracle(b, &x0, tb, &OracleConfig { record_trajectory: false, ..*cfg }));
    match verdict {
        Ok(v) => CellResult {
            ta,
            tb,
            reason: Some(v.reason),
            event_time: v.event_time,
        },
        Err(_) => CellResult {
            ta,
            tb,
            reason: None,
            event_time: f64::NAN,
        },
    }
}

fn assemble(a: &MotionPrimitive, b: &MotionPrimitive, grid_a: &TimeGrid, cells: Vec<CellResult>, horizon: f64) -> TransitionCheck {
    let mut tally = PairTally {
        from: a.name().to_string(),
        to: b.name().to_string(),
        ..Default::default()
    };
    let mut feasible = Vec::new();
    for c in &cells {
        tally.record(c.reason);
        if c.accepted() {
            feasible.push((c.ta, c.tb));
        }
    }
    let covered: BTreeSet<u64> = feasible.iter().map(|(ta, _)| ta.to_bits()).collect();
    let edge = (!feasible.is_empty()).then(|| TransitionEdge {
        from: a.name().to_string(),
        to: b.name().to_string(),
        class: if grid_a.points.iter().all(|t| covered.contains(&t.to_bits())) {
            EdgeClass::One
        } else {
            EdgeClass::Two
        },
        feasible,
        horizon,
    });
    TransitionCheck { edge, tally, cells }
}

/// Runs the oracle from `x*_A(t_A)` into `B` at `t_B` over the grid product.
/// Oracle errors count as rejections and are tallied.
pub fn check_transition(
    a: &MotionPrimitive,
    b: &MotionPrimitive,
    grid_a: &TimeGrid,
    grid_b: &TimeGrid,
    cfg: &OracleConfig,
) -> TransitionCheck {
    let pairs: Vec<(f64, f64)> = grid_a
        .points
        .iter()
        .flat_map(|&ta| grid_b.points.iter().map(move |&tb| (ta, tb)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(ta, tb)| evaluate_cell(a, b, ta, tb, cfg))
        .collect();
    assemble(a, b, grid_a, cells, cfg.horizon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub name: String,
    pub kind: PrimitiveClass,
    pub argument: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeGrids {
    pub entry: TimeGrid,
    pub exit: TimeGrid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildMeta {
    /// Hash of the primitive descriptors, oracle settings and grid policy.
    pub fingerprint: String,
    pub model: String,
    pub oracle: OracleConfig,
    pub grid_policy: GridPolicy,
    pub grids: BTreeMap<String, NodeGrids>,
    pub tallies: Vec<PairTally>,
    /// Hash of the project configuration that produced this build, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitiveGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<TransitionEdge>,
    pub meta: BuildMeta,
}

impl MotionPrimitiveGraph {
    pub fn node(&self, name: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn has_node(&self, name: &str) -> bool {
        self.node(name).is_some()
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<&TransitionEdge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    /// Successor names in lexicographic order.
    pub fn successors(&self, from: &str) -> Vec<&str> {
        let mut out: Vec<&str> = self.edges.iter().filter(|e| e.from == from).map(|e| e.to.as_str()).collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_canonical_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_dot(&self) -> String {
        export::to_dot(self)
    }

    pub fn export(&self, format: GraphFormat) -> Result<String> {
        match format {
            GraphFormat::Dot => Ok(self.to_dot()),
            GraphFormat::Json => self.to_json(),
        }
    }

    /// Sha256 of the canonical JSON text.
    pub fn canonical_hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    /// Edge endpoints exist, at most one edge per ordered pair, no empty feasible sets.
    pub fn validate(&self) -> Result<()> {
        let names: BTreeSet<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        if names.len() != self.nodes.len() {
            return Err(Error::config("graph has duplicate node names"));
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if !names.contains(e.from.as_str()) || !names.contains(e.to.as_str()) {
                return Err(Error::config(format!("edge {} -> {} references a missing node", e.from, e.to)));
            }
            if !seen.insert((e.from.as_str(), e.to.as_str())) {
                return Err(Error::config(format!("duplicate edge {} -> {}", e.from, e.to)));
            }
            if e.feasible.is_empty() {
                return Err(Error::config(format!("edge {} -> {} has no feasible cells", e.from, e.to)));
            }
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct PrimitiveDescriptor<'a> {
    name: &'a str,
    family: &'a str,
    argument: Option<&'a str>,
    setpoint: crate::primitives::SetpointKind,
    law: &'a str,
    constraints: Vec<&'a str>,
    schedule: Option<&'a [crate::primitives::ScheduleWindow]>,
    radius: f64,
    weights: &'a [f64],
    next_primitive: Option<&'a str>,
}

fn fingerprint(primitives: &[&MotionPrimitive], policy: &GridPolicy, cfg: &OracleConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Fp<'a> {
        model: &'a str,
        state_dim: usize,
        input_dim: usize,
        primitives: Vec<PrimitiveDescriptor<'a>>,
        policy: &'a GridPolicy,
        oracle: &'a OracleConfig,
    }
    let model = primitives.first().map(|p| p.model());
    let fp = Fp {
        model: model.map_or("", |m| m.name()),
        state_dim: model.map_or(0, |m| m.state_dim()),
        input_dim: model.map_or(0, |m| m.input_dim()),
        primitives: primitives
            .iter()
            .map(|p| PrimitiveDescriptor {
                name: p.name(),
                family: p.family(),
                argument: p.argument(),
                setpoint: p.setpoint().kind(),
                law: p.law().description(),
                constraints: p.safety().constraints().iter().map(|c| c.name()).collect(),
                schedule: p.safety().schedule(),
                radius: p.radius(),
                weights: &p.explicit_roa().weights,
                next_primitive: p.next_primitive(),
            })
            .collect(),
        policy,
        oracle: cfg,
    };
    Ok(sha256_hex(to_canonical_string(&fp)?.as_bytes()))
}

/// Algorithm 1 over every ordered pair, self-pairs included. A transient source
/// is checked only against its declared next primitive, from its exit grid.
pub fn build_graph(primitives: &[MotionPrimitive], policy: &GridPolicy, cfg: &OracleConfig) -> Result<MotionPrimitiveGraph> {
    policy.validate()?;
    cfg.validate()?;
    let mut sorted: Vec<&MotionPrimitive> = primitives.iter().collect();
    sorted.sort_by(|a, b| a.name().cmp(b.name()));
    if let Some(w) = sorted.windows(2).find(|w| w[0].name() == w[1].name()) {
        return Err(Error::config(format!("duplicate primitive name `{}`", w[0].name())));
    }
    if let Some(first) = sorted.first() {
        if let Some(p) = sorted.iter().find(|p| !Arc::ptr_eq(p.model(), first.model())) {
            return Err(Error::config(format!(
                "primitive `{}` uses model `{}`, expected `{}`",
                p.name(),
                p.model().name(),
                first.model().name()
            )));
        }
    }

    let grids: Vec<NodeGrids> = sorted
        .iter()
        .map(|p| NodeGrids {
            entry: TimeGrid::entry(p, policy),
            exit: TimeGrid::exit(p, policy),
        })
        .collect();

    let mut pairs = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        for (j, b) in sorted.iter().enumerate() {
            if a.class() == PrimitiveClass::Transient && a.next_primitive() != Some(b.name()) {
                continue;
            }
            pairs.push((i, j));
        }
    }
    let cells: Vec<(usize, f64, f64)> = pairs
        .iter()
        .enumerate()
        .flat_map(|(k, &(i, j))| {
            let exit = &grids[i].exit.points;
            let entry = &grids[j].entry.points;
            exit.iter().flat_map(move |&ta| entry.iter().map(move |&tb| (k, ta, tb)))
        })
        .collect();
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(k, ta, tb)| {
            let (i, j) = pairs[k];
            evaluate_cell(sorted[i], sorted[j], ta, tb, cfg)
        })
        .collect();

    let mut per_pair: Vec<Vec<CellResult>> = vec![Vec::new(); pairs.len()];
    for (&(k, _, _), r) in cells.iter().zip(results) {
        per_pair[k].push(r);
    }
    let mut edges = Vec::new();
    let mut tallies = Vec::new();
    for (&(i, j), cells) in pairs.iter().zip(per_pair) {
        let check = assemble(sorted[i], sorted[j], &grids[i].exit, cells, cfg.horizon);
        tallies.push(check.tally);
        edges.extend(check.edge);
    }

    let graph = MotionPrimitiveGraph {
        nodes: sorted
            .iter()
            .map(|p| GraphNode {
                name: p.name().to_string(),
                kind: p.class(),
                argument: p.argument().map(str::to_string),
            })
            .collect(),
        edges,
        meta: BuildMeta {
            fingerprint: fingerprint(&sorted, policy, cfg)?,
            model: sorted.first().map_or(String::new(), |p| p.model().name().to_string()),
            oracle: *cfg,
            grid_policy: *policy,
            grids: sorted
                .iter()
                .zip(grids)
                .map(|(p, g)| (p.name().to_string(), g))
                .collect(),
            tallies,
            config_hash: None,
        },
    };
    Ok(graph)
}
