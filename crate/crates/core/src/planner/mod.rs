//! Depth-first planning over the primitive graph and simulated sequence execution.

mod exec;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use exec::{
    execute_sequence, naive_execute, ExecConfig, ExecutionLog, GoalRecord, Outcome, SegmentRecord, SwitchRecord,
    TimedGoal,
};

use crate::error::{Error, Result};
use crate::graph::{EdgeClass, MotionPrimitiveGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hop {
    pub from: String,
    pub to: String,
    pub class: EdgeClass,
    /// For Class 2 hops, the `(t_A, t_B)` cells to wait for.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feasible: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimitivePath {
    pub nodes: Vec<String>,
    pub hops: Vec<Hop>,
}

impl PrimitivePath {
    pub fn start(&self) -> &str {
        &self.nodes[0]
    }

    pub fn goal(&self) -> &str {
        self.nodes.last().expect("paths are never empty")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

fn adjacency(g: &MotionPrimitiveGraph) -> BTreeMap<&str, Vec<&str>> {
    let mut adj: BTreeMap<&str, Vec<&str>> = g.nodes.iter().map(|n| (n.name.as_str(), Vec::new())).collect();
    for e in &g.edges {
        adj.entry(e.from.as_str()).or_default().push(e.to.as_str());
    }
    for v in adj.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    adj
}

fn dfs<'g>(adj: &BTreeMap<&'g str, Vec<&'g str>>, node: &'g str, goal: &str, visited: &mut BTreeSet<&'g str>, path: &mut Vec<&'g str>) -> bool {
    visited.insert(node);
    path.push(node);
    if node == goal {
        return true;
    }
    for &next in adj.get(node).map(Vec::as_slice).unwrap_or(&[]) {
        if !visited.contains(next) && dfs(adj, next, goal, visited, path) {
            return true;
        }
    }
    path.pop();
    false
}

fn reachable_from<'g>(adj: &BTreeMap<&'g str, Vec<&'g str>>, start: &'g str) -> BTreeSet<&'g str> {
    let mut seen = BTreeSet::from([start]);
    let mut stack = vec![start];
    while let Some(n) = stack.pop() {
        for &m in adj.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(m) {
                stack.push(m);
            }
        }
    }
    seen
}

/// First path found by depth-first search with lexicographic neighbour order.
pub fn plan_path(g: &MotionPrimitiveGraph, start: &str, goal: &str) -> Result<PrimitivePath> {
    for name in [start, goal] {
        if !g.has_node(name) {
            return Err(Error::UnknownPrimitive(name.to_string()));
        }
    }
    let adj = adjacency(g);
    let mut visited = BTreeSet::new();
    let mut path = Vec::new();
    let start_key = adj.get_key_value(start).map(|(k, _)| *k).expect("checked above");
    if !dfs(&adj, start_key, goal, &mut visited, &mut path) {
        let reachable = reachable_from(&adj, start_key).into_iter().map(str::to_string).collect();
        let mut reverse: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for (from, tos) in &adj {
            for to in tos {
                reverse.entry(to).or_default().push(from);
            }
        }
        let goal_key = adj.get_key_value(goal).map(|(k, _)| *k).expect("checked above");
        let goal_component = reachable_from(&reverse, goal_key).into_iter().map(str::to_string).collect();
        return Err(Error::Unreachable {
            start: start.to_string(),
            goal: goal.to_string(),
            reachable,
            goal_component,
        });
    }
    let hops = path
        .windows(2)
        .map(|w| {
            let e = g.edge(w[0], w[1]).expect("DFS follows stored edges");
            Hop {
                from: e.from.clone(),
                to: e.to.clone(),
                class: e.class,
                feasible: if e.class == EdgeClass::Two { e.feasible.clone() } else { Vec::new() },
            }
        })
        .collect();
    Ok(PrimitivePath {
        nodes: path.into_iter().map(str::to_string).collect(),
        hops,
    })
}

/// `(current, goal) -> path` for every connected ordered pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub entries: BTreeMap<String, BTreeMap<String, PrimitivePath>>,
    /// Ordered pairs without a path.
    pub unreachable: Vec<(String, String)>,
}

impl LookupTable {
    pub fn get(&self, current: &str, goal: &str) -> Option<&PrimitivePath> {
        self.entries.get(current)?.get(goal)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &PrimitivePath)> {
        self.entries
            .iter()
            .flat_map(|(a, m)| m.iter().map(move |(b, p)| (a.as_str(), b.as_str(), p)))
    }
}

pub fn build_lookup_table(g: &MotionPrimitiveGraph) -> LookupTable {
    let mut table = LookupTable::default();
    for a in &g.nodes {
        for b in &g.nodes {
            match plan_path(g, &a.name, &b.name) {
                Ok(p) => {
                    table.entries.entry(a.name.clone()).or_default().insert(b.name.clone(), p);
                }
                Err(_) => table.unreachable.push((a.name.clone(), b.name.clone())),
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{BuildMeta, GraphNode, GridPolicy, TransitionEdge};
    use crate::oracle::OracleConfig;
    use crate::primitives::PrimitiveClass;

    pub(crate) fn toy_graph(nodes: &[&str], edges: &[(&str, &str, EdgeClass)]) -> MotionPrimitiveGraph {
        MotionPrimitiveGraph {
            nodes: nodes
                .iter()
                .map(|n| GraphNode {
                    name: n.to_string(),
                    kind: PrimitiveClass::Fixed,
                    argument: None,
                })
                .collect(),
            edges: edges
                .iter()
                .map(|(a, b, c)| TransitionEdge {
                    from: a.to_string(),
                    to: b.to_string(),
                    class: *c,
                    feasible: vec![(0.0, 0.0)],
                    horizon: 1.0,
                })
                .collect(),
            meta: BuildMeta {
                fingerprint: String::new(),
                model: String::new(),
                oracle: OracleConfig::new(1.0),
                grid_policy: GridPolicy::default(),
                grids: Default::default(),
                tallies: Vec::new(),
                config_hash: None,
            },
        }
    }

    #[test]
    fn trivial_path() {
        let g = toy_graph(&["a"], &[]);
        let p = plan_path(&g, "a", "a").unwrap();
        assert_eq!(p.nodes, vec!["a"]);
        assert!(p.hops.is_empty());
    }

    #[test]
    fn lexicographic_dfs() {
        use EdgeClass::*;
        // a -> c directly exists, but DFS explores b first.
        let g = toy_graph(
            &["a", "b", "c"],
            &[("a", "c", One), ("a", "b", One), ("b", "c", Two), ("a", "a", One)],
        );
        let p = plan_path(&g, "a", "c").unwrap();
        assert_eq!(p.nodes, vec!["a", "b", "c"]);
        assert_eq!(p.hops[1].class, Two);
        assert_eq!(p.hops[1].feasible, vec![(0.0, 0.0)]);
    }

    #[test]
    fn dead_end_backtracks() {
        use EdgeClass::*;
        let g = toy_graph(&["a", "b", "c", "d"], &[("a", "b", One), ("a", "c", One), ("c", "d", One)]);
        assert_eq!(plan_path(&g, "a", "d").unwrap().nodes, vec!["a", "c", "d"]);
    }

    #[test]
    fn unreachable_names_components() {
        let g = toy_graph(&["a", "b"], &[("b", "a", EdgeClass::One)]);
        match plan_path(&g, "a", "b") {
            Err(Error::Unreachable { reachable, goal_component, .. }) => {
                assert_eq!(reachable, vec!["a"]);
                assert_eq!(goal_component, vec!["b"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(plan_path(&g, "a", "zz"), Err(Error::UnknownPrimitive(_))));
    }

    #[test]
    fn lookup_tables() {
        let empty = toy_graph(&[], &[]);
        assert!(build_lookup_table(&empty).is_empty());
        let single = toy_graph(&["a"], &[]);
        assert_eq!(build_lookup_table(&single).len(), 1);
        let g = toy_graph(&["a", "b", "c"], &[("a", "b", EdgeClass::One)]);
        let t = build_lookup_table(&g);
        assert_eq!(t.len(), 4);
        assert_eq!(t.unreachable.len(), 5);
        for (a, b, p) in t.iter() {
            assert_eq!(p, &plan_path(&g, a, b).unwrap());
        }
    }
}
