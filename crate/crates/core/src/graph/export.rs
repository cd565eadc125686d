use std::fmt::Write as _;
use std::str::FromStr;

use super::{EdgeClass, MotionPrimitiveGraph};
use crate::error::Error;
use crate::primitives::PrimitiveClass;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

impl FromStr for GraphFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "dot" => Ok(GraphFormat::Dot),
            "json" => Ok(GraphFormat::Json),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Box for fixed, ellipse for periodic, diamond for transient nodes; solid
/// Class 1 and dashed Class 2 edges.
pub(super) fn to_dot(g: &MotionPrimitiveGraph) -> String {
    let mut out = String::from("digraph motion_primitive_graph {\n");
    if let Some(h) = &g.meta.config_hash {
        let _ = writeln!(out, "  // config-hash: {h}");
    }
    for n in &g.nodes {
        let shape = match n.kind {
            PrimitiveClass::Fixed => "box",
            PrimitiveClass::Periodic => "ellipse",
            PrimitiveClass::Transient => "diamond",
        };
        let _ = writeln!(out, "  {} [shape={shape}];", quote(&n.name));
    }
    for e in &g.edges {
        let style = match e.class {
            EdgeClass::One => "solid",
            EdgeClass::Two => "dashed",
        };
        let _ = writeln!(
            out,
            "  {} -> {} [style={style}, label=\"{}\"];",
            quote(&e.from),
            quote(&e.to),
            e.class
        );
    }
    out.push_str("}\n");
    out
}
