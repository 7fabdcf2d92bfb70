//! Grown graphs, their structural metrics and text exports.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp on synaptic weights; a zero weight would mean "no edge".
pub const MIN_WEIGHT: f64 = 0.01;
pub const MAX_WEIGHT: f64 = 1.0;

/// Cell coordinates on the developmental field (`x` is the column).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Position {
    pub x: usize,
    pub y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Directed weighted graph produced by development.
///
/// Node ids are dense and follow creation order; edges keep insertion order
/// and never repeat a `(source, target)` pair.
#[derive(Debug, Clone, Default)]
pub struct GrownGraph {
    positions: Vec<Position>,
    edges: Vec<Edge>,
    index: HashMap<(usize, usize), usize>,
}

impl PartialEq for GrownGraph {
    fn eq(&self, other: &Self) -> bool {
        self.positions == other.positions
            && self.edges.len() == other.edges.len()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| {
                a.source == b.source
                    && a.target == b.target
                    && a.weight.to_bits() == b.weight.to_bits()
            })
    }
}

impl GrownGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a graph from explicit parts, checking ids, duplicates and weights.
    pub fn from_parts(positions: Vec<Position>, edges: Vec<Edge>) -> Result<Self> {
        let mut graph = GrownGraph {
            positions,
            ..Default::default()
        };
        for e in edges {
            if e.source >= graph.node_count() || e.target >= graph.node_count() {
                return Err(Error::Contract(format!(
                    "edge {} -> {} references a missing node",
                    e.source, e.target
                )));
            }
            if !(MIN_WEIGHT..=MAX_WEIGHT).contains(&e.weight) {
                return Err(Error::Contract(format!(
                    "edge {} -> {} weight {} outside [0.01, 1]",
                    e.source, e.target, e.weight
                )));
            }
            if !graph.add_edge(e.source, e.target, e.weight) {
                return Err(Error::Contract(format!(
                    "duplicate edge or self-loop {} -> {}",
                    e.source, e.target
                )));
            }
        }
        Ok(graph)
    }

    pub fn node_count(&self) -> usize {
        self.positions.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn add_node(&mut self, position: Position) -> usize {
        self.positions.push(position);
        self.positions.len() - 1
    }

    /// Insert `source -> target` unless it already exists or is a self-loop.
    pub fn add_edge(&mut self, source: usize, target: usize, weight: f64) -> bool {
        if source == target || self.index.contains_key(&(source, target)) {
            return false;
        }
        self.index.insert((source, target), self.edges.len());
        self.edges.push(Edge {
            source,
            target,
            weight,
        });
        true
    }

    pub fn contains_edge(&self, source: usize, target: usize) -> bool {
        self.index.contains_key(&(source, target))
    }

    pub(crate) fn edges_mut(&mut self) -> &mut [Edge] {
        &mut self.edges
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.node_count()];
        for e in &self.edges {
            deg[e.target] += 1;
        }
        deg
    }

    fn out_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for e in &self.edges {
            adj[e.source].push(e.target);
        }
        adj
    }

    pub fn metrics(&self) -> GraphMetrics {
        metrics(self)
    }

    pub fn export(&self, format: ExportFormat) -> String {
        export(self, format)
    }

    pub fn to_edge_json(&self) -> String {
        export(self, ExportFormat::EdgeJson)
    }

    pub fn from_edge_json(text: &str) -> Result<Self> {
        let doc: EdgeJsonDoc = serde_json::from_str(text)?;
        let mut positions = Vec::with_capacity(doc.nodes.len());
        for (i, node) in doc.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::Config(format!(
                    "node ids must be dense and ordered; found {} at position {i}",
                    node.id
                )));
            }
            positions.push(Position {
                x: node.x,
                y: node.y,
            });
        }
        let edges = doc
            .edges
            .iter()
            .map(|e| Edge {
                source: e.s,
                target: e.t,
                weight: e.w,
            })
            .collect();
        GrownGraph::from_parts(positions, edges)
    }
}

/// Structural quantities used by the fitness functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// Nodes with in-degree zero.
    pub n_sources: usize,
    pub weakly_connected: bool,
    /// Longest finite directed shortest path.
    pub diameter: usize,
}

/// Compute node/edge/source counts, weak connectivity and directed diameter.
///
/// The empty graph counts as not weakly connected. The diameter only looks
/// at reachable ordered pairs; a graph with two or more nodes has diameter
/// at least 1, and graphs with at most one node have diameter 0.
pub fn metrics(graph: &GrownGraph) -> GraphMetrics {
    let n = graph.node_count();
    let n_sources = graph.in_degrees().iter().filter(|d| **d == 0).count();
    GraphMetrics {
        n_nodes: n,
        n_edges: graph.edge_count(),
        n_sources,
        weakly_connected: weakly_connected(graph),
        diameter: diameter(graph),
    }
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

pub fn weakly_connected(graph: &GrownGraph) -> bool {
    let n = graph.node_count();
    if n == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..n).collect();
    let mut components = n;
    for e in graph.edges() {
        let (a, b) = (find(&mut parent, e.source), find(&mut parent, e.target));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components == 1
}

pub fn diameter(graph: &GrownGraph) -> usize {
    let n = graph.node_count();
    if n <= 1 {
        return 0;
    }
    let adj = graph.out_adjacency();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::with_capacity(n);
    let mut longest = 1;
    for start in 0..n {
        if adj[start].is_empty() {
            continue;
        }
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[start] = 0;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            let next = dist[u] + 1;
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = next;
                    longest = longest.max(next);
                    queue.push_back(v);
                }
            }
        }
    }
    longest
}

/// Text export formats for grown graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    EdgeJson,
    Dot,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-json" | "json" => Ok(ExportFormat::EdgeJson),
            "dot" => Ok(ExportFormat::Dot),
            other => Err(Error::Config(format!("unknown export format `{other}`"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    x: usize,
    y: usize,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    s: usize,
    t: usize,
    w: f64,
}

#[derive(Serialize, Deserialize)]
struct EdgeJsonDoc {
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

pub fn export(graph: &GrownGraph, format: ExportFormat) -> String {
    match format {
        ExportFormat::EdgeJson => {
            let doc = EdgeJsonDoc {
                nodes: graph
                    .positions()
                    .iter()
                    .enumerate()
                    .map(|(id, p)| NodeDoc { id, x: p.x, y: p.y })
                    .collect(),
                edges: graph
                    .edges()
                    .iter()
                    .map(|e| EdgeDoc {
                        s: e.source,
                        t: e.target,
                        w: e.weight,
                    })
                    .collect(),
            };
            serde_json::to_string(&doc).expect("graph serialisation cannot fail")
        }
        ExportFormat::Dot => {
            let mut out = String::from("digraph grown {\n");
            for (id, p) in graph.positions().iter().enumerate() {
                let _ = writeln!(out, "  {id} [pos=\"{},{}!\"];", p.x, p.y);
            }
            for e in graph.edges() {
                let _ = writeln!(
                    out,
                    "  {} -> {} [label=\"{}\", weight={}];",
                    e.source, e.target, e.weight, e.weight
                );
            }
            out.push_str("}\n");
            out
        }
    }
}
