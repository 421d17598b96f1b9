//! Finite bounded-degree graphs with directed-edge indexing and per-edge
//! initial weights.
//!
//! Vertices are `0..n`. Every undirected edge gets an id and a canonical
//! orientation (low endpoint → high endpoint); a [`DirEdge`] is an edge id
//! plus an orientation bit. Graphs are immutable after construction and can
//! be shared freely across concurrent replicas.

mod expansion;
mod family;

pub use expansion::{cheeger_edge, cheeger_vertex, ExpansionError, Ratio, MAX_CHEEGER_VERTICES};
pub use family::{FamilyError, FamilySpec};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vertex = usize;
pub type EdgeId = usize;

/// A directed edge: an undirected edge id plus an orientation bit.
///
/// With `rev == false` the edge runs from the low endpoint to the high one.
/// The tail is the vertex the walker leaves, the head the vertex it enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirEdge {
    pub edge: EdgeId,
    pub rev: bool,
}

impl DirEdge {
    pub fn forward(edge: EdgeId) -> Self {
        DirEdge { edge, rev: false }
    }

    pub fn reverse(self) -> Self {
        DirEdge { edge: self.edge, rev: !self.rev }
    }

    /// Dense index in `0..2m`, used for per-directed-edge counters.
    pub fn index(self) -> usize {
        2 * self.edge + usize::from(self.rev)
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("vertex {0} out of range (graph has {1} vertices)")]
    VertexOutOfRange(Vertex, usize),
    #[error("self-loop at vertex {0}")]
    SelfLoop(Vertex),
    #[error("duplicate edge between {0} and {1}")]
    MultiEdge(Vertex, Vertex),
    #[error("edge weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("weight vector has length {0}, expected {1}")]
    WeightLength(usize, usize),
    #[error("vertices {0} and {1} are not connected")]
    Unreachable(Vertex, Vertex),
    #[error("invalid graph JSON: {0}")]
    Json(String),
}

/// Finite undirected graph with positive per-edge initial weights and a
/// designated start vertex.
#[derive(Clone, Debug)]
pub struct Graph {
    /// Per-vertex neighbor list, sorted by neighbor id: `(neighbor, edge id)`.
    adj: Vec<Vec<(Vertex, EdgeId)>>,
    /// Undirected edges with canonical `(low, high)` endpoints.
    edges: Vec<(Vertex, Vertex)>,
    /// Initial weight per undirected edge (`a_e` for LRRW, `J_e` for VRJP).
    weight: Vec<f64>,
    v0: Vertex,
    max_degree: usize,
}

/// JSON interchange form: `{"vertices": n, "edges": [[u, v, w], ...], "v0": k}`.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct GraphJson {
    pub vertices: usize,
    pub edges: Vec<(Vertex, Vertex, f64)>,
    pub v0: Vertex,
}

impl Graph {
    /// Builds a graph from an edge list, validating all structural
    /// invariants: no self-loops, no multi-edges, positive weights.
    pub fn from_edges(
        vertices: usize,
        v0: Vertex,
        edge_list: &[(Vertex, Vertex, f64)],
    ) -> Result<Graph, GraphError> {
        if v0 >= vertices {
            return Err(GraphError::VertexOutOfRange(v0, vertices));
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        let mut weight = Vec::with_capacity(edge_list.len());
        let mut adj: Vec<Vec<(Vertex, EdgeId)>> = vec![Vec::new(); vertices];
        for &(u, v, w) in edge_list {
            if u >= vertices {
                return Err(GraphError::VertexOutOfRange(u, vertices));
            }
            if v >= vertices {
                return Err(GraphError::VertexOutOfRange(v, vertices));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight(w));
            }
            let (lo, hi) = if u < v { (u, v) } else { (v, u) };
            if adj[lo].iter().any(|&(n, _)| n == hi) {
                return Err(GraphError::MultiEdge(lo, hi));
            }
            let id = edges.len();
            edges.push((lo, hi));
            weight.push(w);
            adj[lo].push((hi, id));
            adj[hi].push((lo, id));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let max_degree = adj.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Graph { adj, edges, weight, v0, max_degree })
    }

    pub fn vertex_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn v0(&self) -> Vertex {
        self.v0
    }

    pub fn with_v0(mut self, v0: Vertex) -> Result<Graph, GraphError> {
        if v0 >= self.vertex_count() {
            return Err(GraphError::VertexOutOfRange(v0, self.vertex_count()));
        }
        self.v0 = v0;
        Ok(self)
    }

    /// Degree bound `K`: the maximum over vertices of the adjacency size.
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn degree(&self, v: Vertex) -> usize {
        self.adj[v].len()
    }

    pub fn neighbors(&self, v: Vertex) -> &[(Vertex, EdgeId)] {
        &self.adj[v]
    }

    pub fn endpoints(&self, e: EdgeId) -> (Vertex, Vertex) {
        self.edges[e]
    }

    pub fn weight(&self, e: EdgeId) -> f64 {
        self.weight[e]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Sum of initial weights over edges incident to `v` (`a_v`).
    pub fn vertex_weight(&self, v: Vertex) -> f64 {
        self.adj[v].iter().map(|&(_, e)| self.weight[e]).sum()
    }

    pub fn set_uniform_weight(&mut self, w: f64) -> Result<(), GraphError> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(GraphError::NonPositiveWeight(w));
        }
        self.weight.iter_mut().for_each(|x| *x = w);
        Ok(())
    }

    pub fn set_weights(&mut self, ws: &[f64]) -> Result<(), GraphError> {
        if ws.len() != self.edges.len() {
            return Err(GraphError::WeightLength(ws.len(), self.edges.len()));
        }
        for &w in ws {
            if !(w > 0.0) || !w.is_finite() {
                return Err(GraphError::NonPositiveWeight(w));
            }
        }
        self.weight.copy_from_slice(ws);
        Ok(())
    }

    pub fn edge_between(&self, u: Vertex, v: Vertex) -> Option<EdgeId> {
        self.adj[u].iter().find(|&&(n, _)| n == v).map(|&(_, e)| e)
    }

    /// Directed edge from `from` to `to`, if adjacent.
    pub fn dir_edge(&self, from: Vertex, to: Vertex) -> Option<DirEdge> {
        let e = self.edge_between(from, to)?;
        Some(DirEdge { edge: e, rev: from > to })
    }

    /// Vertex the directed edge leaves (`e⁻` in the estimator bookkeeping).
    pub fn tail(&self, d: DirEdge) -> Vertex {
        let (lo, hi) = self.edges[d.edge];
        if d.rev { hi } else { lo }
    }

    /// Vertex the directed edge enters.
    pub fn head(&self, d: DirEdge) -> Vertex {
        let (lo, hi) = self.edges[d.edge];
        if d.rev { lo } else { hi }
    }

    /// Breadth-first distances from `v`; `None` for unreachable vertices.
    pub fn bfs_dist(&self, v: Vertex) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.vertex_count()];
        let mut queue = VecDeque::new();
        dist[v] = Some(0);
        queue.push_back(v);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for &(w, _) in &self.adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Distance from a vertex to an edge: the minimum over the two endpoint
    /// distances. Errors if the edge is unreachable from `v`.
    pub fn dist_vertex_edge(&self, v: Vertex, e: EdgeId) -> Result<u32, GraphError> {
        let dist = self.bfs_dist(v);
        let (a, b) = self.edges[e];
        match (dist[a], dist[b]) {
            (Some(da), Some(db)) => Ok(da.min(db)),
            (Some(da), None) => Ok(da),
            (None, Some(db)) => Ok(db),
            (None, None) => Err(GraphError::Unreachable(v, a)),
        }
    }

    /// Induced subgraph on the ball of radius `r` around `center`, weights
    /// inherited. Vertices are renumbered in BFS discovery order, so the
    /// center becomes vertex 0 and the new graph's `v0`. Returns the graph
    /// together with the original ids of the retained vertices.
    pub fn ball(&self, center: Vertex, r: u32) -> (Graph, Vec<Vertex>) {
        let dist = self.bfs_dist(center);
        let mut keep: Vec<Vertex> = Vec::new();
        let mut new_id = vec![usize::MAX; self.vertex_count()];
        // BFS order = ascending (distance, vertex id)
        let mut order: Vec<(u32, Vertex)> = dist
            .iter()
            .enumerate()
            .filter_map(|(v, d)| d.filter(|&d| d <= r).map(|d| (d, v)))
            .collect();
        order.sort_unstable();
        for (_, v) in order {
            new_id[v] = keep.len();
            keep.push(v);
        }
        let mut edge_list = Vec::new();
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            if new_id[u] != usize::MAX && new_id[v] != usize::MAX {
                edge_list.push((new_id[u], new_id[v], self.weight[e]));
            }
        }
        let g = Graph::from_edges(keep.len(), 0, &edge_list)
            .expect("ball of a valid graph is valid");
        (g, keep)
    }

    /// Edge boundary `∂_E(A) = {(x,y) ∈ E : x ∈ A, y ∉ A}`, returned as
    /// undirected edge ids (each crossing edge appears once).
    pub fn edge_boundary(&self, in_set: &[bool]) -> Vec<EdgeId> {
        self.edges
            .iter()
            .enumerate()
            .filter(|&(_, &(u, v))| in_set[u] != in_set[v])
            .map(|(e, _)| e)
            .collect()
    }

    /// External vertex boundary `∂A = {x ∉ A : dist(x, A) = 1}`.
    pub fn vertex_boundary(&self, in_set: &[bool]) -> Vec<Vertex> {
        (0..self.vertex_count())
            .filter(|&x| !in_set[x] && self.adj[x].iter().any(|&(n, _)| in_set[n]))
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        if self.vertex_count() == 0 {
            return true;
        }
        self.bfs_dist(0).iter().all(Option::is_some)
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            vertices: self.vertex_count(),
            edges: self
                .edges
                .iter()
                .zip(&self.weight)
                .map(|(&(u, v), &w)| (u, v, w))
                .collect(),
            v0: self.v0,
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Graph, GraphError> {
        Graph::from_edges(json.vertices, json.v0, &json.edges)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("graph json serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Graph, GraphError> {
        let json: GraphJson =
            serde_json::from_str(s).map_err(|e| GraphError::Json(e.to_string()))?;
        Graph::from_json(&json)
    }
}
