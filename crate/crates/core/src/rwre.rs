//! Random walks in a fixed environment.
//!
//! An [`Environment`] carries positive weights on edges (the reversible walk
//! `P^W(v,w) = W_{⟨v,w⟩}/W_v`) or on vertices (the VRJP environment walk).
//! Besides the step law this module provides the i.i.d. exit-sequence
//! construction used to analyze the `Q` estimator under a fixed environment,
//! the exact geometric-series oracle for its conditional `s`-moment, the
//! Pólya/Beta limit oracle, and the stationary measure `π(v) = W_v / 2W`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeId, Graph, Vertex};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("environment has {0} weights, expected {1}")]
    WeightLength(usize, usize),
    #[error("expected an {0}-weighted environment")]
    WrongKind(&'static str),
    #[error("moment oracle needs p strictly inside (0,1), got {0}")]
    DegenerateP(f64),
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    EdgeWeighted,
    VertexWeighted,
}

/// Declared normalization of an environment. Ratios are what the estimators
/// target, so this is bookkeeping: `FirstEdge` pins `W_{e₁} = 1`,
/// `StartVertex` pins `W_{v₀} = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    FirstEdge,
    StartVertex,
    #[default]
    Unnormalized,
}

/// Positive weights on the edges or the vertices of a graph.
#[derive(Clone, Debug)]
pub struct Environment {
    kind: EnvironmentKind,
    weights: Vec<f64>,
    normalization: Normalization,
    /// For edge-weighted environments: cached `W_v = Σ_{e∋v} W_e`.
    vertex_total: Vec<f64>,
}

/// Serialized form: `{"kind": ..., "weights": [...], "normalization": ...}`.
#[derive(Serialize, Deserialize, Debug, Clone)]
pub struct EnvironmentJson {
    pub kind: EnvironmentKind,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub normalization: Normalization,
}

impl Environment {
    pub fn edge_weighted(g: &Graph, weights: Vec<f64>) -> Result<Environment, EnvError> {
        if weights.len() != g.edge_count() {
            return Err(EnvError::WeightLength(weights.len(), g.edge_count()));
        }
        check_positive(&weights)?;
        let vertex_total = (0..g.vertex_count())
            .map(|v| g.neighbors(v).iter().map(|&(_, e)| weights[e]).sum())
            .collect();
        Ok(Environment {
            kind: EnvironmentKind::EdgeWeighted,
            weights,
            normalization: Normalization::Unnormalized,
            vertex_total,
        })
    }

    pub fn vertex_weighted(g: &Graph, weights: Vec<f64>) -> Result<Environment, EnvError> {
        if weights.len() != g.vertex_count() {
            return Err(EnvError::WeightLength(weights.len(), g.vertex_count()));
        }
        check_positive(&weights)?;
        Ok(Environment {
            kind: EnvironmentKind::VertexWeighted,
            weights,
            normalization: Normalization::Unnormalized,
            vertex_total: Vec::new(),
        })
    }

    /// Uniform edge weights — handy for smoke tests and symmetric laws.
    pub fn uniform_edges(g: &Graph, w: f64) -> Environment {
        Environment::edge_weighted(g, vec![w; g.edge_count()])
            .expect("uniform positive weights are valid")
    }

    pub fn kind(&self) -> EnvironmentKind {
        self.kind
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn edge_weight(&self, e: EdgeId) -> f64 {
        self.weights[e]
    }

    pub fn vertex_weight_of(&self, v: Vertex) -> f64 {
        self.weights[v]
    }

    /// `W_v = Σ_{e∋v} W_e` for edge-weighted environments (cached).
    pub fn vertex_total(&self, v: Vertex) -> f64 {
        self.vertex_total[v]
    }

    /// Rescales so the given edge has weight exactly 1 and tags the
    /// normalization. Ratios are unchanged.
    pub fn normalized_by_edge(mut self, e: EdgeId) -> Environment {
        let scale = 1.0 / self.weights[e];
        self.weights.iter_mut().for_each(|w| *w *= scale);
        self.vertex_total.iter_mut().for_each(|w| *w *= scale);
        self.normalization = Normalization::FirstEdge;
        self
    }

    /// Rescales so `W_{v0} = 1` (edge-weighted: the vertex total at `v0`).
    pub fn normalized_by_vertex(mut self, g: &Graph, v0: Vertex) -> Environment {
        let scale = match self.kind {
            EnvironmentKind::EdgeWeighted => 1.0 / self.vertex_total[v0],
            EnvironmentKind::VertexWeighted => 1.0 / self.weights[v0],
        };
        let _ = g;
        self.weights.iter_mut().for_each(|w| *w *= scale);
        self.vertex_total.iter_mut().for_each(|w| *w *= scale);
        self.normalization = Normalization::StartVertex;
        self
    }

    pub fn to_json(&self) -> EnvironmentJson {
        EnvironmentJson {
            kind: self.kind,
            weights: self.weights.clone(),
            normalization: self.normalization,
        }
    }

    pub fn from_json(g: &Graph, json: &EnvironmentJson) -> Result<Environment, EnvError> {
        let mut env = match json.kind {
            EnvironmentKind::EdgeWeighted => Environment::edge_weighted(g, json.weights.clone())?,
            EnvironmentKind::VertexWeighted => {
                Environment::vertex_weighted(g, json.weights.clone())?
            }
        };
        env.normalization = json.normalization;
        Ok(env)
    }
}

fn check_positive(ws: &[f64]) -> Result<(), EnvError> {
    for &w in ws {
        if !(w > 0.0) || !w.is_finite() {
            return Err(EnvError::NonPositiveWeight(w));
        }
    }
    Ok(())
}

/// One step of the walk in a fixed edge-weighted environment: from `v`, a
/// neighbor `w` is chosen with probability `W_{⟨v,w⟩}/W_v`.
pub fn rwre_step<R: Rng + ?Sized>(
    g: &Graph,
    env: &Environment,
    v: Vertex,
    rng: &mut R,
) -> (Vertex, EdgeId) {
    debug_assert_eq!(env.kind(), EnvironmentKind::EdgeWeighted);
    let total = env.vertex_total(v);
    let mut u: f64 = rng.random::<f64>() * total;
    let nbrs = g.neighbors(v);
    for &(w, e) in nbrs {
        u -= env.edge_weight(e);
        if u < 0.0 {
            return (w, e);
        }
    }
    let &(w, e) = nbrs.last().expect("rwre_step needs at least one neighbor");
    (w, e)
}

/// `n` i.i.d. draws of edges incident to `v` with law `W_e / W_v` — the
/// exit-sequence construction of the walk under a fixed environment.
/// Sequences drawn at distinct vertices (from independent rng streams) are
/// independent by construction.
pub fn exit_sequences<R: Rng + ?Sized>(
    g: &Graph,
    env: &Environment,
    v: Vertex,
    n: usize,
    rng: &mut R,
) -> Vec<EdgeId> {
    (0..n).map(|_| rwre_step(g, env, v, rng).1).collect()
}

/// Scans an exit sequence for the estimator counts of the pair `(e, f)`:
/// draws are consumed until both edges have appeared; `M_e` (resp. `M_f`)
/// is the number of appearances of `e` (resp. `f`) up to that time, so one
/// of the two is 1. Entries that are neither `e` nor `f` are ignored.
/// Returns `None` if the sequence ends before both have appeared.
pub fn exit_pair_counts(seq: &[EdgeId], e: EdgeId, f: EdgeId) -> Option<(u64, u64)> {
    let mut m_e = 0u64;
    let mut m_f = 0u64;
    for &z in seq {
        if z == e {
            m_e += 1;
        } else if z == f {
            m_f += 1;
        }
        if m_e >= 1 && m_f >= 1 {
            return Some((m_e, m_f));
        }
    }
    None
}

/// Exact conditional `s`-moment of the estimator error under a fixed
/// environment at a two-exit vertex:
///
/// `E[((p/q)·(M_f/M_e))^s | W] = (p/q)^s [ Σ_{k≥1} k^s p q^k + Σ_{k≥1} k^{-s} q p^k ]`
///
/// where `p` is the probability of `e`, `q = 1-p` of `f`. The two series
/// correspond to `f` appearing first (`M_f = k`) and `e` appearing first
/// (`M_e = k`). Summation is truncated adaptively with explicit geometric
/// tail majorants so the result is within `tol` of the true value.
pub fn q_given_w_moment_oracle(p: f64, s: f64, tol: f64) -> Result<f64, EnvError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(EnvError::DegenerateP(p));
    }
    if !(s >= 0.0 && s < 1.0) {
        return Err(EnvError::BadParam(format!("s must be in [0,1), got {s}")));
    }
    if !(tol > 0.0) {
        return Err(EnvError::BadParam(format!("tolerance must be positive, got {tol}")));
    }
    let q = 1.0 - p;
    // Σ_{k≥1} k^s p q^k: tail after K bounded by
    //   Σ_{k>K} k^s q^k ≤ (K+1)^{s-1} Σ_{k>K} k q^k
    //                    = (K+1)^{s-1} q^{K+1} ((K+1)(1-q)+q)/(1-q)²
    // using k^s ≤ (K+1)^{s-1} k for k ≥ K+1 and s ≤ 1.
    let first = {
        let mut sum = 0.0;
        let mut k = 1u64;
        let mut qk = q;
        loop {
            sum += (k as f64).powf(s) * p * qk;
            let kk = (k + 1) as f64;
            let tail = p
                * kk.powf(s - 1.0)
                * qk
                * q
                * (kk * (1.0 - q) + q)
                / ((1.0 - q) * (1.0 - q));
            if tail < tol / 2.0 {
                break sum;
            }
            k += 1;
            qk *= q;
            if k > 10_000_000 {
                break sum;
            }
        }
    };
    // Σ_{k≥1} k^{-s} q p^k: k^{-s} ≤ 1, geometric tail ≤ q p^{K+1}/(1-p).
    let second = {
        let mut sum = 0.0;
        let mut k = 1u64;
        let mut pk = p;
        loop {
            sum += (k as f64).powf(-s) * q * pk;
            let tail = q * pk * p / (1.0 - p);
            if tail < tol / 2.0 {
                break sum;
            }
            k += 1;
            pk *= p;
            if k > 10_000_000 {
                break sum;
            }
        }
    };
    Ok((p / q).powf(s) * (first + second))
}

/// Samples the limiting left-edge traversal fraction of the walk on a
/// three-vertex path started at the center with equal initial weights `a`:
/// a `Beta(a/2, a/2)` draw, realized as `X/(X+Y)` for independent
/// `Gamma(a/2, 1)` variables.
pub fn polya_limit_oracle<R: Rng + ?Sized>(a: f64, rng: &mut R) -> Result<f64, EnvError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(EnvError::BadParam(format!("a must be positive, got {a}")));
    }
    let gamma = Gamma::new(a / 2.0, 1.0)
        .map_err(|e| EnvError::BadParam(format!("gamma sampler: {e}")))?;
    loop {
        let x: f64 = gamma.sample(rng);
        let y: f64 = gamma.sample(rng);
        // For tiny shape parameters both draws can underflow to 0.
        if x + y > 0.0 {
            return Ok(x / (x + y));
        }
    }
}

/// Stationary measure `π(v) = W_v / 2W` of the edge-weighted walk, with
/// `W = Σ_e W_e`. Sums to 1 and satisfies detailed balance.
pub fn stationary_measure(g: &Graph, env: &Environment) -> Result<Vec<f64>, EnvError> {
    if env.kind() != EnvironmentKind::EdgeWeighted {
        return Err(EnvError::WrongKind("edge"));
    }
    let total: f64 = env.weights().iter().sum();
    Ok((0..g.vertex_count())
        .map(|v| env.vertex_total(v) / (2.0 * total))
        .collect())
}
