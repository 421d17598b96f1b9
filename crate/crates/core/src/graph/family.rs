//! Named graph family generators.
//!
//! All generators are finite and deterministic: edge ids are assigned in a
//! fixed construction order, so runs are reproducible byte-for-byte given a
//! seed. Infinite families (canopy, stretched tree) take an explicit depth
//! cap and materialize the truncation only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Graph, Vertex};

/// Guard against absurd generator parameters (also protects fuzzing of the
/// `family(...)` mini-language from memory blowups).
const MAX_VERTICES: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
    #[error("generated graph would have more than {MAX_VERTICES} vertices")]
    TooLarge,
    #[error("cannot parse family spec {0:?}: expected e.g. \"path(6)\" or \"grid_box(2,5)\"")]
    Parse(String),
}

/// A named graph family with its parameters.
///
/// Serialized form is externally tagged, e.g. `{"path": {"n": 6}}`. The
/// compact text form used on the command line is `path(6)`, `grid_box(2,5)`,
/// etc.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySpec {
    /// Path with `n` vertices, started at one end.
    Path { n: usize },
    /// Cycle with `n ≥ 3` vertices.
    Cycle { n: usize },
    /// Complete graph on `n` vertices.
    Complete { n: usize },
    /// `dim`-dimensional grid box with `side` vertices per axis, started at
    /// a corner.
    GridBox { dim: usize, side: usize },
    /// Complete `arity`-ary tree with levels `0..=depth`, started at the root.
    KAryTree { arity: usize, depth: usize },
    /// Truncated canopy: a backbone path `0..=depth` where backbone vertex
    /// `n` is the root of a complete binary tree of depth `n` hanging off it.
    Canopy { depth: usize },
    /// Binary tree of the given depth where the edge entering level `n` is
    /// subdivided into a path of length `n²`, started at the root.
    StretchedBinaryTree { depth: usize },
    /// Star with `leaves` rays, started at the center.
    Star { leaves: usize },
}

impl FamilySpec {
    /// Builds the graph with the uniform initial weight applied to every edge.
    pub fn build(&self, weight: f64) -> Result<Graph, FamilyError> {
        let (n, v0, edges) = match *self {
            FamilySpec::Path { n } => {
                require(n >= 1, "path needs n >= 1")?;
                check_size(n)?;
                let edges = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
                (n, 0, edges)
            }
            FamilySpec::Cycle { n } => {
                require(n >= 3, "cycle needs n >= 3")?;
                check_size(n)?;
                let edges = (0..n).map(|i| (i, (i + 1) % n)).collect();
                (n, 0, edges)
            }
            FamilySpec::Complete { n } => {
                require(n >= 1, "complete needs n >= 1")?;
                require(n <= 2_000, "complete needs n <= 2000")?;
                let mut edges = Vec::new();
                for u in 0..n {
                    for v in (u + 1)..n {
                        edges.push((u, v));
                    }
                }
                (n, 0, edges)
            }
            FamilySpec::GridBox { dim, side } => {
                require(dim >= 1 && side >= 1, "grid_box needs dim >= 1, side >= 1")?;
                let n = side.checked_pow(dim as u32).ok_or(FamilyError::TooLarge)?;
                check_size(n)?;
                let mut edges = Vec::new();
                let mut stride = 1usize;
                for _ in 0..dim {
                    for v in 0..n {
                        // coordinate along this axis
                        let coord = (v / stride) % side;
                        if coord + 1 < side {
                            edges.push((v, v + stride));
                        }
                    }
                    stride *= side;
                }
                (n, 0, edges)
            }
            FamilySpec::KAryTree { arity, depth } => {
                require(arity >= 1, "k_ary_tree needs arity >= 1")?;
                let mut n = 1usize;
                let mut level = 1usize;
                for _ in 0..depth {
                    level = level.checked_mul(arity).ok_or(FamilyError::TooLarge)?;
                    n = n.checked_add(level).ok_or(FamilyError::TooLarge)?;
                    check_size(n)?;
                }
                // heap layout: children of i are arity*i + 1 ..= arity*i + arity
                let edges = (1..n).map(|v| ((v - 1) / arity, v)).collect();
                (n, 0, edges)
            }
            FamilySpec::Canopy { depth } => {
                require(depth >= 1, "canopy needs depth >= 1")?;
                require(depth <= 18, "canopy needs depth <= 18")?;
                let mut edges = Vec::new();
                for i in 0..depth {
                    edges.push((i, i + 1));
                }
                let mut next = depth + 1;
                for root in 1..=depth {
                    // complete binary tree of depth `root` rooted at backbone
                    // vertex `root`; levels allocated breadth-first
                    let mut level = vec![root];
                    for _ in 0..root {
                        let mut next_level = Vec::with_capacity(level.len() * 2);
                        for &p in &level {
                            for _ in 0..2 {
                                edges.push((p, next));
                                next_level.push(next);
                                next += 1;
                            }
                        }
                        level = next_level;
                    }
                }
                check_size(next)?;
                (next, 0, edges)
            }
            FamilySpec::StretchedBinaryTree { depth } => {
                require(depth >= 1, "stretched_binary_tree needs depth >= 1")?;
                require(depth <= 12, "stretched_binary_tree needs depth <= 12")?;
                let mut edges: Vec<(Vertex, Vertex)> = Vec::new();
                let mut next = 1usize;
                let mut level = vec![0usize];
                for lvl in 1..=depth {
                    let stretch = lvl * lvl;
                    let mut next_level = Vec::with_capacity(level.len() * 2);
                    for &p in &level {
                        for _ in 0..2 {
                            // subdivide the tree edge into a path of `stretch` edges
                            let mut prev = p;
                            for _ in 0..stretch {
                                edges.push((prev, next));
                                prev = next;
                                next += 1;
                            }
                            next_level.push(prev);
                        }
                    }
                    check_size(next)?;
                    level = next_level;
                }
                (next, 0, edges)
            }
            FamilySpec::Star { leaves } => {
                require(leaves >= 1, "star needs leaves >= 1")?;
                check_size(leaves + 1)?;
                let edges = (1..=leaves).map(|v| (0, v)).collect();
                (leaves + 1, 0, edges)
            }
        };
        let weighted: Vec<(Vertex, Vertex, f64)> =
            edges.into_iter().map(|(u, v)| (u, v, weight)).collect();
        Graph::from_edges(n, v0, &weighted)
            .map_err(|e| FamilyError::ParamOutOfRange(e.to_string()))
    }
}

fn require(cond: bool, msg: &str) -> Result<(), FamilyError> {
    if cond {
        Ok(())
    } else {
        Err(FamilyError::ParamOutOfRange(msg.to_string()))
    }
}

fn check_size(n: usize) -> Result<(), FamilyError> {
    if n > MAX_VERTICES {
        Err(FamilyError::TooLarge)
    } else {
        Ok(())
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            FamilySpec::Path { n } => write!(f, "path({n})"),
            FamilySpec::Cycle { n } => write!(f, "cycle({n})"),
            FamilySpec::Complete { n } => write!(f, "complete({n})"),
            FamilySpec::GridBox { dim, side } => write!(f, "grid_box({dim},{side})"),
            FamilySpec::KAryTree { arity, depth } => write!(f, "k_ary_tree({arity},{depth})"),
            FamilySpec::Canopy { depth } => write!(f, "canopy({depth})"),
            FamilySpec::StretchedBinaryTree { depth } => {
                write!(f, "stretched_binary_tree({depth})")
            }
            FamilySpec::Star { leaves } => write!(f, "star({leaves})"),
        }
    }
}

impl FromStr for FamilySpec {
    type Err = FamilyError;

    /// Parses the compact form, e.g. `path(6)` or `grid_box(2, 5)`.
    fn from_str(s: &str) -> Result<Self, FamilyError> {
        let s = s.trim();
        let err = || FamilyError::Parse(s.to_string());
        let open = s.find('(').ok_or_else(err)?;
        if !s.ends_with(')') {
            return Err(err());
        }
        let name = s[..open].trim();
        let args: Vec<usize> = {
            let inner = &s[open + 1..s.len() - 1];
            let parts: Vec<&str> = if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner.split(',').collect()
            };
            parts
                .iter()
                .map(|p| p.trim().parse::<usize>().map_err(|_| err()))
                .collect::<Result<_, _>>()?
        };
        let one = |f: fn(usize) -> FamilySpec| {
            if args.len() == 1 {
                Ok(f(args[0]))
            } else {
                Err(err())
            }
        };
        match name {
            "path" => one(|n| FamilySpec::Path { n }),
            "cycle" => one(|n| FamilySpec::Cycle { n }),
            "complete" => one(|n| FamilySpec::Complete { n }),
            "canopy" => one(|depth| FamilySpec::Canopy { depth }),
            "stretched_binary_tree" => one(|depth| FamilySpec::StretchedBinaryTree { depth }),
            "star" => one(|leaves| FamilySpec::Star { leaves }),
            "grid_box" => {
                if args.len() == 2 {
                    Ok(FamilySpec::GridBox { dim: args[0], side: args[1] })
                } else {
                    Err(err())
                }
            }
            "k_ary_tree" => {
                if args.len() == 2 {
                    Ok(FamilySpec::KAryTree { arity: args[0], depth: args[1] })
                } else {
                    Err(err())
                }
            }
            _ => Err(err()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn path_counts() {
        let g = FamilySpec::Path { n: 3 }.build(2.0).unwrap();
        assert_eq!(g.vertex_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.weights().iter().all(|&w| w == 2.0));
    }

    #[test]
    fn binary_tree_counts() {
        let g = FamilySpec::KAryTree { arity: 2, depth: 3 }.build(1.0).unwrap();
        assert_eq!(g.vertex_count(), 15);
        assert_eq!(g.edge_count(), 14);
        assert_eq!(g.max_degree(), 3);
    }

    #[test]
    fn grid_counts() {
        let g = FamilySpec::GridBox { dim: 2, side: 5 }.build(1.0).unwrap();
        assert_eq!(g.vertex_count(), 25);
        // brute-force edge count of the 5x5 grid
        let mut count = 0;
        for x in 0..5usize {
            for y in 0..5usize {
                if x + 1 < 5 {
                    count += 1;
                }
                if y + 1 < 5 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.edge_count(), count);
        assert_eq!(g.edge_count(), 40);
        assert_eq!(g.max_degree(), 4);
    }

    #[test]
    fn star_counts() {
        let g = FamilySpec::Star { leaves: 3 }.build(0.1).unwrap();
        assert_eq!(g.vertex_count(), 4);
        assert_eq!(g.degree(0), 3);
        assert_eq!(g.v0(), 0);
    }

    #[test]
    fn canopy_structure() {
        let g = FamilySpec::Canopy { depth: 3 }.build(1.0).unwrap();
        // backbone 0..=3 plus trees of depth 1,2,3 hanging at 1,2,3
        let expect = 4 + (2) + (2 + 4) + (2 + 4 + 8);
        assert_eq!(g.vertex_count(), expect);
        assert!(g.max_degree() <= 4);
        assert!(g.is_connected());
    }

    #[test]
    fn stretched_tree_structure() {
        let g = FamilySpec::StretchedBinaryTree { depth: 2 }.build(1.0).unwrap();
        // level 1: two paths of length 1; level 2: four paths of length 4
        assert_eq!(g.edge_count(), 2 + 4 * 4);
        assert_eq!(g.vertex_count(), 1 + 2 + 4 * 4);
        assert!(g.is_connected());
        assert_eq!(g.max_degree(), 3);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(FamilySpec::Cycle { n: 2 }.build(1.0).is_err());
        assert!(FamilySpec::Path { n: 0 }.build(1.0).is_err());
        assert!(FamilySpec::Path { n: 3 }.build(0.0).is_err());
        assert!(FamilySpec::GridBox { dim: 40, side: 10 }.build(1.0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for s in [
            "path(6)",
            "cycle(8)",
            "complete(4)",
            "grid_box(2,5)",
            "k_ary_tree(2,10)",
            "canopy(4)",
            "stretched_binary_tree(3)",
            "star(3)",
        ] {
            let spec: FamilySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("pathology(6)".parse::<FamilySpec>().is_err());
        assert!("path(6".parse::<FamilySpec>().is_err());
        assert!("path(-1)".parse::<FamilySpec>().is_err());
    }

    proptest! {
        // reported degree bound equals the max adjacency size on every family
        #[test]
        fn degree_bound_is_tight(pick in 0usize..6, a in 1usize..6, b in 1usize..5) {
            let spec = match pick {
                0 => FamilySpec::Path { n: a + 1 },
                1 => FamilySpec::Cycle { n: a + 2 },
                2 => FamilySpec::Complete { n: a },
                3 => FamilySpec::GridBox { dim: (a % 3) + 1, side: b + 1 },
                4 => FamilySpec::KAryTree { arity: a, depth: b },
                _ => FamilySpec::Star { leaves: a },
            };
            let g = spec.build(1.0).unwrap();
            let max = (0..g.vertex_count()).map(|v| g.degree(v)).max().unwrap_or(0);
            prop_assert_eq!(g.max_degree(), max);
        }
    }
}
