//! Monte Carlo laboratory for linearly edge-reinforced random walks (LRRW),
//! random walks in random environments (RWRE), and vertex-reinforced jump
//! processes (VRJP).
//!
//! The crate implements both descriptions of each process — the reinforcement
//! dynamics and the random-environment walk — together with the ratio
//! estimators, Bernoulli-ladder couplings, analytic moment oracles, and the
//! statistical harness used to validate moment bounds, decay rates, and
//! phase-transition behaviour on small graphs.
//!
//! Layout:
//!
//! - [`graph`] — finite graphs, named family generators, metric helpers, and
//!   brute-force expansion constants.
//! - [`rwre`] — walks in a fixed environment, exit sequences, and the
//!   geometric-series / Beta oracles.
//! - [`lrrw`] — the reinforced walk, crossing bookkeeping, domination paths,
//!   the `Q` estimator, and stopping-time statistics.
//! - [`coupling`] — Bernoulli ladders, the dominating variable `Q̄`, its exact
//!   moment oracle, and the coupled LRRW run.
//! - [`vrjp`] — continuous-time simulation in all three descriptions, the
//!   `M = L² + 2L` time change, and the §5-style analytic oracles.
//! - [`stats`] — moment estimates with bootstrap intervals, KS and χ² tests,
//!   and tail/decay regression fits.
//! - [`experiment`] — the config-driven experiment harness behind the CLI.

pub mod coupling;
pub mod experiment;
pub mod graph;
pub mod lrrw;
pub mod rwre;
pub mod stats;
pub mod vrjp;

pub use graph::{DirEdge, EdgeId, FamilySpec, Graph, Vertex};
pub use rwre::Environment;
