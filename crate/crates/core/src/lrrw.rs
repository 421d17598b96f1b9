//! The linearly edge-reinforced random walk.
//!
//! A step from `v` chooses the incident edge `e` with probability
//! proportional to `a_e + N(e)`, where `N(e)` counts traversals of the
//! *undirected* edge. The estimator bookkeeping on top of the walk counts
//! *directed* exits: for an edge `e` whose tail was first entered through
//! `e′`, the ratio `Q(e) = M_e/M_f` of departures along `e` versus
//! `f = (e′)⁻¹`, frozen at the first time both have been used, estimates the
//! environment ratio `W_e/W_{e′}`. Chaining first-entry edges backwards from
//! a target edge yields the path of domination.

use rand::Rng;
use thiserror::Error;

use crate::graph::{DirEdge, EdgeId, Graph, Vertex};
use crate::rwre::Environment;

/// Full trajectories are retained only below this length; longer runs keep
/// counters and traces only, so memory stays `O(|E|)`.
pub const PATH_RETENTION_LIMIT: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("walker is stuck: vertex {0} has no neighbors")]
    Stuck(Vertex),
    #[error("target edge {0} was never reached")]
    NotHit(EdgeId),
    #[error("invalid parameter: {0}")]
    BadParam(String),
}

/// Walker position plus all reinforcement counters.
#[derive(Clone, Debug)]
pub struct LrrwState {
    pub position: Vertex,
    pub step: u64,
    /// Undirected crossing counts `N(e)`.
    crossings: Vec<u64>,
    /// Directed exit counts, indexed by [`DirEdge::index`].
    exits: Vec<u64>,
    /// Arrivals per vertex, counting the initial presence at `v0`.
    visits: Vec<u64>,
    /// Edge through which each vertex was first reached; never set for `v0`.
    first_entry: Vec<Option<DirEdge>>,
    /// First edge crossed by the walk (`e₁`).
    first_edge: Option<DirEdge>,
}

impl LrrwState {
    pub fn new(g: &Graph) -> LrrwState {
        let mut visits = vec![0u64; g.vertex_count()];
        visits[g.v0()] = 1;
        LrrwState {
            position: g.v0(),
            step: 0,
            crossings: vec![0; g.edge_count()],
            exits: vec![0; 2 * g.edge_count()],
            visits,
            first_entry: vec![None; g.vertex_count()],
            first_edge: None,
        }
    }

    pub fn crossings(&self, e: EdgeId) -> u64 {
        self.crossings[e]
    }

    /// Crossing total `N(v) = Σ_{e∋v} N(e)`.
    pub fn crossings_at(&self, g: &Graph, v: Vertex) -> u64 {
        g.neighbors(v).iter().map(|&(_, e)| self.crossings[e]).sum()
    }

    pub fn exits(&self, d: DirEdge) -> u64 {
        self.exits[d.index()]
    }

    /// Total directed exits from `v`.
    pub fn exits_from(&self, g: &Graph, v: Vertex) -> u64 {
        g.neighbors(v)
            .iter()
            .map(|&(n, e)| self.exits[DirEdge { edge: e, rev: v > n }.index()])
            .sum()
    }

    pub fn visits(&self, v: Vertex) -> u64 {
        self.visits[v]
    }

    pub fn first_entry(&self, v: Vertex) -> Option<DirEdge> {
        self.first_entry[v]
    }

    pub fn first_edge(&self) -> Option<DirEdge> {
        self.first_edge
    }

    /// Applies one traversal along `d` (the walker must sit at its tail).
    /// Exposed so other walks (e.g. in a fixed environment) can reuse the
    /// same bookkeeping.
    pub fn record_step(&mut self, g: &Graph, d: DirEdge) {
        debug_assert_eq!(self.position, g.tail(d));
        let head = g.head(d);
        self.crossings[d.edge] += 1;
        self.exits[d.index()] += 1;
        self.step += 1;
        self.visits[head] += 1;
        if head != g.v0() && self.first_entry[head].is_none() {
            self.first_entry[head] = Some(d);
        }
        if self.first_edge.is_none() {
            self.first_edge = Some(d);
        }
        self.position = head;
    }

    /// Counter consistency: `Σ_e N(e) = step`, `N(e)` splits into the two
    /// directed exit counts, and first-entry edges point at their vertex.
    pub fn check_invariants(&self, g: &Graph) -> bool {
        let total: u64 = self.crossings.iter().sum();
        if total != self.step {
            return false;
        }
        for e in 0..g.edge_count() {
            if self.crossings[e] != self.exits[2 * e] + self.exits[2 * e + 1] {
                return false;
            }
        }
        if self.first_entry[g.v0()].is_some() {
            return false;
        }
        for v in 0..g.vertex_count() {
            match self.first_entry[v] {
                Some(d) => {
                    if g.head(d) != v || self.visits[v] == 0 {
                        return false;
                    }
                }
                None => {
                    if v != g.v0() && self.visits[v] > 0 {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// Current transition weights `a_e + N(e)` over the incident directed edges.
pub fn transition_weights(g: &Graph, state: &LrrwState) -> Vec<(DirEdge, f64)> {
    let v = state.position;
    g.neighbors(v)
        .iter()
        .map(|&(n, e)| {
            (DirEdge { edge: e, rev: v > n }, g.weight(e) + state.crossings[e] as f64)
        })
        .collect()
}

/// One reinforced step: draws the next edge with probability proportional to
/// `a_e + N(e)` and updates every counter. Supports per-edge unequal `a_e`
/// via the graph's weights.
pub fn lrrw_step<R: Rng + ?Sized>(
    g: &Graph,
    state: &mut LrrwState,
    rng: &mut R,
) -> Result<DirEdge, SimError> {
    let v = state.position;
    let nbrs = g.neighbors(v);
    if nbrs.is_empty() {
        return Err(SimError::Stuck(v));
    }
    let mut total = 0.0;
    for &(_, e) in nbrs {
        total += g.weight(e) + state.crossings[e] as f64;
    }
    let mut u: f64 = rng.random::<f64>() * total;
    let mut chosen = None;
    for &(n, e) in nbrs {
        u -= g.weight(e) + state.crossings[e] as f64;
        if u < 0.0 {
            chosen = Some(DirEdge { edge: e, rev: v > n });
            break;
        }
    }
    let d = chosen.unwrap_or_else(|| {
        let &(n, e) = nbrs.last().unwrap();
        DirEdge { edge: e, rev: v > n }
    });
    state.record_step(g, d);
    Ok(d)
}

/// Stopping rules for [`run_lrrw`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopRule {
    /// Halt after exactly `T` steps.
    MaxSteps(u64),
    /// Halt once the vertex has been visited `count` times (the initial
    /// presence at `v0` counts).
    Visits { vertex: Vertex, count: u64 },
    /// Halt once every edge at the vertex has been exited at least `l` times.
    AllEdgesExited { vertex: Vertex, l: u64 },
    /// Halt at the first crossing of the undirected edge (either direction).
    HitEdge(EdgeId),
}

/// Which condition ended the run. Hit-type rules carry a step budget and
/// report exhaustion explicitly — a timeout is never silent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopStatus {
    Fired(StopRule),
    TimedOut { budget: u64 },
}

#[derive(Clone, Debug)]
pub struct TrajectorySummary {
    pub state: LrrwState,
    /// Vertex sequence including the start; dropped beyond
    /// [`PATH_RETENTION_LIMIT`].
    pub path: Option<Vec<Vertex>>,
    pub status: StopStatus,
}

impl TrajectorySummary {
    pub fn timed_out(&self) -> bool {
        matches!(self.status, StopStatus::TimedOut { .. })
    }
}

/// Runs the reinforced walk until the stopping rule fires or the budget is
/// exhausted.
pub fn run_lrrw<R: Rng + ?Sized>(
    g: &Graph,
    stop: StopRule,
    budget: u64,
    rng: &mut R,
) -> Result<TrajectorySummary, SimError> {
    let mut state = LrrwState::new(g);
    let mut path = vec![state.position];
    let mut keep_path = true;
    let fired = loop {
        match stop {
            StopRule::MaxSteps(t) => {
                if state.step >= t {
                    break true;
                }
            }
            StopRule::Visits { vertex, count } => {
                if state.visits(vertex) >= count {
                    break true;
                }
            }
            StopRule::AllEdgesExited { vertex, l } => {
                if all_edges_exited(g, &state, vertex, l) {
                    break true;
                }
            }
            StopRule::HitEdge(x) => {
                if state.crossings(x) > 0 {
                    break true;
                }
            }
        }
        if state.step >= budget {
            break false;
        }
        lrrw_step(g, &mut state, rng)?;
        if keep_path {
            if path.len() > PATH_RETENTION_LIMIT {
                keep_path = false;
                path = Vec::new();
            } else {
                path.push(state.position);
            }
        }
    };
    let status = if fired { StopStatus::Fired(stop) } else { StopStatus::TimedOut { budget } };
    Ok(TrajectorySummary { state, path: keep_path.then_some(path), status })
}

fn all_edges_exited(g: &Graph, state: &LrrwState, v: Vertex, l: u64) -> bool {
    g.neighbors(v)
        .iter()
        .all(|&(n, e)| state.exits(DirEdge { edge: e, rev: v > n }) >= l)
}

/// `(M_e, M_f)` exit counts of an estimator pair, frozen at the first time
/// both edges have been used; by construction one of the two counts is 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QPair {
    pub m_e: u64,
    pub m_f: u64,
}

impl QPair {
    pub fn value(self) -> f64 {
        self.m_e as f64 / self.m_f as f64
    }
}

/// A candidate domination path with its per-edge estimates.
#[derive(Clone, Debug)]
pub struct DominationTrace {
    /// Directed edges chaining head-to-tail from a start-vertex edge to the
    /// target; simple except possibly ending back at `v0`.
    pub gamma: Vec<DirEdge>,
    /// `Q` pairs aligned with `gamma[1..]` (`None` while not yet frozen).
    pub q: Vec<Option<QPair>>,
    /// Whether this trace was realized as the walk's own domination path.
    pub d_gamma: bool,
}

impl DominationTrace {
    /// Telescoped estimate `Ŵ_x / Ŵ_{γ₁}`: the product of the frozen `Q`
    /// values along `γ∖γ₁`. `None` if any pair is still unfrozen.
    pub fn telescoped_ratio(&self) -> Option<f64> {
        let mut prod = 1.0;
        for q in &self.q {
            prod *= q.as_ref()?.value();
        }
        Some(prod)
    }
}

/// Per-run tracker of the `Q` estimator pairs at every visited vertex.
///
/// For each vertex `v ≠ v0` with first entry through `e′`, each outgoing
/// directed edge `e ≠ f = (e′)⁻¹` owns a pair `(M_e, M_f)` counting exits
/// along `e` versus `f` until both have been used. Transitions along `e⁻¹`
/// or `f⁻¹` are not counted.
#[derive(Clone, Debug)]
pub struct QTracker {
    /// Per vertex: the reference exit `f`, i.e. the reverse of first entry.
    f_dir: Vec<Option<DirEdge>>,
    /// Per directed edge: the live pair state.
    m_e: Vec<u32>,
    m_f: Vec<u32>,
    frozen: Vec<bool>,
}

impl QTracker {
    pub fn new(g: &Graph) -> QTracker {
        QTracker {
            f_dir: vec![None; g.vertex_count()],
            m_e: vec![0; 2 * g.edge_count()],
            m_f: vec![0; 2 * g.edge_count()],
            frozen: vec![false; 2 * g.edge_count()],
        }
    }

    /// Feed one realized step along `d`. Must see every step of the walk in
    /// order.
    pub fn observe(&mut self, g: &Graph, d: DirEdge) {
        let v = g.tail(d);
        if let Some(f) = self.f_dir[v] {
            if d == f {
                // an f-exit advances every unfrozen pair at v
                for &(n, e) in g.neighbors(v) {
                    let out = DirEdge { edge: e, rev: v > n };
                    if out == f {
                        continue;
                    }
                    let i = out.index();
                    if self.frozen[i] {
                        continue;
                    }
                    if self.m_e[i] == 0 {
                        self.m_f[i] += 1;
                    } else {
                        self.m_f[i] = 1;
                        self.frozen[i] = true;
                    }
                }
            } else {
                let i = d.index();
                if !self.frozen[i] {
                    if self.m_f[i] == 0 {
                        self.m_e[i] += 1;
                    } else {
                        self.m_e[i] = 1;
                        self.frozen[i] = true;
                    }
                }
            }
        }
        // first entry to the head defines its reference exit
        let head = g.head(d);
        if head != g.v0() && self.f_dir[head].is_none() {
            self.f_dir[head] = Some(d.reverse());
        }
    }

    /// The frozen pair for a directed edge, if any.
    pub fn pair(&self, d: DirEdge) -> Option<QPair> {
        let i = d.index();
        self.frozen[i].then(|| QPair { m_e: self.m_e[i] as u64, m_f: self.m_f[i] as u64 })
    }

    pub fn reference_exit(&self, v: Vertex) -> Option<DirEdge> {
        self.f_dir[v]
    }
}

/// Builds the realized domination path of target edge `x` from the final
/// counters: the chain of first-entry edges from the first crossing of `x`
/// back to `v0`. `d_gamma` is true by construction.
///
/// The `Q` pairs must be supplied by a [`QTracker`] that observed the run.
pub fn domination_trace(
    g: &Graph,
    state: &LrrwState,
    tracker: &QTracker,
    x: EdgeId,
) -> Result<DominationTrace, SimError> {
    if state.crossings(x) == 0 {
        return Err(SimError::NotHit(x));
    }
    // direction of the first crossing: the side whose tail was reached first
    // must have launched it; first_entry chains encode exactly that
    let dx = first_crossing_direction(g, state, x)?;
    Ok(domination_trace_from(g, state, tracker, dx))
}

/// Same as [`domination_trace`] with the first-crossing direction supplied
/// by the caller (recorded online during the run).
pub fn domination_trace_from(
    g: &Graph,
    state: &LrrwState,
    tracker: &QTracker,
    dx: DirEdge,
) -> DominationTrace {
    let mut gamma = vec![dx];
    let mut cursor = g.tail(dx);
    while cursor != g.v0() {
        let e_prime = state
            .first_entry(cursor)
            .expect("visited vertex on a domination chain has a first entry");
        gamma.push(e_prime);
        cursor = g.tail(e_prime);
    }
    gamma.reverse();
    let q = gamma[1..].iter().map(|&e| tracker.pair(e)).collect();
    DominationTrace { gamma, q, d_gamma: true }
}

/// Which orientation of `x` was crossed first. With full counters this is
/// recoverable: the orientation whose tail's first-entry chain does not pass
/// through `x` itself was crossed first; for a walk we track it simply by
/// noting that the first crossing exits the endpoint that was *reached*
/// first along the chain of first entries.
fn first_crossing_direction(g: &Graph, state: &LrrwState, x: EdgeId) -> Result<DirEdge, SimError> {
    let (lo, hi) = g.endpoints(x);
    let fwd = DirEdge { edge: x, rev: false };
    let rev = DirEdge { edge: x, rev: true };
    // If one endpoint was first entered through x, the crossing that set it
    // came from the other side.
    if state.first_entry(hi) == Some(fwd) {
        return Ok(fwd);
    }
    if state.first_entry(lo) == Some(rev) {
        return Ok(rev);
    }
    // Otherwise both endpoints were first reached by other edges; the first
    // crossing left whichever endpoint appears earlier in the first-entry
    // chain order. Recover it by comparing chain depth timestamps: exits
    // along only one orientation can be nonzero if the other is zero.
    match (state.exits(fwd), state.exits(rev)) {
        (0, 0) => Err(SimError::NotHit(x)),
        (_, 0) => Ok(fwd),
        (0, _) => Ok(rev),
        _ => {
            // Both directions used. The walk crossed x first from the
            // endpoint it reached first; entry order is not kept in the
            // counters, so callers that need this case must record the
            // direction online. Runs stopped at the first crossing (the
            // supported workflow) never get here.
            Err(SimError::BadParam(format!(
                "first-crossing direction of edge {x} is ambiguous from counters alone; \
                 stop the run at the first crossing or record it online"
            )))
        }
    }
}

/// Result of [`stopping_stats`]: visit count `τ(L,v)`, per-incident-edge
/// exit counts `M(L,v,e)` in neighbor order, and the maximum `S(L,v)`.
#[derive(Clone, Debug)]
pub struct StoppingStats {
    pub tau: u64,
    pub m: Vec<u64>,
    pub s_max: u64,
    pub timed_out: bool,
}

/// Runs the walk until vertex `v` has been exited at least `l` times along
/// every incident edge, and reports the exit counts at that stopping time.
/// Budget exhaustion is reported explicitly with the partial counts.
pub fn stopping_stats<R: Rng + ?Sized>(
    g: &Graph,
    v: Vertex,
    l: u64,
    budget: u64,
    rng: &mut R,
) -> Result<StoppingStats, SimError> {
    if l == 0 {
        return Err(SimError::BadParam("stopping_stats needs L >= 1".into()));
    }
    let mut state = LrrwState::new(g);
    let mut counts = vec![0u64; g.degree(v)];
    while state.step < budget {
        let at_v = state.position == v;
        let d = lrrw_step(g, &mut state, rng)?;
        if at_v {
            let slot = g
                .neighbors(v)
                .iter()
                .position(|&(_, e)| e == d.edge)
                .expect("exit edge is incident");
            counts[slot] += 1;
            if counts.iter().all(|&c| c >= l) {
                let tau = counts.iter().sum();
                let s_max = counts.iter().copied().max().unwrap_or(0);
                return Ok(StoppingStats { tau, m: counts, s_max, timed_out: false });
            }
        }
    }
    let tau = counts.iter().sum();
    let s_max = counts.iter().copied().max().unwrap_or(0);
    Ok(StoppingStats { tau, m: counts, s_max, timed_out: true })
}

/// ε-faithfulness: every incident edge's exit share `M(e)/τ` is within
/// relative ε of its environment share `W_e/W_v`.
pub fn classify_faithful(
    g: &Graph,
    v: Vertex,
    m: &[u64],
    tau: u64,
    env: &Environment,
    eps: f64,
) -> bool {
    debug_assert!(tau > 0);
    g.neighbors(v).iter().zip(m).all(|(&(_, e), &count)| {
        let asymptotic = env.edge_weight(e) / env.vertex_total(v);
        let ratio = (count as f64 / tau as f64) / asymptotic;
        (1.0 - eps..=1.0 + eps).contains(&ratio)
    })
}

/// ε-balancedness: the most used exit satisfies `S ≤ (1+ε)L`.
pub fn classify_balanced(s_max: u64, l: u64, eps: f64) -> bool {
    debug_assert!(s_max >= l && l >= 1);
    (s_max as f64) <= (1.0 + eps) * l as f64
}

/// One point of an empirical survival curve.
#[derive(Clone, Copy, Debug)]
pub struct SurvivalPoint {
    pub m: u64,
    pub p_hat: f64,
    pub stderr: f64,
}

/// First return time `τ = min{t>0 : X_t = v₀}` of a fresh run, censored at
/// `max_m` (`None` means `τ > max_m`, which is all a survival curve needs).
pub fn first_return_time<R: Rng + ?Sized>(
    g: &Graph,
    max_m: u64,
    rng: &mut R,
) -> Result<Option<u64>, SimError> {
    let mut state = LrrwState::new(g);
    loop {
        lrrw_step(g, &mut state, rng)?;
        if state.position == g.v0() {
            return Ok(Some(state.step));
        }
        if state.step > max_m {
            return Ok(None);
        }
    }
}

/// Estimates `P(τ > M)` for the first return time `τ = min{t>0 : X_t = v₀}`
/// at each horizon in `ms`, with binomial standard errors.
pub fn return_time_survival<R: Rng + ?Sized>(
    g: &Graph,
    ms: &[u64],
    replicas: usize,
    rng: &mut R,
) -> Result<Vec<SurvivalPoint>, SimError> {
    if replicas == 0 {
        return Err(SimError::BadParam("return_time_survival needs replicas >= 1".into()));
    }
    let max_m = ms.iter().copied().max().unwrap_or(0);
    let mut taus = Vec::with_capacity(replicas);
    for _ in 0..replicas {
        let tau = first_return_time(g, max_m, rng)?.unwrap_or(u64::MAX);
        taus.push(tau);
    }
    Ok(ms
        .iter()
        .map(|&m| {
            let survived = taus.iter().filter(|&&t| t > m).count();
            let p_hat = survived as f64 / replicas as f64;
            SurvivalPoint { m, p_hat, stderr: crate::stats::binomial_stderr(p_hat, replicas) }
        })
        .collect())
}

/// The explicit product lower bound on `P(τ > 2M)` from the back-and-forth
/// event on a distance-1 edge:
///
/// `P(E_M) ≥ (1/K) ∏_{0≤j<M} [(2j+a)/(2j+1+Ka)] · [(2j+1+a)/(2j+1+Ka)]`.
pub fn return_tail_lower_bound(a: f64, k: usize, m: u64) -> f64 {
    let ka = k as f64 * a;
    let mut prod = 1.0 / k as f64;
    for j in 0..m {
        let j = j as f64;
        prod *= (2.0 * j + a) / (2.0 * j + 1.0 + ka);
        prod *= (2.0 * j + 1.0 + a) / (2.0 * j + 1.0 + ka);
    }
    prod
}

/// Lower bound on `P(τ > M)` for any horizon: `E_{⌈M/2⌉}` keeps the walk
/// away from `v₀` for more than `M` steps.
pub fn return_tail_bound_at(a: f64, k: usize, m: u64) -> f64 {
    return_tail_lower_bound(a, k, m.div_ceil(2))
}

/// Per-edge environment estimate from directed exit frequencies, stitched
/// across vertices by ratio-chaining along the spanning tree of first-entry
/// edges and normalized so the first crossed edge has weight 1.
///
/// Edges that were never crossed — or whose chaining ratios are undefined
/// because some vertex lacks the needed exits — come back as `None`
/// (excluded, flagged).
pub fn estimate_environment(g: &Graph, state: &LrrwState) -> Result<Vec<Option<f64>>, SimError> {
    let e1 = state.first_edge().ok_or(SimError::BadParam("empty trajectory".into()))?;
    let n = g.vertex_count();
    // per-vertex scale so that W_e = scale(v) · exit_share_v(e)
    let mut scale = vec![None::<f64>; n];
    let v0 = g.v0();
    let share = |v: Vertex, d: DirEdge| -> Option<f64> {
        let total = state.exits_from(g, v);
        let cnt = state.exits(d);
        (cnt > 0).then(|| cnt as f64 / total as f64)
    };
    let s0 = share(v0, e1).expect("first edge was exited from v0");
    scale[v0] = Some(1.0 / s0);
    // vertices in first-entry order: BFS over the first-entry tree
    let mut queue = std::collections::VecDeque::from([v0]);
    let mut children: Vec<Vec<Vertex>> = vec![Vec::new(); n];
    for v in 0..n {
        if let Some(d) = state.first_entry(v) {
            children[g.tail(d)].push(v);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &children[u] {
            let p = state.first_entry(v).unwrap();
            // consistency across the tree edge: scale(u)·share_u(p) =
            // scale(v)·share_v(p⁻¹ exit share seen from v)
            if let (Some(su), Some(up), Some(down)) =
                (scale[u], share(u, p), share(v, p.reverse()))
            {
                scale[v] = Some(su * up / down);
            }
            queue.push_back(v);
        }
    }
    let mut out = vec![None; g.edge_count()];
    for e in 0..g.edge_count() {
        if state.crossings(e) == 0 {
            continue;
        }
        // use the endpoint that first crossed the edge (its canonical tail)
        let (lo, hi) = g.endpoints(e);
        let fwd = DirEdge { edge: e, rev: false };
        let tail = if state.first_entry(hi) == Some(fwd) {
            lo
        } else if state.first_entry(lo) == Some(fwd.reverse()) {
            hi
        } else if state.exits(fwd) > 0 {
            lo
        } else {
            hi
        };
        let d = if tail == lo { fwd } else { fwd.reverse() };
        if let (Some(sc), Some(sh)) = (scale[tail], share(tail, d)) {
            out[e] = Some(sc * sh);
        }
    }
    Ok(out)
}

/// Crossing fraction of the first edge at a degree-2 start vertex — the urn
/// statistic whose limit law is Beta(a/2, a/2) on the three-vertex path.
pub fn polya_fraction<R: Rng + ?Sized>(
    g: &Graph,
    horizon: u64,
    rng: &mut R,
) -> Result<f64, SimError> {
    debug_assert_eq!(g.degree(g.v0()), 2);
    let mut state = LrrwState::new(g);
    for _ in 0..horizon {
        lrrw_step(g, &mut state, rng)?;
    }
    let (left, right) = {
        let nbrs = g.neighbors(g.v0());
        (nbrs[0].1, nbrs[1].1)
    };
    let l = state.crossings(left) as f64;
    let r = state.crossings(right) as f64;
    Ok(l / (l + r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FamilySpec;
    use crate::stats;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::beta::beta_reg;
    use std::collections::HashMap;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn triangle() -> Graph {
        FamilySpec::Cycle { n: 3 }.build(1.0).unwrap()
    }

    #[test]
    fn fresh_triangle_step_is_symmetric() {
        let g = triangle();
        let state = LrrwState::new(&g);
        let w = transition_weights(&g, &state);
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].1, w[1].1);
    }

    #[test]
    fn reinforced_degree_two_weights() {
        // one incident edge crossed once, the other never: probs 2/3, 1/3
        let g = FamilySpec::Path { n: 3 }.build(1.0).unwrap();
        let mut state = LrrwState::new(&g);
        state.record_step(&g, g.dir_edge(0, 1).unwrap());
        let w = transition_weights(&g, &state);
        let total: f64 = w.iter().map(|x| x.1).sum();
        let p_back = w.iter().find(|x| x.0.edge == 0).unwrap().1 / total;
        assert!((p_back - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn star_step_frequencies_match_formula() {
        // star(3) center, a = 0.1, counts (5,0,0): probs (5.1, .1, .1)/5.3,
        // checked against empirical frequencies over 10^6 draws
        let g = FamilySpec::Star { leaves: 3 }.build(0.1).unwrap();
        let mut state = LrrwState::new(&g);
        // the drawn law depends only on (position, crossings); set counts
        // directly since N(e₁) = 5 is not reachable with the walker at the
        // center
        state.crossings[0] = 5;
        let n = 1_000_000;
        let mut r = rng(8);
        let mut counts = [0u64; 3];
        for _ in 0..n {
            let mut probe = state.clone();
            let d = lrrw_step(&g, &mut probe, &mut r).unwrap();
            counts[g.head(d) - 1] += 1;
        }
        let p0 = counts[0] as f64 / n as f64;
        let expect = 5.1 / 5.3;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((p0 - expect).abs() < 4.0 * sigma, "p0 {p0} expect {expect}");
    }

    #[test]
    fn run_with_zero_horizon_is_empty() {
        let g = FamilySpec::Path { n: 3 }.build(1.0).unwrap();
        let mut r = rng(1);
        let s = run_lrrw(&g, StopRule::MaxSteps(0), 100, &mut r).unwrap();
        assert_eq!(s.state.step, 0);
        assert_eq!(s.path.as_deref(), Some(&[0usize][..]));
        assert!(matches!(s.status, StopStatus::Fired(StopRule::MaxSteps(0))));
    }

    #[test]
    fn visits_rule_on_two_path() {
        // path(2) forces the walk to alternate; visits(v0, 3) takes 4 steps
        let g = FamilySpec::Path { n: 2 }.build(1.0).unwrap();
        let mut r = rng(2);
        let s = run_lrrw(&g, StopRule::Visits { vertex: 0, count: 3 }, 100, &mut r).unwrap();
        assert_eq!(s.path.as_deref(), Some(&[0, 1, 0, 1, 0][..]));
    }

    #[test]
    fn hit_edge_rule_and_timeout() {
        let g = FamilySpec::Path { n: 4 }.build(1.0).unwrap();
        let mut r = rng(3);
        let s = run_lrrw(&g, StopRule::HitEdge(2), 100_000, &mut r).unwrap();
        assert!(matches!(s.status, StopStatus::Fired(StopRule::HitEdge(2))));
        assert_eq!(s.state.crossings(2), 1);

        // zero budget on a hit rule must time out explicitly
        let t = run_lrrw(&g, StopRule::HitEdge(2), 0, &mut r).unwrap();
        assert!(t.timed_out());
    }

    #[test]
    fn domination_trace_on_path_is_the_path() {
        let g = FamilySpec::Path { n: 3 }.build(1.0).unwrap();
        let mut r = rng(4);
        let mut state = LrrwState::new(&g);
        let mut tracker = QTracker::new(&g);
        while state.crossings(1) == 0 {
            let d = lrrw_step(&g, &mut state, &mut r).unwrap();
            tracker.observe(&g, d);
        }
        let trace = domination_trace(&g, &state, &tracker, 1).unwrap();
        assert_eq!(trace.gamma.len(), 2);
        assert_eq!(trace.gamma[0], g.dir_edge(0, 1).unwrap());
        assert_eq!(trace.gamma[1], g.dir_edge(1, 2).unwrap());
        assert!(trace.d_gamma);
    }

    #[test]
    fn domination_trace_single_edge_has_no_q() {
        // walk v0→u→v0→w on a triangle: γ for x=(v0,w) is the single edge
        let g = triangle();
        let mut state = LrrwState::new(&g);
        let mut tracker = QTracker::new(&g);
        for d in [
            g.dir_edge(0, 1).unwrap(),
            g.dir_edge(1, 0).unwrap(),
            g.dir_edge(0, 2).unwrap(),
        ] {
            state.record_step(&g, d);
            tracker.observe(&g, d);
        }
        let x = g.edge_between(0, 2).unwrap();
        let trace = domination_trace(&g, &state, &tracker, x).unwrap();
        assert_eq!(trace.gamma.len(), 1);
        assert!(trace.q.is_empty());
        assert_eq!(trace.telescoped_ratio(), Some(1.0));
    }

    #[test]
    fn q_pair_freeze_rule() {
        // exits from e⁻ in order e, e, f: M_e = 2, M_f = 1, Q = 2
        let g = FamilySpec::Star { leaves: 3 }.build(1.0).unwrap();
        // reach center through leaf 1, so f = center→1
        let mut tracker = QTracker::new(&g);
        let mut g2 = g.clone();
        g2 = g2.with_v0(1).unwrap();
        let enter = g2.dir_edge(1, 0).unwrap();
        let e = g2.dir_edge(0, 2).unwrap();
        let f = g2.dir_edge(0, 1).unwrap();
        tracker.observe(&g2, enter);
        for d in [e, g2.dir_edge(2, 0).unwrap(), e, g2.dir_edge(2, 0).unwrap(), f] {
            tracker.observe(&g2, d);
        }
        assert_eq!(tracker.pair(e), Some(QPair { m_e: 2, m_f: 1 }));
        assert_eq!(tracker.pair(e).unwrap().value(), 2.0);
        // the other pair at the center froze with m_e = 0? No: edge 0→3 was
        // never exited, so it must still be open.
        assert_eq!(tracker.pair(g2.dir_edge(0, 3).unwrap()), None);
    }

    #[test]
    fn stopping_stats_on_leaf_vertex() {
        // degree-1 vertex: τ = L = M = S
        let g = FamilySpec::Path { n: 2 }.build(1.0).unwrap();
        let mut r = rng(5);
        let s = stopping_stats(&g, 0, 4, 1_000, &mut r).unwrap();
        assert_eq!(s.tau, 4);
        assert_eq!(s.m, vec![4]);
        assert_eq!(s.s_max, 4);
        assert!(!s.timed_out);
    }

    #[test]
    fn stopping_stats_sum_and_bounds() {
        let g = triangle();
        let mut r = rng(6);
        let l = 3;
        let s = stopping_stats(&g, 0, l, 100_000, &mut r).unwrap();
        assert!(!s.timed_out);
        assert_eq!(s.m.iter().sum::<u64>(), s.tau);
        assert!(s.m.iter().all(|&c| c >= l));
        assert_eq!(s.s_max, *s.m.iter().max().unwrap());
    }

    #[test]
    fn stopping_stats_budget_reported() {
        let g = triangle();
        let mut r = rng(7);
        let s = stopping_stats(&g, 0, 1_000, 50, &mut r).unwrap();
        assert!(s.timed_out);
    }

    #[test]
    fn classify_faithful_cases() {
        let g = FamilySpec::Path { n: 3 }.build(1.0).unwrap();
        let env = Environment::uniform_edges(&g, 1.0);
        // exact shares pass at ε = 0
        assert!(classify_faithful(&g, 1, &[2, 2], 4, &env, 0.0));
        // shares (3/4, 1/4) vs (1/2, 1/2): ratio 1.5 fails at ε = 0.1
        assert!(!classify_faithful(&g, 1, &[3, 1], 4, &env, 0.1));
        // and passes when ε ≥ 1 lets the ratio reach 2
        assert!(classify_faithful(&g, 1, &[2, 2], 4, &env, 1.0));
    }

    #[test]
    fn classify_balanced_cases() {
        assert!(classify_balanced(10, 10, 0.0));
        assert!(!classify_balanced(12, 10, 0.1));
        assert!(classify_balanced(12, 10, 0.2));
    }

    #[test]
    fn survival_basics() {
        let g = FamilySpec::Path { n: 3 }.build(1.0).unwrap();
        let mut r = rng(9);
        let pts = return_time_survival(&g, &[0, 2, 4, 8], 4_000, &mut r).unwrap();
        assert_eq!(pts[0].p_hat, 1.0);
        // nonincreasing in M
        for w in pts.windows(2) {
            assert!(w[1].p_hat <= w[0].p_hat);
        }
        // P(τ > 2) = P(second step goes outward) = 1/3 at a = 1
        assert!((pts[1].p_hat - 1.0 / 3.0).abs() < 4.0 * pts[1].stderr);
    }

    #[test]
    fn product_bound_example() {
        // path v0–u–w, a=1, K=2: P(E_1) = ½ · (1/3) · (2/3) = 1/9
        let b = return_tail_lower_bound(1.0, 2, 1);
        assert!((b - 1.0 / 9.0).abs() < 1e-12);
        assert_eq!(return_tail_bound_at(1.0, 2, 2), b);
        assert_eq!(return_tail_bound_at(1.0, 2, 1), b);
    }

    #[test]
    fn environment_estimate_single_edge() {
        let g = FamilySpec::Path { n: 2 }.build(1.0).unwrap();
        let mut r = rng(10);
        let s = run_lrrw(&g, StopRule::MaxSteps(10), 10, &mut r).unwrap();
        let est = estimate_environment(&g, &s.state).unwrap();
        assert_eq!(est, vec![Some(1.0)]);
    }

    #[test]
    fn environment_estimate_recovers_rwre_weights() {
        // consistency: walk in a known environment, ratios recovered < 5%
        let g = FamilySpec::Path { n: 3 }.build(1.0).unwrap();
        let w = vec![1.0, 3.0];
        let env = Environment::edge_weighted(&g, w.clone()).unwrap();
        let mut r = rng(11);
        let mut state = LrrwState::new(&g);
        for _ in 0..1_000_000 {
            let v = state.position;
            let (to, _) = crate::rwre::rwre_step(&g, &env, v, &mut r);
            state.record_step(&g, g.dir_edge(v, to).unwrap());
        }
        let est = estimate_environment(&g, &state).unwrap();
        let ratio = est[1].unwrap() / est[0].unwrap();
        assert!((ratio - 3.0).abs() / 3.0 < 0.05, "ratio {ratio}");
    }

    #[test]
    fn partial_exchangeability_exhaustive() {
        // identical per-edge crossing counts + same start ⇒ identical exact
        // path probabilities; enumerated over all paths of length ≤ 6
        for g in [triangle(), FamilySpec::Path { n: 3 }.build(1.0).unwrap()] {
            let mut groups: HashMap<(Vec<u64>, usize), Vec<f64>> = HashMap::new();
            // DFS over vertex sequences from v0
            fn explore(
                g: &Graph,
                state: &LrrwState,
                prob: f64,
                depth: usize,
                groups: &mut HashMap<(Vec<u64>, usize), Vec<f64>>,
            ) {
                if depth == 6 {
                    return;
                }
                let ws = transition_weights(g, state);
                let total: f64 = ws.iter().map(|x| x.1).sum();
                for &(d, w) in &ws {
                    let mut next = state.clone();
                    next.record_step(g, d);
                    let p = prob * w / total;
                    let key: (Vec<u64>, usize) =
                        ((0..g.edge_count()).map(|e| next.crossings(e)).collect(), depth);
                    groups.entry(key).or_default().push(p);
                    explore(g, &next, p, depth + 1, groups);
                }
            }
            explore(&g, &LrrwState::new(&g), 1.0, 0, &mut groups);
            for (key, probs) in groups {
                for p in &probs {
                    assert!(
                        (p - probs[0]).abs() < 1e-12,
                        "exchangeability violated at {key:?}: {probs:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn polya_limit_matches_beta_oracle() {
        // a = 0.5 on the center-started 3-path vs Beta(a/2, a/2), via KS.
        // The urn fraction converges at rate n^{-a/2}, so small a needs a
        // long horizon and a moderate sample count.
        let mut g = FamilySpec::Path { n: 3 }.build(0.5).unwrap();
        g = g.with_v0(1).unwrap();
        let a = 0.5;
        let pass = stats::passes_with_retry(12, |seed| {
            let mut r = rng(seed);
            let samples: Vec<f64> = (0..400)
                .map(|_| polya_fraction(&g, 200_000, &mut r).unwrap())
                .collect();
            let ks = stats::ks_test(&samples, |x| beta_reg(a / 2.0, a / 2.0, x.clamp(0.0, 1.0)))
                .unwrap();
            ks.p > 0.01
        });
        assert!(pass, "LRRW urn fraction does not match Beta(a/2,a/2)");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        // counter consistency after every step on random graphs
        #[test]
        fn state_invariants_hold(pick in 0usize..4, size in 2usize..7, seed in 0u64..10_000) {
            let spec = match pick {
                0 => FamilySpec::Path { n: size },
                1 => FamilySpec::Cycle { n: size.max(3) },
                2 => FamilySpec::Star { leaves: size },
                _ => FamilySpec::KAryTree { arity: 2, depth: size % 4 },
            };
            let g = spec.build(0.7).unwrap();
            if g.edge_count() == 0 {
                return Ok(());
            }
            let mut r = rng(seed);
            let mut state = LrrwState::new(&g);
            for _ in 0..1_500 {
                lrrw_step(&g, &mut state, &mut r).unwrap();
                prop_assert!(state.check_invariants(&g));
            }
        }
    }
}
