//! Bernoulli-ladder coupling of the reinforced walk.
//!
//! For a fixed directed path `γ` from the start vertex, every edge
//! `e ∈ γ∖e₁` (with reference exit `f = (e′)⁻¹` at its tail `v`) carries two
//! ladders of independent Bernoulli variables
//!
//! ```text
//!   Y_j  = Bern( a_e / (j+1+a_e+a_f) )        j ≥ 0
//!   Y′_j = Bern( (1+a_f) / (2j+1+a_v) )       j ≥ 0
//! ```
//!
//! (`a_v` is a cap on the total initial weight at `v`; with uniform weights
//! `a` and degree bound `K` the ladders reduce to `Bern(a/(j+1+2a))` and
//! `Bern((1+a)/(2j+1+Ka))`). `Y′_0` decides which of `e`, `f` is used first;
//! on the `Y′_0 = 0` branch `M̄_e = min{j≥1 : Y′_j = 1}` with `M̄_f = 1`, on
//! the `Y′_0 = 1` branch `M̄_f = min{j≥1 : Y_j = 1}` with `M̄_e = 1`, and
//! `Q̄ = M̄_e/M̄_f`.
//!
//! The coupled run consumes one coherent ladder per edge while reproducing
//! the exact reinforced-walk law: at each step the ladder bit is a sub-event
//! of the actual transition drawn from the true step distribution, so that
//! whenever the walk realizes `γ` as its domination path, the plain estimator
//! satisfies `Q(e) ≤ Q̄(e)` for every edge of `γ∖e₁` — hard, per-run
//! domination, not just in distribution.

use rand::Rng;
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::graph::{DirEdge, Graph, Vertex};
use crate::lrrw::{LrrwState, QPair, QTracker};

#[derive(Debug, Error)]
pub enum CouplingError {
    #[error("ladder parameter out of (0,1): {0}")]
    BadLadder(String),
    #[error("moment oracle needs s in (0, 1/2), got {0} (series tail diverges)")]
    DivergenceRisk(f64),
    #[error("oracle truncation could not reach tolerance {0} (achieved {1})")]
    Tolerance(f64, f64),
    #[error("invalid gamma path: {0}")]
    BadGamma(String),
}

/// Ladder parameters for one edge pair `(e, f)` at a vertex.
#[derive(Clone, Copy, Debug)]
pub struct BernoulliLadder {
    pub a_e: f64,
    pub a_f: f64,
    /// Cap on the total initial weight at the vertex (`a_v`); any value
    /// `≥ Σ_{h∋v} a_h` keeps the coupling valid. The uniform construction
    /// uses `K·a` with the graph's degree bound.
    pub a_cap: f64,
}

impl BernoulliLadder {
    /// Uniform initial weight `a` on a graph with degree bound `k`.
    pub fn uniform(a: f64, k: usize) -> Result<BernoulliLadder, CouplingError> {
        if !(a > 0.0) || !a.is_finite() || k < 2 {
            return Err(CouplingError::BadLadder(format!("a={a}, k={k}")));
        }
        Ok(BernoulliLadder { a_e: a, a_f: a, a_cap: k as f64 * a })
    }

    /// Ladder for a directed edge with its reference exit, using the actual
    /// vertex weight total as the cap (the unequal-weights form).
    pub fn for_edge(g: &Graph, e: DirEdge, f: DirEdge) -> BernoulliLadder {
        let v = g.tail(e);
        debug_assert_eq!(g.tail(f), v);
        BernoulliLadder {
            a_e: g.weight(e.edge),
            a_f: g.weight(f.edge),
            a_cap: g.vertex_weight(v),
        }
    }

    pub fn y_param(&self, j: u64) -> f64 {
        self.a_e / (j as f64 + 1.0 + self.a_e + self.a_f)
    }

    pub fn yprime_param(&self, j: u64) -> f64 {
        (1.0 + self.a_f) / (2.0 * j as f64 + 1.0 + self.a_cap)
    }

    /// `P(Y′_1 = … = Y′_n = 0)` in closed form (`n` may be any real ≥ 0):
    /// `∏_{j=1}^n (j+α)/(j+β)` with `α = (a_v−a_f)/2`, `β = (1+a_v)/2`.
    pub fn yprime_survival_ln(&self, n: f64) -> f64 {
        let alpha = (self.a_cap - self.a_f) / 2.0;
        let beta = (1.0 + self.a_cap) / 2.0;
        lgamma_diff(n + 1.0, alpha, beta) - lgamma_diff(1.0, alpha, beta)
    }

    /// `P(Y_1 = … = Y_n = 0)`: `∏_{j=1}^n (j+1+a_f)/(j+1+a_e+a_f)`.
    pub fn y_survival_ln(&self, n: f64) -> f64 {
        lgamma_diff(n + 2.0, self.a_f, self.a_e + self.a_f)
            - lgamma_diff(2.0, self.a_f, self.a_e + self.a_f)
    }

    /// Exact `P(Y′_0 = 0, M̄_e = n)` — the closed product displayed in the
    /// moment estimation.
    pub fn pmf_branch0(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        (1.0 - self.yprime_param(0))
            * self.yprime_param(n)
            * self.yprime_survival_ln((n - 1) as f64).exp()
    }

    /// Exact `P(Y′_0 = 1, M̄_f = n)`.
    pub fn pmf_branch1(&self, n: u64) -> f64 {
        debug_assert!(n >= 1);
        self.yprime_param(0) * self.y_param(n) * self.y_survival_ln((n - 1) as f64).exp()
    }
}

/// `lnΓ(x+a) − lnΓ(x+b)`, stable for large `x` where direct subtraction
/// cancels catastrophically. The asymptotic branch stays accurate out to
/// arbitrarily large arguments (the series tails need x up to ~10^200 when
/// the decay exponents are small).
fn lgamma_diff(x: f64, a: f64, b: f64) -> f64 {
    if x < 1e5 {
        ln_gamma(x + a) - ln_gamma(x + b)
    } else {
        // Γ(x+a)/Γ(x+b) = x^{a-b} (1 + (a-b)(a+b-1)/(2x) + O(x⁻²))
        let d = a - b;
        let c1 = d * (a + b - 1.0) / (2.0 * x);
        d * x.ln() + c1.ln_1p()
    }
}

/// The dominating variable: branch bit plus the pair `(M̄_e, M̄_f)` with
/// `min(M̄_e, M̄_f) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QBar {
    /// Realized `Y′_0`.
    pub branch_one: bool,
    pub m_e: u64,
    pub m_f: u64,
}

impl QBar {
    pub fn value(self) -> f64 {
        self.m_e as f64 / self.m_f as f64
    }
}

/// Samples `Q̄` from fresh ladders.
pub fn sample_qbar<R: Rng + ?Sized>(ladder: &BernoulliLadder, rng: &mut R) -> QBar {
    let branch_one = rng.random::<f64>() < ladder.yprime_param(0);
    if branch_one {
        QBar { branch_one, m_e: 1, m_f: sample_first_hit(ladder, true, 0, rng) }
    } else {
        QBar { branch_one, m_e: sample_first_hit(ladder, false, 0, rng), m_f: 1 }
    }
}

/// Samples `min{j ≥ 1 : ladder_j = 1}` conditioned on the first `skip`
/// indices (beyond 0) being 0, by inverting the closed-form survival
/// function. The sequential loop would a.s. terminate but has unbounded
/// expected length; inversion gives the identical law at O(log) cost.
fn sample_first_hit<R: Rng + ?Sized>(
    ladder: &BernoulliLadder,
    y_ladder: bool,
    skip: u64,
    rng: &mut R,
) -> u64 {
    let ln_surv = |n: f64| {
        if y_ladder {
            ladder.y_survival_ln(n)
        } else {
            ladder.yprime_survival_ln(n)
        }
    };
    let base = ln_surv(skip as f64);
    let target = rng.random::<f64>().max(1e-300).ln() + base; // ln(U · S(skip))
    // find min n > skip with ln S(n) < target
    let mut lo = skip; // S(lo) ≥ target region boundary
    let mut hi = (skip + 1).max(2);
    while ln_surv(hi as f64) >= target {
        lo = hi;
        hi = hi.saturating_mul(2);
        if hi > (1 << 62) {
            break;
        }
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ln_surv(mid as f64) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Exact `E[Q̄^s] = Σ_n n^s P(Y′_0=0, M̄_e=n) + Σ_n n^{-s} P(Y′_0=1, M̄_f=n)`,
/// within `tol`.
///
/// Both series have polynomial tails (`n^{s-3/2}` and `n^{-1-s-a_e}`), so
/// brute truncation cannot reach small tolerances; instead the head is
/// summed exactly and each tail is integrated (midpoint/Euler–Maclaurin plus
/// dyadic adaptive quadrature of the closed-form term function, with an
/// analytic power-law remainder).
pub fn qbar_moment_oracle(
    ladder: &BernoulliLadder,
    s: f64,
    tol: f64,
) -> Result<f64, CouplingError> {
    if !(s > 0.0 && s < 0.5) {
        return Err(CouplingError::DivergenceRisk(s));
    }
    if !(tol > 0.0) {
        return Err(CouplingError::BadLadder(format!("tol={tol}")));
    }
    let head_n: u64 = 16_384;
    let yp0 = ladder.yprime_param(0);

    // branch 0 head: running products, no cancellation
    let mut sum0 = 0.0;
    {
        let mut surv = 1.0;
        for n in 1..=head_n {
            let p = ladder.yprime_param(n);
            sum0 += (n as f64).powf(s) * (1.0 - yp0) * p * surv;
            surv *= 1.0 - p;
        }
    }
    // branch 1 head
    let mut sum1 = 0.0;
    {
        let mut surv = 1.0;
        for n in 1..=head_n {
            let p = ladder.y_param(n);
            sum1 += (n as f64).powf(-s) * yp0 * p * surv;
            surv *= 1.0 - p;
        }
    }

    // tails: Σ_{n>N} t(n) ≈ ∫_{N+1/2}^∞ t, t the closed-form term function
    let kappa = (1.0 + ladder.a_f) / 2.0;
    let rho0 = kappa - s; // t0 ~ x^{-1-ρ0}
    let t0 = |x: f64| {
        x.powf(s)
            * (1.0 - yp0)
            * ((1.0 + ladder.a_f) / (2.0 * x + 1.0 + ladder.a_cap))
            * ladder.yprime_survival_ln(x - 1.0).exp()
    };
    let rho1 = s + ladder.a_e;
    let t1 = |x: f64| {
        x.powf(-s)
            * yp0
            * (ladder.a_e / (x + 1.0 + ladder.a_e + ladder.a_f))
            * ladder.y_survival_ln(x - 1.0).exp()
    };
    let x0 = head_n as f64 + 0.5;
    let tail0 = power_tail_integral(&t0, x0, rho0, tol / 4.0)?;
    let tail1 = power_tail_integral(&t1, x0, rho1, tol / 4.0)?;

    Ok(sum0 + tail0 + sum1 + tail1)
}

/// `∫_{x0}^∞ t(x) dx` for a smooth integrand decaying like `x^{-1-ρ}`:
/// dyadic adaptive-Simpson blocks plus an analytic power-law remainder.
fn power_tail_integral(
    t: &dyn Fn(f64) -> f64,
    x0: f64,
    rho: f64,
    tol: f64,
) -> Result<f64, CouplingError> {
    if rho <= 1e-6 {
        return Err(CouplingError::BadLadder(format!("tail exponent too small: {rho}")));
    }
    // small ρ needs very many dyadic blocks (x out to ~4^{1/ρ}); the
    // closed-form integrand stays cheap and stable there
    const MAX_BLOCKS: usize = 1024;
    let block_tol = tol / (2.0 * MAX_BLOCKS as f64);
    let mut total = 0.0;
    let mut left = x0;
    for _ in 0..MAX_BLOCKS {
        let right = left * 2.0;
        total += adaptive_simpson(t, left, right, block_tol, 24);
        left = right;
        // remainder bound: t sits under C·x^{-1-ρ} matched at the cut
        let remainder = t(left) * left / rho * 1.1;
        if remainder < tol / 2.0 {
            return Ok(total + remainder / 2.2); // center the bracket
        }
        if left > 1e260 {
            break;
        }
    }
    let achieved = t(left) * left / rho * 1.1;
    Err(CouplingError::Tolerance(tol, achieved))
}

pub(crate) fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, fa, b, fb, fm);
    rec(f, a, b, fa, fb, fm, whole, tol, depth)
}

/// Outcome of a coupled run for one edge of `γ`.
#[derive(Clone, Debug)]
pub struct CoupledEdge {
    pub e: DirEdge,
    pub f: DirEdge,
    /// Plain estimator pair, if frozen before the run ended.
    pub q: Option<QPair>,
    /// Dominating variable assembled from the realized ladder (extended with
    /// fresh draws where the walk did not consume it).
    pub qbar: QBar,
}

/// A coupled reinforced-walk run against a fixed path `γ`.
#[derive(Clone, Debug)]
pub struct CoupledRun {
    pub steps: u64,
    pub timed_out: bool,
    /// Whether the realized domination path of `γ`'s last edge equals `γ`.
    pub d_gamma: bool,
    pub first_step: DirEdge,
    /// The first few realized steps (up to four), for marginal-law checks.
    pub early_steps: Vec<DirEdge>,
    pub edges: Vec<CoupledEdge>,
}

struct EdgeCoupling {
    e: DirEdge,
    f: DirEdge,
    ladder: BernoulliLadder,
    /// Realized `Y′_0`.
    branch: Option<bool>,
    /// Realized `Y′_j` for j = 1, 2, … (contiguous, in visit order).
    yprime_tail: Vec<bool>,
    /// Realized `Y_j` for j = 1, 2, … (contiguous, in `{e,f}`-exit order;
    /// `Y_0` is never consulted: the first `{e,f}` exit is forced to `f`).
    y_tail: Vec<bool>,
    /// Directed exits along `e` or `f` so far.
    ef_exits: u64,
}

/// Runs the LRRW coupled to the ladders of `gamma` until every `Q(e)` on the
/// path is frozen, the run becomes inconsistent with `D_γ`, or the budget is
/// exhausted. The realized trajectory is distributed exactly as the plain
/// reinforced walk.
pub fn coupled_lrrw_run<R: Rng + ?Sized>(
    g: &Graph,
    gamma: &[DirEdge],
    budget: u64,
    rng: &mut R,
) -> Result<CoupledRun, CouplingError> {
    validate_gamma(g, gamma)?;
    let target = *gamma.last().unwrap();
    let mut coupling_at: Vec<Option<usize>> = vec![None; g.vertex_count()];
    let mut couplings: Vec<EdgeCoupling> = Vec::with_capacity(gamma.len().saturating_sub(1));
    for (i, &e) in gamma.iter().enumerate().skip(1) {
        let f = gamma[i - 1].reverse();
        let uniform = g.weights().windows(2).all(|w| w[0] == w[1]);
        let ladder = if uniform {
            BernoulliLadder::uniform(g.weight(0), g.max_degree().max(2))
                .map_err(|e| CouplingError::BadLadder(format!("{e}")))?
        } else {
            BernoulliLadder::for_edge(g, e, f)
        };
        coupling_at[g.tail(e)] = Some(couplings.len());
        couplings.push(EdgeCoupling {
            e,
            f,
            ladder,
            branch: None,
            yprime_tail: Vec::new(),
            y_tail: Vec::new(),
            ef_exits: 0,
        });
    }

    let mut state = LrrwState::new(g);
    let mut tracker = QTracker::new(g);
    let mut consistent = true;
    let mut d_gamma: Option<bool> = None;
    let mut first_step = None;
    let mut early_steps = Vec::with_capacity(4);

    let in_gamma: std::collections::HashMap<usize, DirEdge> =
        gamma.iter().map(|&d| (d.edge, d)).collect();

    while state.step < budget {
        let v = state.position;
        let d = match coupling_at[v] {
            Some(ci)
                if consistent
                    && !(state.exits(couplings[ci].e) >= 1 && state.exits(couplings[ci].f) >= 1) =>
            {
                coupled_step(g, &mut state, &mut couplings[ci], rng)
            }
            // Cases 0–2: off-path vertex, inconsistent history, or Q already
            // determined — plain reinforced step.
            _ => plain_step(g, &mut state, rng),
        };
        tracker.observe(g, d);
        if first_step.is_none() {
            first_step = Some(d);
        }
        if early_steps.len() < 4 {
            early_steps.push(d);
        }

        // consistency with D_γ: γ-edges must be crossed forward before
        // backward, and every γ-interior vertex must be first entered
        // through its γ-predecessor
        if consistent {
            if let Some(&gd) = in_gamma.get(&d.edge) {
                if d == gd.reverse() && state.exits(gd) == 0 {
                    consistent = false;
                }
            }
            let head = g.head(d);
            if state.visits(head) == 1 {
                if let Some(ci) = coupling_at[head] {
                    if couplings[ci].f != d.reverse() {
                        consistent = false;
                    }
                }
            }
        }

        // the realized domination path is decided at the first crossing of
        // the target edge; once consistency dies it can never hold. At least
        // two steps are always taken so early-path marginals stay comparable.
        if d_gamma.is_none() && d.edge == target.edge {
            d_gamma = Some(consistent && d == target);
        }
        if state.step < 2 {
            continue;
        }
        if !consistent {
            if d_gamma.is_none() {
                d_gamma = Some(false);
            }
            break;
        }
        if d_gamma.is_some()
            && couplings
                .iter()
                .all(|c| state.exits(c.e) >= 1 && state.exits(c.f) >= 1)
        {
            break;
        }
    }

    let timed_out = d_gamma.is_none()
        || couplings.iter().any(|c| tracker.pair(c.e).is_none() && consistent);
    let edges = couplings
        .iter()
        .map(|c| CoupledEdge {
            e: c.e,
            f: c.f,
            q: tracker.pair(c.e),
            qbar: finish_qbar(c, rng),
        })
        .collect();
    Ok(CoupledRun {
        steps: state.step,
        timed_out,
        d_gamma: d_gamma.unwrap_or(false),
        first_step: first_step.expect("budget ≥ 1 step or caller checks steps"),
        early_steps,
        edges,
    })
}

fn validate_gamma(g: &Graph, gamma: &[DirEdge]) -> Result<(), CouplingError> {
    if gamma.is_empty() {
        return Err(CouplingError::BadGamma("empty path".into()));
    }
    if g.tail(gamma[0]) != g.v0() {
        return Err(CouplingError::BadGamma("path must start at v0".into()));
    }
    let mut seen_vertices = vec![g.v0()];
    let mut seen_edges = std::collections::HashSet::new();
    for (i, &d) in gamma.iter().enumerate() {
        if !seen_edges.insert(d.edge) {
            return Err(CouplingError::BadGamma("repeated edge".into()));
        }
        if i > 0 && g.tail(d) != g.head(gamma[i - 1]) {
            return Err(CouplingError::BadGamma("edges do not chain head-to-tail".into()));
        }
        let h = g.head(d);
        let closes_loop = i == gamma.len() - 1 && h == g.v0();
        if !closes_loop {
            if seen_vertices.contains(&h) {
                return Err(CouplingError::BadGamma("path is not simple".into()));
            }
            seen_vertices.push(h);
        }
    }
    Ok(())
}

fn plain_step<R: Rng + ?Sized>(g: &Graph, state: &mut LrrwState, rng: &mut R) -> DirEdge {
    crate::lrrw::lrrw_step(g, state, rng).expect("coupled runs use connected graphs")
}

/// One coupled step at the tail of a γ-edge (Cases 3–5).
fn coupled_step<R: Rng + ?Sized>(
    g: &Graph,
    state: &mut LrrwState,
    c: &mut EdgeCoupling,
    rng: &mut R,
) -> DirEdge {
    let v = state.position;
    let visit = state.visits(v);
    let d = if c.branch.is_none() || !c.branch.unwrap() {
        // Cases 3 and 4: the ladder bit rides on the exit-along-f event.
        // Case 3 (first visit) uses Y′_0 and defines the branch; later
        // visits on the 0-branch use Y′_{n-1}.
        let j = visit - 1;
        let p_ladder = c.ladder.yprime_param(j);
        let (d, bit) = step_with_reference_first(g, state, c.f, p_ladder, rng);
        if visit == 1 {
            c.branch = Some(bit);
        } else {
            debug_assert_eq!(c.yprime_tail.len() as u64 + 1, j);
            c.yprime_tail.push(bit);
        }
        d
    } else {
        // Case 5: Y′_0 = 1. Stage one picks "{e,f} or another edge" with the
        // exact reinforced probabilities; stage two redraws inside the pair,
        // coupled to Y_{k-1} at the k-th pair exit.
        let nbrs = g.neighbors(v);
        let w_of = |d: DirEdge| g.weight(d.edge) + state.crossings(d.edge) as f64;
        let total: f64 =
            nbrs.iter().map(|&(_, e)| g.weight(e) + state.crossings(e) as f64).sum();
        let w_e = w_of(c.e);
        let w_f = w_of(c.f);
        let u1 = rng.random::<f64>() * total;
        if u1 < w_e + w_f {
            let k = c.ef_exits + 1;
            debug_assert!(k >= 2, "the first pair exit happens in Case 3");
            let p_cond = w_e / (w_e + w_f);
            let p_y = c.ladder.y_param(k - 1);
            debug_assert!(p_cond <= p_y + 1e-12, "p_cond {p_cond} > p_y {p_y}");
            let u2 = rng.random::<f64>();
            let bit = u2 < p_y;
            debug_assert_eq!(c.y_tail.len() as u64 + 2, k);
            c.y_tail.push(bit);
            let d = if u2 < p_cond { c.e } else { c.f };
            state.record_step(g, d);
            d
        } else {
            // remaining mass over the other edges, exact conditional law
            let mut acc = u1 - (w_e + w_f);
            let mut chosen = None;
            for &(n, e) in nbrs {
                let dd = DirEdge { edge: e, rev: v > n };
                if dd == c.e || dd == c.f {
                    continue;
                }
                acc -= g.weight(e) + state.crossings(e) as f64;
                if acc < 0.0 {
                    chosen = Some(dd);
                    break;
                }
            }
            let d = chosen.unwrap_or_else(|| {
                let &(n, e) = nbrs
                    .iter()
                    .rev()
                    .find(|&&(n, e)| {
                        let dd = DirEdge { edge: e, rev: v > n };
                        dd != c.e && dd != c.f
                    })
                    .expect("vertex has an edge outside the pair");
                DirEdge { edge: e, rev: v > n }
            });
            state.record_step(g, d);
            d
        }
    };
    if d == c.e || d == c.f {
        c.ef_exits += 1;
    }
    d
}

/// Draws the exact reinforced step with the reference edge mapped to the
/// low end of the uniform, so the ladder bit `[u < p_ladder]` is a sub-event
/// of "exit along f". Returns the chosen edge and the bit.
fn step_with_reference_first<R: Rng + ?Sized>(
    g: &Graph,
    state: &mut LrrwState,
    f: DirEdge,
    p_ladder: f64,
    rng: &mut R,
) -> (DirEdge, bool) {
    let v = state.position;
    let nbrs = g.neighbors(v);
    let total: f64 = nbrs.iter().map(|&(_, e)| g.weight(e) + state.crossings(e) as f64).sum();
    let w_f = g.weight(f.edge) + state.crossings(f.edge) as f64;
    let q_f = w_f / total;
    debug_assert!(p_ladder <= q_f + 1e-12, "ladder bit not a sub-event: {p_ladder} > {q_f}");
    let u = rng.random::<f64>();
    let bit = u < p_ladder;
    let d = if bit || u < q_f {
        f
    } else {
        let mut acc = (u - q_f) * total;
        let mut chosen = None;
        for &(n, e) in nbrs {
            let dd = DirEdge { edge: e, rev: v > n };
            if dd == f {
                continue;
            }
            acc -= g.weight(e) + state.crossings(e) as f64;
            if acc < 0.0 {
                chosen = Some(dd);
                break;
            }
        }
        chosen.unwrap_or_else(|| {
            let &(n, e) = nbrs
                .iter()
                .rev()
                .find(|&&(n, e)| DirEdge { edge: e, rev: v > n } != f)
                .expect("degree ≥ 2 at a coupled vertex");
            DirEdge { edge: e, rev: v > n }
        })
    };
    state.record_step(g, d);
    (d, bit)
}

/// Assembles `Q̄` from the ladder variables the walk consumed, extending
/// with fresh draws beyond the consumed prefix (one coherent ladder per run).
fn finish_qbar<R: Rng + ?Sized>(c: &EdgeCoupling, rng: &mut R) -> QBar {
    let branch_one = match c.branch {
        Some(b) => b,
        None => rng.random::<f64>() < c.ladder.yprime_param(0),
    };
    if branch_one {
        let m_f = match c.y_tail.iter().position(|&b| b) {
            Some(i) => i as u64 + 1,
            None => sample_first_hit(&c.ladder, true, c.y_tail.len() as u64, rng),
        };
        QBar { branch_one, m_e: 1, m_f }
    } else {
        let m_e = match c.yprime_tail.iter().position(|&b| b) {
            Some(i) => i as u64 + 1,
            None => sample_first_hit(&c.ladder, false, c.yprime_tail.len() as u64, rng),
        };
        QBar { branch_one, m_e, m_f: 1 }
    }
}

/// Builds a directed path from a vertex sequence.
pub fn gamma_from_vertices(g: &Graph, vs: &[Vertex]) -> Result<Vec<DirEdge>, CouplingError> {
    if vs.len() < 2 {
        return Err(CouplingError::BadGamma("need at least two vertices".into()));
    }
    vs.windows(2)
        .map(|w| {
            g.dir_edge(w[0], w[1])
                .ok_or_else(|| CouplingError::BadGamma(format!("{} and {} not adjacent", w[0], w[1])))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::FamilySpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ladder_uniform_params() {
        let l = BernoulliLadder::uniform(0.1, 3).unwrap();
        assert!((l.y_param(0) - 0.1 / 1.2).abs() < 1e-15);
        assert!((l.yprime_param(0) - 1.1 / 1.3).abs() < 1e-15);
        assert!((l.yprime_param(2) - 1.1 / (4.0 + 1.3)).abs() < 1e-15);
    }

    #[test]
    fn survival_matches_running_product() {
        let l = BernoulliLadder::uniform(0.23, 4).unwrap();
        let mut prod_yp = 1.0;
        let mut prod_y = 1.0;
        for n in 1..=200u64 {
            prod_yp *= 1.0 - l.yprime_param(n);
            prod_y *= 1.0 - l.y_param(n);
            assert!(
                (l.yprime_survival_ln(n as f64).exp() - prod_yp).abs() < 1e-12,
                "yprime survival at {n}"
            );
            assert!(
                (l.y_survival_ln(n as f64).exp() - prod_y).abs() < 1e-12,
                "y survival at {n}"
            );
        }
    }

    #[test]
    fn lgamma_diff_asymptotic_matches_direct() {
        // the asymptotic branch agrees with direct subtraction at a point
        // where both are still accurate
        for &(a, b) in &[(0.3, 1.7), (0.05, 0.55), (1.45, 0.2)] {
            let x = 2e5;
            let direct = ln_gamma(x + a) - ln_gamma(x + b);
            let asymptotic = lgamma_diff(x, a, b);
            assert!((direct - asymptotic).abs() < 1e-7, "a={a} b={b}");
        }
    }

    #[test]
    fn qbar_sampler_matches_closed_product() {
        // empirical P(Y'_0=0, M̄_e=n) vs the closed product, a=0.1, K=3
        let l = BernoulliLadder::uniform(0.1, 3).unwrap();
        let mut r = rng(1);
        let n_samples = 200_000usize;
        let mut hist = vec![0u64; 21];
        for _ in 0..n_samples {
            let q = sample_qbar(&l, &mut r);
            if !q.branch_one && q.m_e <= 20 {
                hist[q.m_e as usize] += 1;
            }
        }
        for n in 1..=20u64 {
            let expect = l.pmf_branch0(n);
            let p_hat = hist[n as usize] as f64 / n_samples as f64;
            let se = (expect * (1.0 - expect) / n_samples as f64).sqrt();
            assert!(
                (p_hat - expect).abs() < 3.5 * se + 1e-9,
                "n={n}: p_hat={p_hat} expect={expect}"
            );
        }
    }

    #[test]
    fn qbar_value_semantics() {
        assert_eq!(QBar { branch_one: false, m_e: 1, m_f: 1 }.value(), 1.0);
        assert_eq!(QBar { branch_one: true, m_e: 1, m_f: 4 }.value(), 0.25);
        let l = BernoulliLadder::uniform(0.2, 3).unwrap();
        let mut r = rng(2);
        for _ in 0..2_000 {
            let q = sample_qbar(&l, &mut r);
            assert_eq!(q.m_e.min(q.m_f), 1);
        }
    }

    #[test]
    fn oracle_zeroth_moment_limit() {
        // E Q̄^s → 1 as s → 0 (the two series recover the full mass); the
        // tails get extremely heavy in this limit, so the tolerance and the
        // gap both scale with s
        let l = BernoulliLadder::uniform(0.05, 3).unwrap();
        let v = qbar_moment_oracle(&l, 1e-3, 1e-5).unwrap();
        assert!((v - 1.0).abs() < 0.05, "s→0 oracle {v}");
        assert!(qbar_moment_oracle(&l, 0.5, 1e-8).is_err());
    }

    #[test]
    fn oracle_matches_brute_force_at_fast_decay() {
        // a = 1 gives steep tails; brute force to 10^7 is then trustworthy
        let l = BernoulliLadder::uniform(1.0, 3).unwrap();
        let s = 0.1;
        let mut brute = 0.0;
        let yp0 = l.yprime_param(0);
        let mut surv0 = 1.0;
        let mut surv1 = 1.0;
        for n in 1..=10_000_000u64 {
            let p0 = l.yprime_param(n);
            let p1 = l.y_param(n);
            brute += (n as f64).powf(s) * (1.0 - yp0) * p0 * surv0;
            brute += (n as f64).powf(-s) * yp0 * p1 * surv1;
            surv0 *= 1.0 - p0;
            surv1 *= 1.0 - p1;
        }
        let oracle = qbar_moment_oracle(&l, s, 1e-9).unwrap();
        assert!((oracle - brute).abs() < 1e-4, "oracle {oracle} brute {brute}");
        assert!(oracle > brute, "oracle must include the tail mass");
    }

    #[test]
    fn oracle_monte_carlo_cross_validation() {
        let l = BernoulliLadder::uniform(0.05, 4).unwrap();
        let s = 0.2;
        let oracle = qbar_moment_oracle(&l, s, 1e-7).unwrap();
        let mut r = rng(3);
        let n = 400_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = sample_qbar(&l, &mut r).value().powf(s);
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - oracle).abs() < 3.0 * se, "mc {mean} oracle {oracle} se {se}");
    }

    #[test]
    fn gamma_validation() {
        let g = FamilySpec::Path { n: 4 }.build(0.5).unwrap();
        let gamma = gamma_from_vertices(&g, &[0, 1, 2, 3]).unwrap();
        assert!(validate_gamma(&g, &gamma).is_ok());
        assert!(validate_gamma(&g, &gamma[1..]).is_err()); // not from v0
        let back = gamma_from_vertices(&g, &[0, 1, 0]);
        assert!(back.is_err() || validate_gamma(&g, &back.unwrap()).is_err());

        // a loop back to v0 is legal
        let tri = FamilySpec::Cycle { n: 3 }.build(1.0).unwrap();
        let loop_gamma = gamma_from_vertices(&tri, &[0, 1, 2, 0]).unwrap();
        assert!(validate_gamma(&tri, &loop_gamma).is_ok());
    }

    #[test]
    fn coupled_run_dominates_on_d_gamma() {
        // hard domination: zero violations allowed
        let g = FamilySpec::Path { n: 4 }.build(0.1).unwrap();
        let gamma = gamma_from_vertices(&g, &[0, 1, 2, 3]).unwrap();
        let mut r = rng(4);
        let mut d_gamma_runs = 0;
        for _ in 0..3_000 {
            let run = coupled_lrrw_run(&g, &gamma, 30_000, &mut r).unwrap();
            if run.d_gamma {
                d_gamma_runs += 1;
                for ce in &run.edges {
                    if let Some(q) = ce.q {
                        assert!(
                            q.value() <= ce.qbar.value() + 1e-12,
                            "domination violated: Q={} Q̄={}",
                            q.value(),
                            ce.qbar.value()
                        );
                    }
                }
            }
        }
        assert!(d_gamma_runs > 0, "no D_γ runs realized");
    }

    #[test]
    fn coupled_first_step_matches_plain_law() {
        let g = FamilySpec::KAryTree { arity: 2, depth: 3 }.build(0.5).unwrap();
        let gamma = gamma_from_vertices(&g, &[0, 1, 3, 7]).unwrap();
        let n = 60_000usize;
        let mut r = rng(5);
        let mut coupled = [0u64; 2];
        for _ in 0..n {
            let run = coupled_lrrw_run(&g, &gamma, 4, &mut r).unwrap();
            let slot = usize::from(run.first_step != gamma[0]);
            coupled[slot] += 1;
        }
        // plain first step from the root is uniform over the two root edges
        let p = coupled[0] as f64 / n as f64;
        let se = (0.25 / n as f64).sqrt();
        assert!((p - 0.5).abs() < 4.0 * se, "first-step p {p}");
    }
}
