//! Brute-force expansion constants on small graphs.
//!
//! Both Cheeger constants are exact infima over all vertex sets `A` with
//! `1 ≤ |A| ≤ ⌊n/2⌋` (the standard finite analogue: without the size
//! restriction `A = V` gives a degenerate ratio of zero). Enumeration is
//! exhaustive over subsets, so graphs are capped at 22 vertices.

use thiserror::Error;

use super::Graph;

pub const MAX_CHEEGER_VERTICES: usize = 22;

#[derive(Debug, Error)]
pub enum ExpansionError {
    #[error("graph has {0} vertices; exhaustive Cheeger enumeration is capped at {MAX_CHEEGER_VERTICES}")]
    TooLarge(usize),
    #[error("graph must be connected with at least 2 vertices")]
    Disconnected,
}

/// Exact nonnegative rational, kept unreduced-free for comparisons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    fn less_than(self, other: Ratio) -> bool {
        (self.num as u128) * (other.den as u128) < (other.num as u128) * (self.den as u128)
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn reduced(self) -> Ratio {
        let g = gcd(self.num, self.den);
        Ratio { num: self.num / g, den: self.den / g }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a.max(1)
    } else {
        gcd(b, a % b)
    }
}

/// Edge Cheeger constant `ι_E = min |∂_E A| / Vol A` with `Vol A = Σ_{v∈A} d_v`.
pub fn cheeger_edge(g: &Graph) -> Result<Ratio, ExpansionError> {
    cheeger_by(g, |g, mask| {
        let n = g.vertex_count();
        let mut cut = 0u64;
        let mut vol = 0u64;
        for v in 0..n {
            if mask & (1u32 << v) != 0 {
                vol += g.degree(v) as u64;
                for &(w, _) in g.neighbors(v) {
                    if mask & (1u32 << w) == 0 {
                        cut += 1;
                    }
                }
            }
        }
        Ratio { num: cut, den: vol }
    })
}

/// Vertex Cheeger constant `ι = min |∂A| / |A|` with the external vertex
/// boundary.
pub fn cheeger_vertex(g: &Graph) -> Result<Ratio, ExpansionError> {
    cheeger_by(g, |g, mask| {
        let n = g.vertex_count();
        let mut boundary = 0u64;
        let mut size = 0u64;
        for v in 0..n {
            if mask & (1u32 << v) != 0 {
                size += 1;
            } else if g.neighbors(v).iter().any(|&(w, _)| mask & (1u32 << w) != 0) {
                boundary += 1;
            }
        }
        Ratio { num: boundary, den: size }
    })
}

fn cheeger_by(
    g: &Graph,
    ratio_of: impl Fn(&Graph, u32) -> Ratio,
) -> Result<Ratio, ExpansionError> {
    let n = g.vertex_count();
    if n > MAX_CHEEGER_VERTICES {
        return Err(ExpansionError::TooLarge(n));
    }
    if n == 0 || !g.is_connected() {
        return Err(ExpansionError::Disconnected);
    }
    if n == 1 {
        return Err(ExpansionError::Disconnected);
    }
    let half = n / 2;
    let mut best: Option<Ratio> = None;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size == 0 || size > half {
            continue;
        }
        let r = ratio_of(g, mask);
        if best.is_none() || r.less_than(best.unwrap()) {
            best = Some(r);
        }
    }
    Ok(best.expect("at least one admissible subset").reduced())
}
