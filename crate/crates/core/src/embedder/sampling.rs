use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::types::QueryGraph;

/// How positives are drawn for an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveMode {
    /// `count` i.i.d. uniform neighbours.
    Uniform { count: usize },
    /// Every node visited by `walks_per_node` random walks of
    /// `walk_length` steps started at the anchor (anchor itself excluded,
    /// repeats kept).
    Walks {
        walk_length: usize,
        walks_per_node: usize,
    },
}

impl Default for PositiveMode {
    fn default() -> Self {
        PositiveMode::Walks {
            walk_length: 3,
            walks_per_node: 10,
        }
    }
}

/// Empty when `q` is isolated; callers skip such anchors.
pub fn sample_positives<R: Rng + ?Sized>(
    graph: &QueryGraph,
    q: usize,
    mode: PositiveMode,
    rng: &mut R,
) -> Vec<usize> {
    let nbrs = graph.neighbors(q);
    if nbrs.is_empty() {
        return Vec::new();
    }
    match mode {
        PositiveMode::Uniform { count } => (0..count)
            .map(|_| *nbrs.choose(rng).expect("non-empty"))
            .collect(),
        PositiveMode::Walks {
            walk_length,
            walks_per_node,
        } => {
            let mut out = Vec::with_capacity(walk_length * walks_per_node);
            for _ in 0..walks_per_node {
                let mut at = q;
                for _ in 0..walk_length {
                    // every node reached from q has at least the edge back
                    at = *graph.neighbors(at).choose(rng).expect("non-empty");
                    if at != q {
                        out.push(at);
                    }
                }
            }
            out
        }
    }
}

/// `k` uniform draws (with replacement) from the non-neighbours of `q`,
/// `q` itself excluded.
pub fn sample_negatives<R: Rng + ?Sized>(
    graph: &QueryGraph,
    q: usize,
    k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = graph.n_nodes();
    if q >= n {
        return Err(Error::UnknownQuery(q));
    }
    let available = n - 1 - graph.degree(q);
    if k == 0 {
        return Ok(Vec::new());
    }
    if available == 0 {
        return Err(Error::InsufficientNonNeighbors {
            node: q,
            available,
            requested: k,
        });
    }
    // Rejection is fast unless non-neighbours are rare; then enumerate.
    if available * 8 >= n {
        let mut out = Vec::with_capacity(k);
        while out.len() < k {
            let c = rng.random_range(0..n);
            if c != q && !graph.is_adjacent(q, c) {
                out.push(c);
            }
        }
        Ok(out)
    } else {
        let pool: Vec<usize> = (0..n)
            .filter(|&c| c != q && !graph.is_adjacent(q, c))
            .collect();
        Ok((0..k)
            .map(|_| *pool.choose(rng).expect("non-empty"))
            .collect())
    }
}
