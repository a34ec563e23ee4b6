//! Domain types shared across the crate.

use crate::error::{Error, Result};

/// Parameters of the query generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Trigram vocabulary size `m`.
    pub vocab_size: usize,
    /// Maximum query length `N`.
    pub max_len: usize,
    /// Poisson mean of the query length before truncation to `[1, N]`.
    pub lambda: f64,
    /// Per-position mixture weight of the exponential component, in `(1/2, 1]`.
    pub alphas: Vec<f64>,
    /// Per-position spread of the exponential component, `>= 0`.
    pub betas: Vec<f64>,
    /// Two queries are linked when their products are within this distance.
    pub epsilon_p: f64,
    pub n_products: usize,
    pub n_queries: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub const DEFAULT_MAX_LEN: usize = 50;

    /// Convenience constructor with constant per-position parameters.
    pub fn constant(
        dim: usize,
        vocab_size: usize,
        max_len: usize,
        lambda: f64,
        alpha: f64,
        beta: f64,
    ) -> Self {
        GeneratorConfig {
            dim,
            vocab_size,
            max_len,
            lambda,
            alphas: vec![alpha; max_len],
            betas: vec![beta; max_len],
            epsilon_p: 0.0,
            n_products: 1,
            n_queries: 0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.dim < 2 {
            return bad(format!("dim must be >= 2, got {}", self.dim));
        }
        if self.vocab_size < 1 {
            return bad("vocab_size must be >= 1".into());
        }
        if self.max_len < 1 {
            return bad("max_len must be >= 1".into());
        }
        if self.alphas.len() != self.max_len || self.betas.len() != self.max_len {
            return bad(format!(
                "need {} alphas and betas, got {} and {}",
                self.max_len,
                self.alphas.len(),
                self.betas.len()
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        for (i, &a) in self.alphas.iter().enumerate() {
            if !(a > 0.5 && a <= 1.0) {
                return bad(format!("alpha[{}] = {a} outside (0.5, 1]", i + 1));
            }
        }
        for (i, &b) in self.betas.iter().enumerate() {
            if !(b >= 0.0 && b.is_finite()) {
                return bad(format!("beta[{}] = {b} must be >= 0", i + 1));
            }
        }
        if !(self.epsilon_p >= 0.0) {
            return bad(format!("epsilon_p must be >= 0, got {}", self.epsilon_p));
        }
        if self.n_queries > 0 && self.n_products == 0 {
            return bad("queries need at least one product".into());
        }
        Ok(())
    }

    /// Mixture weight at 1-based `position`.
    pub fn alpha(&self, position: usize) -> f64 {
        self.alphas[position - 1]
    }

    /// Spread at 1-based `position`.
    pub fn beta(&self, position: usize) -> f64 {
        self.betas[position - 1]
    }
}

/// An ordered trigram sequence with the product that generated it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub trigram_ids: Vec<usize>,
    pub product_id: usize,
}

impl Query {
    pub fn new(trigram_ids: Vec<usize>, product_id: usize) -> Self {
        Query {
            trigram_ids,
            product_id,
        }
    }

    pub fn len(&self) -> usize {
        self.trigram_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trigram_ids.is_empty()
    }

    pub fn validate(&self, vocab_size: usize, max_len: usize) -> Result<()> {
        if self.trigram_ids.is_empty() {
            return Err(Error::EmptyQuery);
        }
        if self.trigram_ids.len() > max_len {
            return Err(Error::QueryTooLong {
                len: self.trigram_ids.len(),
                max_len,
            });
        }
        if let Some(&id) = self.trigram_ids.iter().find(|&&id| id >= vocab_size) {
            return Err(Error::TrigramOutOfRange { id, vocab_size });
        }
        Ok(())
    }
}

/// Undirected query-query graph plus the query → purchased-products map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGraph {
    adjacency: Vec<Vec<usize>>,
    purchases: Vec<Vec<(usize, u32)>>,
}

impl QueryGraph {
    /// Build from undirected edges. Duplicates and orientation are
    /// normalised; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        purchases: Vec<Vec<(usize, u32)>>,
    ) -> Result<Self> {
        if purchases.len() != n_nodes {
            return Err(Error::DimensionMismatch {
                left: purchases.len(),
                right: n_nodes,
            });
        }
        let mut adjacency = vec![Vec::new(); n_nodes];
        for (u, v) in edges {
            if u == v {
                return Err(Error::format("graph", format!("self-loop at {u}")));
            }
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::format(
                    "graph",
                    format!("edge ({u}, {v}) outside {n_nodes} nodes"),
                ));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(QueryGraph {
            adjacency,
            purchases,
        })
    }

    /// Build from neighbour lists that are already symmetric.
    pub(crate) fn from_adjacency_unchecked(
        mut adjacency: Vec<Vec<usize>>,
        purchases: Vec<Vec<(usize, u32)>>,
    ) -> Self {
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        QueryGraph {
            adjacency,
            purchases,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn n_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.adjacency[q]
    }

    pub fn degree(&self, q: usize) -> usize {
        self.adjacency[q].len()
    }

    pub fn is_adjacent(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn purchases(&self, q: usize) -> &[(usize, u32)] {
        &self.purchases[q]
    }

    pub fn purchase_map(&self) -> &[Vec<(usize, u32)>] {
        &self.purchases
    }

    /// Induced subgraph on nodes `0..n`.
    pub fn truncated(&self, n: usize) -> QueryGraph {
        let n = n.min(self.n_nodes());
        let adjacency = self.adjacency[..n]
            .iter()
            .map(|list| list.iter().copied().filter(|&v| v < n).collect())
            .collect();
        QueryGraph {
            adjacency,
            purchases: self.purchases[..n].to_vec(),
        }
    }

    /// Checks symmetry, sortedness and absence of self-loops.
    pub fn check_invariants(&self) -> Result<()> {
        for (u, list) in self.adjacency.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format("graph", format!("unsorted neighbours at {u}")));
            }
            for &v in list {
                if v == u {
                    return Err(Error::format("graph", format!("self-loop at {u}")));
                }
                if v >= self.n_nodes() || !self.is_adjacent(v, u) {
                    return Err(Error::format("graph", format!("asymmetric edge ({u}, {v})")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut c = GeneratorConfig::constant(4, 10, 3, 2.0, 0.9, 1.0);
        assert!(c.validate().is_ok());
        c.alphas[1] = 0.5;
        assert!(c.validate().is_err());
        c.alphas[1] = 1.0;
        c.betas.pop();
        assert!(c.validate().is_err());
        let c = GeneratorConfig::constant(1, 10, 3, 2.0, 0.9, 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn query_validation() {
        assert!(Query::new(vec![0, 1], 0).validate(2, 2).is_ok());
        assert!(matches!(
            Query::new(vec![0, 2], 0).validate(2, 2),
            Err(Error::TrigramOutOfRange { id: 2, .. })
        ));
        assert!(Query::new(vec![0, 0, 0], 0).validate(2, 2).is_err());
        assert!(Query::new(vec![], 0).validate(2, 2).is_err());
    }

    #[test]
    fn graph_normalises_edges() {
        let g = QueryGraph::from_edges(4, [(1, 0), (0, 1), (2, 3)], vec![vec![]; 4]).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (2, 3)]);
        assert!(g.check_invariants().is_ok());
        assert!(QueryGraph::from_edges(2, [(1, 1)], vec![vec![]; 2]).is_err());
        let t = g.truncated(3);
        assert_eq!(t.n_nodes(), 3);
        assert_eq!(t.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }
}
