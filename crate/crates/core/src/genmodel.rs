//! The query generator.
//!
//! A product is a uniform draw from the unit sphere. A query for product `p`
//! has a truncated-Poisson length `n ∈ [1, N]`, and its `i`-th trigram is
//! drawn from the mixture
//!
//! ```text
//! P_{p,i}(t) = α_i · exp(β_i ⟨t, p⟩) / Z_{p,i} + (1 − α_i) / m
//! Z_{p,i}    = Σ_t exp(β_i ⟨t, p⟩)
//! ```
//!
//! Queries whose products lie within `epsilon_p` of each other are adjacent
//! in the query graph; every query purchases its own product once.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{dot_unchecked, squared_distance, Matrix};
use crate::rng::{self, sample_trigram_vocab, sample_unit_sphere, streams, StreamRng};
use crate::types::{GeneratorConfig, Query, QueryGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: GeneratorConfig,
    /// `m × d`, one trigram vector per row.
    pub vocab: Matrix,
    /// `n_products × d`, unit rows.
    pub products: Matrix,
    pub queries: Vec<Query>,
    pub graph: QueryGraph,
}

impl SyntheticDataset {
    pub fn check_invariants(&self) -> Result<()> {
        let c = &self.config;
        if self.vocab.rows() != c.vocab_size || self.vocab.cols() != c.dim {
            return Err(Error::format("dataset", "vocab shape does not match config"));
        }
        if self.products.rows() != c.n_products || self.products.cols() != c.dim {
            return Err(Error::format("dataset", "product shape does not match config"));
        }
        if self.queries.len() != self.graph.n_nodes() {
            return Err(Error::format("dataset", "graph size does not match query count"));
        }
        for (i, q) in self.queries.iter().enumerate() {
            q.validate(c.vocab_size, c.max_len)?;
            if q.product_id >= c.n_products {
                return Err(Error::format(
                    "dataset",
                    format!("query {i} references product {}", q.product_id),
                ));
            }
        }
        self.graph.check_invariants()
    }
}

/// `P(k)` for `k = 1..=max_len` of a Poisson(λ) conditioned on `1 <= k <= max_len`.
/// Entry `k - 1` holds `P(k)`.
pub fn truncated_poisson_pmf(lambda: f64, max_len: usize) -> Vec<f64> {
    let log_lambda = lambda.ln();
    let mut log_fact = 0.0;
    let logs: Vec<f64> = (1..=max_len)
        .map(|k| {
            log_fact += (k as f64).ln();
            k as f64 * log_lambda - log_fact
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pmf: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    pmf
}

/// Inverse-CDF draw of a truncated-Poisson query length.
pub fn sample_query_length<R: Rng + ?Sized>(rng: &mut R, lambda: f64, max_len: usize) -> usize {
    if max_len <= 1 {
        return 1;
    }
    let pmf = truncated_poisson_pmf(lambda, max_len);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return k + 1;
        }
    }
    max_len
}

/// `Z = Σ_t exp(β ⟨t, p⟩)`, summed exactly over the vocabulary.
pub fn partition_function(p: &[f64], beta: f64, vocab: &Matrix) -> f64 {
    vocab
        .iter_rows()
        .map(|t| (beta * dot_unchecked(t, p)).exp())
        .sum()
}

/// Scale of the expected trigram: `ρ = m α β exp(β²/2) / Z`.
pub fn rho(alpha: f64, beta: f64, vocab_size: usize, partition: f64) -> f64 {
    vocab_size as f64 * alpha * beta * (beta * beta / 2.0).exp() / partition
}

/// Normalised exponential component `exp(β⟨t,p⟩) / Z` for one `(p, β)`,
/// stored as a cumulative table for O(log m) draws.
#[derive(Debug, Clone)]
pub struct EmissionTable {
    cumulative: Vec<f64>,
}

impl EmissionTable {
    pub fn new(p: &[f64], beta: f64, vocab: &Matrix) -> Self {
        let logits: Vec<f64> = vocab.iter_rows().map(|t| beta * dot_unchecked(t, p)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut acc = 0.0;
        let cumulative = logits
            .iter()
            .map(|l| {
                acc += (l - max).exp();
                acc
            })
            .collect();
        EmissionTable { cumulative }
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Probability of trigram `t` under the exponential component.
    pub fn probability(&self, t: usize) -> f64 {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let prev = if t == 0 { 0.0 } else { self.cumulative[t - 1] };
        (self.cumulative[t] - prev) / total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Two-stage draw from the mixture: Bernoulli(α) picks the exponential
/// component, otherwise a uniform trigram.
pub fn sample_from_mixture<R: Rng + ?Sized>(
    rng: &mut R,
    alpha: f64,
    table: &EmissionTable,
) -> usize {
    if rng.random::<f64>() < alpha {
        table.sample(rng)
    } else {
        rng.random_range(0..table.len())
    }
}

/// One trigram at 1-based `position` for product `p`. Builds the emission
/// table on the fly (O(m)); use [`EmissionTable`] directly for repeated draws.
pub fn sample_trigram<R: Rng + ?Sized>(
    rng: &mut R,
    p: &[f64],
    position: usize,
    config: &GeneratorConfig,
    vocab: &Matrix,
) -> usize {
    let table = EmissionTable::new(p, config.beta(position), vocab);
    sample_from_mixture(rng, config.alpha(position), &table)
}

/// Monte Carlo mean of `n_samples` trigram vectors drawn at `position`.
pub fn trigram_empirical_mean<R: Rng + ?Sized>(
    rng: &mut R,
    p: &[f64],
    position: usize,
    config: &GeneratorConfig,
    vocab: &Matrix,
    n_samples: usize,
) -> Vec<f64> {
    let table = EmissionTable::new(p, config.beta(position), vocab);
    let alpha = config.alpha(position);
    let mut mean = vec![0.0; vocab.cols()];
    for _ in 0..n_samples {
        let t = sample_from_mixture(rng, alpha, &table);
        crate::linalg::axpy(1.0, vocab.row(t), &mut mean);
    }
    mean.iter_mut().for_each(|x| *x /= n_samples as f64);
    mean
}

/// Monte Carlo estimate of `E‖t_i − ρ_i p‖²` with `ρ_i` from the exact
/// partition function.
pub fn trigram_empirical_variance<R: Rng + ?Sized>(
    rng: &mut R,
    p: &[f64],
    position: usize,
    config: &GeneratorConfig,
    vocab: &Matrix,
    n_samples: usize,
) -> Result<f64> {
    if n_samples < 1000 {
        return Err(Error::InsufficientCounts(format!(
            "need at least 1000 samples, got {n_samples}"
        )));
    }
    let alpha = config.alpha(position);
    let beta = config.beta(position);
    let z = partition_function(p, beta, vocab);
    let scale = rho(alpha, beta, vocab.rows(), z);
    let center: Vec<f64> = p.iter().map(|x| scale * x).collect();
    let table = EmissionTable::new(p, beta, vocab);
    let total: f64 = (0..n_samples)
        .map(|_| squared_distance(vocab.row(sample_from_mixture(rng, alpha, &table)), &center))
        .sum();
    Ok(total / n_samples as f64)
}

/// Mixture weights making the trigram variance grow linearly with position
/// at constant `β`. A trigram mixes a tilted Gaussian `N(βp, I)` (weight α)
/// with `N(0, I)`, so `E‖t − αβp‖² = d + α(1−α)β²`; `α_i(1−α_i)` is
/// interpolated linearly between its end values and solved on the `α ≥ ½`
/// branch. Both end weights must lie in `[½, 1]`.
pub fn linear_variance_alphas(n: usize, alpha_first: f64, alpha_last: f64) -> Vec<f64> {
    assert!(
        (0.5..=1.0).contains(&alpha_first) && (0.5..=1.0).contains(&alpha_last),
        "end weights must lie in [0.5, 1]"
    );
    if n == 1 {
        return vec![alpha_first];
    }
    let (s0, s1) = (alpha_first * (1.0 - alpha_first), alpha_last * (1.0 - alpha_last));
    (0..n)
        .map(|i| {
            let s = s0 + (s1 - s0) * i as f64 / (n - 1) as f64;
            0.5 * (1.0 + (1.0 - 4.0 * s).max(0.0).sqrt())
        })
        .collect()
}

pub fn generate_dataset(config: &GeneratorConfig) -> Result<SyntheticDataset> {
    generate_dataset_with_threads(config, 1)
}

/// Generates a dataset; `threads > 1` splits query synthesis across a rayon
/// pool. Output is identical for every thread count.
pub fn generate_dataset_with_threads(
    config: &GeneratorConfig,
    threads: usize,
) -> Result<SyntheticDataset> {
    config.validate()?;
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| build_dataset(config, true))
    } else {
        build_dataset(config, false)
    }
}

fn build_dataset(config: &GeneratorConfig, parallel: bool) -> Result<SyntheticDataset> {
    let d = config.dim;
    let vocab = sample_trigram_vocab(
        &mut rng::stream(config.seed, streams::VOCAB),
        config.vocab_size,
        d,
    );
    let mut product_rng = rng::stream(config.seed, streams::PRODUCTS);
    let product_rows: Vec<Vec<f64>> = (0..config.n_products)
        .map(|_| sample_unit_sphere(&mut product_rng, d))
        .collect();
    let products = if product_rows.is_empty() {
        Matrix::zeros(0, d)
    } else {
        Matrix::from_rows(&product_rows)?
    };

    // Each query owns stream QUERY_BASE + i: product, then length, then trigrams.
    struct Pending {
        product: usize,
        len: usize,
        rng: StreamRng,
    }
    let pending: Vec<Pending> = (0..config.n_queries)
        .map(|i| {
            let mut rng = rng::stream(config.seed, streams::QUERY_BASE + i as u64);
            let product = rng.random_range(0..config.n_products);
            let len = sample_query_length(&mut rng, config.lambda, config.max_len);
            Pending { product, len, rng }
        })
        .collect();

    let mut by_product: Vec<Vec<usize>> = vec![Vec::new(); config.n_products];
    for (i, q) in pending.iter().enumerate() {
        by_product[q.product].push(i);
    }

    let synth = |(product, members): (usize, &Vec<usize>)| -> Vec<(usize, Vec<usize>)> {
        let p = products.row(product);
        let mut tables: HashMap<u64, EmissionTable> = HashMap::new();
        members
            .iter()
            .map(|&qi| {
                let mut rng = pending[qi].rng.clone();
                let ids = (1..=pending[qi].len)
                    .map(|pos| {
                        let beta = config.beta(pos);
                        let table = tables
                            .entry(beta.to_bits())
                            .or_insert_with(|| EmissionTable::new(p, beta, &vocab));
                        sample_from_mixture(&mut rng, config.alpha(pos), table)
                    })
                    .collect();
                (qi, ids)
            })
            .collect()
    };
    let groups: Vec<Vec<(usize, Vec<usize>)>> = if parallel {
        by_product.par_iter().enumerate().map(synth).collect()
    } else {
        by_product.iter().enumerate().map(synth).collect()
    };

    let mut trigrams: Vec<Vec<usize>> = vec![Vec::new(); config.n_queries];
    for (qi, ids) in groups.into_iter().flatten() {
        trigrams[qi] = ids;
    }
    let queries: Vec<Query> = trigrams
        .into_iter()
        .zip(&pending)
        .map(|(ids, p)| Query::new(ids, p.product))
        .collect();

    let graph = build_graph(&products, &by_product, &queries, config.epsilon_p);
    Ok(SyntheticDataset {
        config: config.clone(),
        vocab,
        products,
        queries,
        graph,
    })
}

/// Links every pair of distinct queries whose products are within `epsilon`.
pub fn build_graph(
    products: &Matrix,
    by_product: &[Vec<usize>],
    queries: &[Query],
    epsilon: f64,
) -> QueryGraph {
    let n_products = products.rows();
    let eps2 = epsilon * epsilon;
    let near: Vec<Vec<usize>> = (0..n_products)
        .map(|a| {
            (0..n_products)
                .filter(|&b| a == b || squared_distance(products.row(a), products.row(b)) <= eps2)
                .collect()
        })
        .collect();
    let adjacency = queries
        .iter()
        .enumerate()
        .map(|(u, q)| {
            near[q.product_id]
                .iter()
                .flat_map(|&b| by_product[b].iter().copied())
                .filter(|&v| v != u)
                .collect()
        })
        .collect();
    let purchases = queries.iter().map(|q| vec![(q.product_id, 1)]).collect();
    QueryGraph::from_adjacency_unchecked(adjacency, purchases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cosine, norm};
    use crate::rng::stream;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            n_products: 20,
            n_queries: 200,
            epsilon_p: 0.8,
            seed: 17,
            ..GeneratorConfig::constant(8, 100, 10, 3.0, 0.8, 1.5)
        }
    }

    #[test]
    fn length_one_when_max_is_one() {
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_query_length(&mut rng, 7.0, 1), 1);
        }
    }

    #[test]
    fn length_mean_matches_pmf_sum() {
        // Oracle: mean by direct summation of Poisson terms λ^k e^-λ / k!.
        let (lambda, n) = (5.0_f64, 50usize);
        let mut weights = Vec::new();
        let mut term = (-lambda).exp();
        for k in 1..=n {
            term *= lambda / k as f64;
            weights.push(term);
        }
        let total: f64 = weights.iter().sum();
        let oracle: f64 = weights
            .iter()
            .enumerate()
            .map(|(i, w)| (i + 1) as f64 * w / total)
            .sum();

        let mut rng = stream(2, 0);
        let draws = 100_000;
        let mut sum = 0usize;
        for _ in 0..draws {
            let k = sample_query_length(&mut rng, lambda, n);
            assert!((1..=n).contains(&k));
            sum += k;
        }
        let mean = sum as f64 / draws as f64;
        assert!((mean / oracle - 1.0).abs() < 0.02, "{mean} vs {oracle}");
    }

    #[test]
    fn partition_function_examples() {
        let vocab = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.3, -2.0]]).unwrap();
        let p = [0.6, 0.8];
        assert_eq!(partition_function(&p, 0.0, &vocab), 2.0);
        let by_hand = (0.6_f64).exp() + (0.18_f64 - 1.6).exp();
        assert!((partition_function(&p, 1.0, &vocab) - by_hand).abs() < 1e-14);
    }

    #[test]
    fn zero_spread_is_uniform() {
        // chi-square goodness of fit against the uniform distribution
        let m = 20;
        let mut cfg = GeneratorConfig::constant(4, m, 1, 1.0, 0.9, 0.0);
        cfg.alphas[0] = 0.9;
        let vocab = sample_trigram_vocab(&mut stream(3, 0), m, 4);
        let p = sample_unit_sphere(&mut stream(3, 1), 4);
        let table = EmissionTable::new(&p, 0.0, &vocab);
        let mut rng = stream(3, 2);
        let draws = 100_000;
        let mut counts = vec![0usize; m];
        for _ in 0..draws {
            counts[sample_from_mixture(&mut rng, cfg.alpha(1), &table)] += 1;
        }
        let expected = draws as f64 / m as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99th percentile of chi-square with 19 degrees of freedom
        assert!(chi2 < 36.19, "chi2 = {chi2}");
    }

    #[test]
    fn high_spread_mode_is_best_aligned_trigram() {
        let m = 100;
        let vocab = sample_trigram_vocab(&mut stream(4, 0), m, 8);
        let p = sample_unit_sphere(&mut stream(4, 1), 8);
        let best = (0..m)
            .max_by(|&a, &b| {
                dot_unchecked(vocab.row(a), &p).total_cmp(&dot_unchecked(vocab.row(b), &p))
            })
            .unwrap();
        let cfg = GeneratorConfig::constant(8, m, 1, 1.0, 1.0, 10.0);
        let mut rng = stream(4, 2);
        let mut counts = vec![0usize; m];
        for _ in 0..5_000 {
            counts[sample_trigram(&mut rng, &p, 1, &cfg, &vocab)] += 1;
        }
        let mode = (0..m).max_by_key(|&t| counts[t]).unwrap();
        assert_eq!(mode, best);
    }

    #[test]
    fn emission_table_probabilities_sum_to_one() {
        let vocab = sample_trigram_vocab(&mut stream(5, 0), 50, 4);
        let p = sample_unit_sphere(&mut stream(5, 1), 4);
        let table = EmissionTable::new(&p, 2.0, &vocab);
        let total: f64 = (0..50).map(|t| table.probability(t)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let z = partition_function(&p, 2.0, &vocab);
        let direct = (2.0 * dot_unchecked(vocab.row(7), &p)).exp() / z;
        assert!((table.probability(7) - direct).abs() < 1e-12);
    }

    #[test]
    fn empirical_mean_is_parallel_to_product() {
        let (d, m) = (16, 10_000);
        let vocab = sample_trigram_vocab(&mut stream(6, 0), m, d);
        let p = sample_unit_sphere(&mut stream(6, 1), d);
        let cfg = GeneratorConfig::constant(d, m, 1, 1.0, 0.8, 1.0);
        let mean = trigram_empirical_mean(&mut stream(6, 2), &p, 1, &cfg, &vocab, 100_000);
        let expected = rho(0.8, 1.0, m, partition_function(&p, 1.0, &vocab));
        assert!(cosine(&mean, &p) > 0.95);
        assert!((norm(&mean) / expected - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_spread_variance_is_dimension() {
        // β = 0, α = 1: t is a uniform vocabulary row, E‖t‖² = d.
        let (d, m) = (8, 5_000);
        let vocab = sample_trigram_vocab(&mut stream(7, 0), m, d);
        let p = sample_unit_sphere(&mut stream(7, 1), d);
        let cfg = GeneratorConfig::constant(d, m, 1, 1.0, 1.0, 0.0);
        let v = trigram_empirical_variance(&mut stream(7, 2), &p, 1, &cfg, &vocab, 20_000).unwrap();
        assert!((v / d as f64 - 1.0).abs() < 0.05, "{v}");
        assert!(trigram_empirical_variance(&mut stream(7, 2), &p, 1, &cfg, &vocab, 10).is_err());
    }

    #[test]
    fn variance_matches_tilted_gaussian_value() {
        // Tilting N(0, I) by exp(β x_1) shifts x_1 to N(β, 1); with weight α
        // this gives E‖t − αβ p‖² = d + α(1 − α)β² for large m.
        let (d, m) = (8, 20_000);
        let vocab = sample_trigram_vocab(&mut stream(8, 0), m, d);
        let p = sample_unit_sphere(&mut stream(8, 1), d);
        for (alpha, beta) in [(1.0, 1.0), (0.75, 1.0), (0.6, 1.5)] {
            let cfg = GeneratorConfig::constant(d, m, 1, 1.0, alpha, beta);
            let v = trigram_empirical_variance(&mut stream(8, 2), &p, 1, &cfg, &vocab, 100_000)
                .unwrap();
            let expected = d as f64 + alpha * (1.0 - alpha) * beta * beta;
            // sd of the estimate ≈ sqrt(2d / n) ≈ 0.013, plus finite-m bias
            assert!((v - expected).abs() < 0.15, "α={alpha} β={beta}: {v} vs {expected}");
        }
    }

    #[test]
    fn same_position_parameters_give_same_variance() {
        let (d, m) = (8, 2_000);
        let vocab = sample_trigram_vocab(&mut stream(9, 0), m, d);
        let p = sample_unit_sphere(&mut stream(9, 1), d);
        let cfg = GeneratorConfig::constant(d, m, 2, 1.0, 0.8, 1.0);
        let a = trigram_empirical_variance(&mut stream(9, 2), &p, 1, &cfg, &vocab, 50_000).unwrap();
        let b = trigram_empirical_variance(&mut stream(9, 3), &p, 2, &cfg, &vocab, 50_000).unwrap();
        assert!((a - b).abs() < 4.0 * (2.0 * 2.0 * d as f64 / 50_000.0).sqrt(), "{a} vs {b}");
    }

    #[test]
    fn dataset_invariants_hold() {
        let ds = generate_dataset(&small_config()).unwrap();
        ds.check_invariants().unwrap();
        for (i, q) in ds.queries.iter().enumerate() {
            assert_eq!(ds.graph.purchases(i), &[(q.product_id, 1)]);
        }
        // edges are exactly the product-distance pairs
        let eps = ds.config.epsilon_p;
        for u in 0..ds.queries.len() {
            for v in 0..ds.queries.len() {
                if u == v {
                    continue;
                }
                let pu = ds.products.row(ds.queries[u].product_id);
                let pv = ds.products.row(ds.queries[v].product_id);
                let close = squared_distance(pu, pv).sqrt() <= eps;
                assert_eq!(ds.graph.is_adjacent(u, v), close);
            }
        }
    }

    #[test]
    fn dataset_is_deterministic_and_thread_independent() {
        let cfg = small_config();
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        let c = generate_dataset_with_threads(&cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn zero_threshold_links_only_same_product() {
        let cfg = GeneratorConfig {
            epsilon_p: 0.0,
            ..small_config()
        };
        let ds = generate_dataset(&cfg).unwrap();
        for (u, v) in ds.graph.edges() {
            assert_eq!(ds.queries[u].product_id, ds.queries[v].product_id);
        }
        let same = (0..ds.queries.len())
            .flat_map(|u| (u + 1..ds.queries.len()).map(move |v| (u, v)))
            .filter(|&(u, v)| ds.queries[u].product_id == ds.queries[v].product_id)
            .count();
        assert_eq!(ds.graph.n_edges(), same);
    }

    #[test]
    fn diameter_threshold_gives_complete_graph() {
        let cfg = GeneratorConfig {
            epsilon_p: 2.0 * (1.0 + 1e-9),
            n_queries: 60,
            ..small_config()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.graph.n_edges(), 60 * 59 / 2);
    }

    #[test]
    fn empty_dataset() {
        let cfg = GeneratorConfig {
            n_queries: 0,
            ..small_config()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert!(ds.queries.is_empty());
        assert_eq!(ds.graph.n_edges(), 0);
    }

    #[test]
    fn linear_variance_profile() {
        let a = linear_variance_alphas(5, 1.0, 0.6);
        assert_eq!(a[0], 1.0);
        assert!((a[4] - 0.6).abs() < 1e-12);
        let s: Vec<f64> = a.iter().map(|x| x * (1.0 - x)).collect();
        let step = s[1] - s[0];
        for w in s.windows(2) {
            assert!((w[1] - w[0] - step).abs() < 1e-12);
        }
    }
}
