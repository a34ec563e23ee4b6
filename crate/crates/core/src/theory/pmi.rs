//! PMI on a universe small enough that every query's probability given a
//! product can be evaluated exactly.
//!
//! Adjacent query pairs are generated from a product `p` uniform on the
//! sphere and a neighbour `p'` uniform in the cap `‖p − p'‖ ≤ ε_p`; one
//! query is emitted from each. The pair law is symmetric, so PMI is too.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::genmodel::{sample_query_length, truncated_poisson_pmf, EmissionTable};
use crate::linalg::{dot_unchecked, Matrix};
use crate::rng::{sample_spherical_cap, sample_trigram_vocab, sample_unit_sphere, stream, streams};
use crate::types::GeneratorConfig;

/// Largest universe the PMI validator accepts.
pub const MAX_DIM: usize = 4;
pub const MAX_VOCAB: usize = 30;
pub const MAX_LEN: usize = 3;

/// Work is split into fixed chunks, each on its own stream, so the result
/// does not depend on the thread count.
const CHUNK: usize = 10_000;
const PMI_STREAM_BASE: u64 = 3 << 32;

#[derive(Debug, Clone)]
pub struct TinyUniverse {
    pub vocab: Matrix,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub length_pmf: Vec<f64>,
    pub lambda: f64,
    pub epsilon_p: f64,
}

/// Pairwise PMI with the model prediction `⟨v, v'⟩ / d`, `v = Σ_i β_i t_i`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PmiEstimate {
    pub pairs: Vec<(usize, usize)>,
    pub pmi: Vec<f64>,
    pub dot_over_d: Vec<f64>,
    /// Delta-method standard error of each PMI; zero for the oracle.
    pub std_err: Vec<f64>,
    /// Query sequences indexed by the ids used in `pairs`.
    pub queries: Vec<Vec<usize>>,
    /// Pairs seen too rarely to keep.
    pub dropped: usize,
}

impl PmiEstimate {
    /// Index of the pair `{a, b}` in `pairs`, if retained.
    pub fn find(&self, a: &[usize], b: &[usize]) -> Option<usize> {
        let ia = self.queries.iter().position(|q| q == a)?;
        let ib = self.queries.iter().position(|q| q == b)?;
        let key = (ia.min(ib), ia.max(ib));
        self.pairs.iter().position(|&p| p == key)
    }
}

impl TinyUniverse {
    pub fn new(config: &GeneratorConfig) -> Result<Self> {
        config.validate()?;
        if config.dim > MAX_DIM || config.vocab_size > MAX_VOCAB || config.max_len > MAX_LEN {
            return Err(Error::InvalidConfig(format!(
                "PMI universe limited to d ≤ {MAX_DIM}, m ≤ {MAX_VOCAB}, N ≤ {MAX_LEN}"
            )));
        }
        let vocab = sample_trigram_vocab(
            &mut stream(config.seed, streams::VOCAB),
            config.vocab_size,
            config.dim,
        );
        Ok(TinyUniverse {
            vocab,
            alphas: config.alphas.clone(),
            betas: config.betas.clone(),
            length_pmf: truncated_poisson_pmf(config.lambda, config.max_len),
            lambda: config.lambda,
            epsilon_p: config.epsilon_p,
        })
    }

    pub fn dim(&self) -> usize {
        self.vocab.cols()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.rows()
    }

    pub fn max_len(&self) -> usize {
        self.length_pmf.len()
    }

    /// Every trigram sequence of length 1..=N, shortest first.
    pub fn all_queries(&self) -> Vec<Vec<usize>> {
        let m = self.vocab_size();
        let mut out = Vec::new();
        let mut layer: Vec<Vec<usize>> = vec![Vec::new()];
        for _ in 0..self.max_len() {
            layer = layer
                .iter()
                .flat_map(|prefix| {
                    (0..m).map(move |t| {
                        let mut q = prefix.clone();
                        q.push(t);
                        q
                    })
                })
                .collect();
            out.extend(layer.iter().cloned());
        }
        out
    }

    /// `v = Σ_i β_i t_i`.
    pub fn model_vector(&self, ids: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for (i, &t) in ids.iter().enumerate() {
            crate::linalg::axpy(self.betas[i], self.vocab.row(t), &mut v);
        }
        v
    }

    fn tables(&self, p: &[f64]) -> Vec<EmissionTable> {
        self.betas
            .iter()
            .map(|&b| EmissionTable::new(p, b, &self.vocab))
            .collect()
    }

    fn probability_with(&self, ids: &[usize], tables: &[EmissionTable]) -> f64 {
        if ids.is_empty() || ids.len() > self.max_len() {
            return 0.0;
        }
        let uniform = 1.0 / self.vocab_size() as f64;
        ids.iter().enumerate().fold(self.length_pmf[ids.len() - 1], |acc, (i, &t)| {
            let a = self.alphas[i];
            acc * (a * tables[i].probability(t) + (1.0 - a) * uniform)
        })
    }

    /// Exact `Pr[q | p]`, length included.
    pub fn sequence_probability(&self, ids: &[usize], p: &[f64]) -> f64 {
        self.probability_with(ids, &self.tables(p))
    }

    fn sample_pair_products<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let p = sample_unit_sphere(rng, self.dim());
        let q = sample_spherical_cap(rng, &p, self.epsilon_p);
        (p, q)
    }

    fn sample_query<R: rand::Rng + ?Sized>(
        &self,
        tables: &[EmissionTable],
        rng: &mut R,
    ) -> Vec<usize> {
        let n = sample_query_length(rng, self.lambda, self.max_len());
        (0..n)
            .map(|i| crate::genmodel::sample_from_mixture(rng, self.alphas[i], &tables[i]))
            .collect()
    }
}

fn dot_over_d(u: &TinyUniverse, a: &[usize], b: &[usize]) -> f64 {
    dot_unchecked(&u.model_vector(a), &u.model_vector(b)) / u.dim() as f64
}

fn chunks(total: usize) -> Vec<(u64, usize)> {
    (0..total.div_ceil(CHUNK))
        .map(|c| (c as u64, CHUNK.min(total - c * CHUNK)))
        .collect()
}

/// PMI for every unordered pair of `queries`, with `Pr[q | p]` evaluated
/// exactly and the integral over adjacent product pairs taken by Monte
/// Carlo over `n_product_pairs` draws.
pub fn pmi_oracle(
    u: &TinyUniverse,
    queries: &[Vec<usize>],
    n_product_pairs: usize,
    seed: u64,
) -> Result<PmiEstimate> {
    if n_product_pairs == 0 || queries.is_empty() {
        return Err(Error::InsufficientCounts("empty oracle input".into()));
    }
    let k = queries.len();
    let partials = chunks(n_product_pairs)
        .into_par_iter()
        .map(|(c, size)| {
            let mut rng = stream(seed, PMI_STREAM_BASE + c);
            let mut marg = vec![0.0; k];
            let mut joint = vec![0.0; k * k];
            for _ in 0..size {
                let (p, p2) = u.sample_pair_products(&mut rng);
                let (t1, t2) = (u.tables(&p), u.tables(&p2));
                let a: Vec<f64> = queries.iter().map(|q| u.probability_with(q, &t1)).collect();
                let b: Vec<f64> = queries.iter().map(|q| u.probability_with(q, &t2)).collect();
                for i in 0..k {
                    marg[i] += 0.5 * (a[i] + b[i]);
                    for j in i..k {
                        joint[i * k + j] += 0.5 * (a[i] * b[j] + a[j] * b[i]);
                    }
                }
            }
            (marg, joint)
        })
        .collect::<Vec<_>>();
    let mut marg = vec![0.0; k];
    let mut joint = vec![0.0; k * k];
    for (m, j) in partials {
        marg.iter_mut().zip(&m).for_each(|(x, y)| *x += y);
        joint.iter_mut().zip(&j).for_each(|(x, y)| *x += y);
    }
    let n = n_product_pairs as f64;
    let mut est = PmiEstimate {
        queries: queries.to_vec(),
        ..PmiEstimate::default()
    };
    for i in 0..k {
        for j in i..k {
            let pij = joint[i * k + j] / n;
            let value = (pij / ((marg[i] / n) * (marg[j] / n))).ln();
            if !value.is_finite() {
                est.dropped += 1;
                continue;
            }
            est.pairs.push((i, j));
            est.pmi.push(value);
            est.dot_over_d.push(dot_over_d(u, &queries[i], &queries[j]));
            est.std_err.push(0.0);
        }
    }
    Ok(est)
}

/// Empirical PMI from `n_events` generated adjacent query pairs, counted at
/// exact sequence identity. Only pairs expected at least `min_count` times
/// if the two queries were independent are scored; of those, pairs never
/// observed are dropped and counted in `dropped`.
pub fn estimate_pmi(
    u: &TinyUniverse,
    n_events: usize,
    min_count: u64,
    seed: u64,
) -> Result<PmiEstimate> {
    if n_events < 1000 {
        return Err(Error::InsufficientCounts(format!(
            "need at least 1000 co-occurrence events, got {n_events}"
        )));
    }
    type Counts = (HashMap<Vec<usize>, u64>, HashMap<(Vec<usize>, Vec<usize>), u64>);
    let partials: Vec<Counts> = chunks(n_events)
        .into_par_iter()
        .map(|(c, size)| {
            let mut rng = stream(seed, PMI_STREAM_BASE + c);
            let mut marg: HashMap<Vec<usize>, u64> = HashMap::new();
            let mut joint: HashMap<(Vec<usize>, Vec<usize>), u64> = HashMap::new();
            for _ in 0..size {
                let (p, p2) = u.sample_pair_products(&mut rng);
                let a = u.sample_query(&u.tables(&p), &mut rng);
                let b = u.sample_query(&u.tables(&p2), &mut rng);
                *marg.entry(a.clone()).or_default() += 1;
                *marg.entry(b.clone()).or_default() += 1;
                let key = if a <= b { (a, b) } else { (b, a) };
                *joint.entry(key).or_default() += 1;
            }
            (marg, joint)
        })
        .collect();
    let mut marg: HashMap<Vec<usize>, u64> = HashMap::new();
    let mut joint: HashMap<(Vec<usize>, Vec<usize>), u64> = HashMap::new();
    for (m, j) in partials {
        for (k, v) in m {
            *marg.entry(k).or_default() += v;
        }
        for (k, v) in j {
            *joint.entry(k).or_default() += v;
        }
    }

    // Retain a pair when its expected count under independence reaches
    // `min_count`. Selecting on the pair's own count would bias PMI upward.
    let mut queries: Vec<Vec<usize>> = marg.keys().cloned().collect();
    queries.sort_by(|a, b| marg[b].cmp(&marg[a]).then_with(|| a.cmp(b)));
    let n = n_events as f64;
    let expected = |ca: f64, cb: f64, same: bool| {
        if same {
            ca * ca / (4.0 * n)
        } else {
            ca * cb / (2.0 * n)
        }
    };
    let mut est = PmiEstimate::default();
    for (ia, a) in queries.iter().enumerate() {
        let ca = marg[a] as f64;
        if expected(ca, ca, false) < min_count as f64 {
            break;
        }
        for (ib, b) in queries.iter().enumerate().skip(ia) {
            let cb = marg[b] as f64;
            if expected(ca, cb, ia == ib) < min_count as f64 {
                if ia == ib {
                    continue;
                }
                break;
            }
            let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            let c = joint.get(&key).copied().unwrap_or(0);
            if c == 0 {
                est.dropped += 1;
                continue;
            }
            // ordered-pair probability: an unordered count covers both orders
            let pair = if ia == ib { c as f64 / n } else { c as f64 / (2.0 * n) };
            let pmi = (pair / ((ca / (2.0 * n)) * (cb / (2.0 * n)))).ln();
            est.pairs.push((ia.min(ib), ia.max(ib)));
            est.pmi.push(pmi);
            est.dot_over_d.push(dot_over_d(u, a, b));
            est.std_err.push((1.0 / c as f64 + 1.0 / ca + 1.0 / cb).sqrt());
        }
    }
    est.queries = queries;
    if est.pairs.is_empty() {
        return Err(Error::InsufficientCounts("no pair reached the minimum count".into()));
    }
    Ok(est)
}
