//! Desk-scale benchmark settings and the end-to-end run shared by the CLI
//! and the acceptance suite.

use crate::baseline::DEFAULT_BUCKETS;
use crate::embedder::{train, AttentionModel, Optimizer, PositiveMode, TraceRow, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EmbeddingIndex, EvalConfig, EvalReport, HashIndex};
use crate::genmodel::SyntheticDataset;
use crate::rng::{stream, streams};
use crate::types::GeneratorConfig;

/// Share of queries held out for evaluation.
pub const DESK_TEST_FRACTION: f64 = 0.1;

pub fn desk_generator(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        dim: 16,
        vocab_size: 2_000,
        max_len: 50,
        lambda: 5.0,
        alphas: vec![0.9; 50],
        betas: vec![2.0; 50],
        epsilon_p: 0.5,
        n_products: 200,
        n_queries: 5_000,
        seed,
    }
}

pub fn desk_train(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs: 20,
        negatives_per_positive: 5,
        positive_mode: PositiveMode::default(),
        batch_size: 16,
        seed,
        optimizer: Optimizer::adam(),
        freeze_attention: false,
    }
}

/// Queries are i.i.d., so the last `fraction` of ids form the test split.
/// Returns the number of training queries.
pub fn train_size(n_queries: usize, fraction: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidConfig(format!(
            "test fraction {fraction} outside [0, 1)"
        )));
    }
    Ok(n_queries - (n_queries as f64 * fraction).round() as usize)
}

pub fn initial_model(config: &GeneratorConfig, seed: u64) -> AttentionModel {
    AttentionModel::new(
        config.vocab_size,
        config.dim,
        config.max_len,
        &mut stream(seed, streams::MODEL_INIT),
    )
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutcome {
    pub model: AttentionModel,
    pub trace: Vec<TraceRow>,
    pub attention: EvalReport,
    pub baseline: EvalReport,
}

/// Trains on the training prefix (graph restricted to it) and evaluates the
/// attention embeddings and the hash baseline on the same held-out queries.
pub fn run_benchmark(
    dataset: &SyntheticDataset,
    train_config: &TrainConfig,
    test_fraction: f64,
    eval_config: &EvalConfig,
) -> Result<BenchmarkOutcome> {
    let n_train = train_size(dataset.queries.len(), test_fraction)?;
    let graph = dataset.graph.truncated(n_train);
    let init = initial_model(&dataset.config, train_config.seed);
    let out = train(init, &dataset.queries, &graph, train_config)?;
    let train_ids: Vec<usize> = (0..n_train).collect();
    let test_ids: Vec<usize> = (n_train..dataset.queries.len()).collect();
    let purchases = dataset.graph.purchase_map();
    let emb_index = EmbeddingIndex::new(&out.model, &dataset.queries, train_ids.clone())?;
    let attention = evaluate(
        "attention",
        &emb_index,
        &dataset.queries,
        &test_ids,
        purchases,
        eval_config,
    )?;
    let hash_index = HashIndex::new(&dataset.queries, train_ids, DEFAULT_BUCKETS)?;
    let baseline = evaluate(
        "trigram_hash",
        &hash_index,
        &dataset.queries,
        &test_ids,
        purchases,
        eval_config,
    )?;
    Ok(BenchmarkOutcome {
        model: out.model,
        trace: out.trace,
        attention,
        baseline,
    })
}
