//! Validation presets. Each suite returns named checks with the measured
//! statistics; thresholds are harness constants.

use crate::embedder::{train, AttentionModel, Optimizer, PositiveMode, TraceRow, TrainConfig};
use crate::error::Result;
use crate::genmodel::{
    generate_dataset, linear_variance_alphas, partition_function, rho, trigram_empirical_mean,
    trigram_empirical_variance, SyntheticDataset,
};
use crate::linalg::{cosine, norm};
use crate::rng::{sample_trigram_vocab, sample_unit_sphere, stream, streams};
use crate::stats::{mean, pearson, variance};
use crate::types::GeneratorConfig;

use super::pmi::{estimate_pmi, pmi_oracle, PmiEstimate, TinyUniverse};
use super::report::{blue_report, fit_betas, BetaFit, BlueConfig, BlueReport};
use super::Check;

/// Correlation required for "strong" agreement.
pub const CORRELATION_THRESHOLD: f64 = 0.8;

fn mc_setup(seed: u64, m: usize, d: usize) -> (crate::linalg::Matrix, Vec<f64>) {
    let vocab = sample_trigram_vocab(&mut stream(seed, streams::VOCAB), m, d);
    let p = sample_unit_sphere(&mut stream(seed, streams::PRODUCTS), d);
    (vocab, p)
}

/// Sampled trigram mean against `ρ_i p`: d = 16, m = 10⁴, three positions
/// with distinct (α, β), 10⁵ draws each.
pub fn trigram_mean_checks(seed: u64) -> Result<Vec<Check>> {
    let (d, m, samples) = (16, 10_000, 100_000);
    let params = [(1.0, 0.5), (0.8, 1.0), (0.6, 1.5)];
    let mut config = GeneratorConfig::constant(d, m, params.len(), 1.0, 1.0, 1.0);
    config.alphas = params.iter().map(|p| p.0).collect();
    config.betas = params.iter().map(|p| p.1).collect();
    let (vocab, p) = mc_setup(seed, m, d);
    let mut checks = Vec::new();
    for (i, &(alpha, beta)) in params.iter().enumerate() {
        let mut rng = stream(seed, streams::QUERY_BASE + i as u64);
        let mean = trigram_empirical_mean(&mut rng, &p, i + 1, &config, &vocab, samples);
        let expected = rho(alpha, beta, m, partition_function(&p, beta, &vocab));
        let cos = cosine(&mean, &p);
        let mag = norm(&mean);
        let rel = (mag - expected).abs() / expected;
        checks.push(Check::new(
            format!("mean.position{}.cosine", i + 1),
            cos > 0.95,
            format!("alpha={alpha} beta={beta} cosine={cos:.4} (> 0.95)"),
        ));
        checks.push(Check::new(
            format!("mean.position{}.magnitude", i + 1),
            rel < 0.10,
            format!("|mean|={mag:.4} rho={expected:.4} rel_err={rel:.4} (< 0.10)"),
        ));
    }
    Ok(checks)
}

/// `E‖t − ρp‖²`: equals d at β = 0, α = 1 within 5%, and its behaviour over
/// β ∈ {0, 0.5, 1} at fixed α (α = 1 and α = 0.75). The tilted-Gaussian
/// value `d + α(1−α)β²` is reported alongside.
pub fn variance_checks(seed: u64) -> Result<Vec<Check>> {
    let (d, m, samples) = (16, 10_000, 100_000);
    let (vocab, p) = mc_setup(seed, m, d);
    let betas = [0.0, 0.5, 1.0];
    let mut checks = Vec::new();
    let run = |alpha: f64, stream_offset: u64| -> Result<Vec<f64>> {
        betas
            .iter()
            .enumerate()
            .map(|(k, &beta)| {
                let config = GeneratorConfig::constant(d, m, 1, 1.0, alpha, beta);
                let mut rng = stream(seed, streams::QUERY_BASE + stream_offset + k as u64);
                trigram_empirical_variance(&mut rng, &p, 1, &config, &vocab, samples)
            })
            .collect()
    };
    for (alpha, offset) in [(1.0, 0), (0.75, 10)] {
        let est = run(alpha, offset)?;
        if alpha == 1.0 {
            let rel = (est[0] - d as f64).abs() / d as f64;
            checks.push(Check::new(
                "variance.anchor",
                rel < 0.05,
                format!("beta=0 alpha=1 estimate={:.4} d={d} rel_err={rel:.4} (< 0.05)", est[0]),
            ));
        }
        let decreasing = est.windows(2).all(|w| w[1] < w[0]);
        let reference: Vec<String> = betas
            .iter()
            .map(|b| format!("{:.4}", d as f64 + alpha * (1.0 - alpha) * b * b))
            .collect();
        let shown: Vec<String> = est.iter().map(|x| format!("{x:.4}")).collect();
        checks.push(Check::new(
            format!("variance.decreasing_in_beta.alpha{alpha}"),
            decreasing,
            format!(
                "beta=[0,0.5,1] estimates=[{}] d+a(1-a)b^2=[{}]",
                shown.join(","),
                reference.join(",")
            ),
        ));
    }
    Ok(checks)
}

/// Relative spread of `Z_p` over 100 random products for m ∈ {10², 10³, 10⁴},
/// β = 1, d = 16.
pub fn partition_spreads(seed: u64) -> Result<Vec<(usize, f64)>> {
    let d = 16;
    [100usize, 1_000, 10_000]
        .iter()
        .map(|&m| {
            let vocab = sample_trigram_vocab(&mut stream(seed, streams::VOCAB + m as u64), m, d);
            let mut rng = stream(seed, streams::PRODUCTS);
            let zs: Vec<f64> = (0..100)
                .map(|_| partition_function(&sample_unit_sphere(&mut rng, d), 1.0, &vocab))
                .collect();
            Ok((m, variance(&zs)?.sqrt() / mean(&zs)?))
        })
        .collect()
}

pub fn partition_checks(seed: u64) -> Result<Vec<Check>> {
    let spreads = partition_spreads(seed)?;
    let decreasing = spreads.windows(2).all(|w| w[1].1 < w[0].1);
    let shown: Vec<String> = spreads.iter().map(|(m, s)| format!("m={m}:{s:.5}")).collect();
    Ok(vec![Check::new(
        "partition.concentration",
        decreasing,
        format!("relative std {}", shown.join(" ")),
    )])
}

/// Parameters of the small PMI universe.
#[derive(Debug, Clone)]
pub struct PmiSetup {
    pub config: GeneratorConfig,
    /// Length-2 and length-3 sequences added to the 30 singletons.
    pub extra_queries: (usize, usize),
    pub oracle_product_pairs: usize,
    pub events: usize,
    pub min_count: u64,
}

impl PmiSetup {
    pub fn tiny(seed: u64) -> Self {
        let mut config = GeneratorConfig::constant(4, 30, 3, 0.5, 1.0, 0.7);
        config.epsilon_p = 0.25;
        config.seed = seed;
        PmiSetup {
            config,
            extra_queries: (40, 20),
            oracle_product_pairs: 40_000,
            events: 1_000_000,
            min_count: 20,
        }
    }

    /// Every singleton plus a reproducible sample of longer sequences.
    pub fn query_set(&self, u: &TinyUniverse) -> Vec<Vec<usize>> {
        use rand::Rng;
        let mut rng = stream(self.config.seed, streams::SPLIT);
        let mut out: Vec<Vec<usize>> = (0..u.vocab_size()).map(|t| vec![t]).collect();
        for (len, want) in [(2usize, self.extra_queries.0), (3, self.extra_queries.1)] {
            let mut added = 0;
            while added < want && len <= u.max_len() {
                let q: Vec<usize> = (0..len).map(|_| rng.random_range(0..u.vocab_size())).collect();
                if !out.contains(&q) {
                    out.push(q);
                    added += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PmiOutcome {
    pub oracle: PmiEstimate,
    pub empirical: PmiEstimate,
    pub oracle_pearson: f64,
    pub empirical_pearson: f64,
    /// Retained empirical pairs also scored by the oracle, and how many
    /// differ from it by more than 3 standard errors.
    pub compared: usize,
    pub beyond_3se: usize,
    pub max_z: f64,
}

pub fn run_pmi(setup: &PmiSetup) -> Result<PmiOutcome> {
    let u = TinyUniverse::new(&setup.config)?;
    let set = setup.query_set(&u);
    let oracle = pmi_oracle(&u, &set, setup.oracle_product_pairs, setup.config.seed)?;
    let empirical = estimate_pmi(&u, setup.events, setup.min_count, setup.config.seed + 1)?;
    let oracle_pearson = pearson(&oracle.pmi, &oracle.dot_over_d)?;
    let empirical_pearson = pearson(&empirical.pmi, &empirical.dot_over_d)?;
    let (compared, beyond_3se, max_z) = compare(&oracle, &empirical);
    Ok(PmiOutcome {
        oracle,
        empirical,
        oracle_pearson,
        empirical_pearson,
        compared,
        beyond_3se,
        max_z,
    })
}

fn compare(oracle: &PmiEstimate, empirical: &PmiEstimate) -> (usize, usize, f64) {
    let (mut compared, mut beyond, mut max_z) = (0, 0, 0.0f64);
    for (k, &(a, b)) in empirical.pairs.iter().enumerate() {
        let qa = &empirical.queries[a];
        let qb = &empirical.queries[b];
        if let Some(j) = oracle.find(qa, qb) {
            let z = (empirical.pmi[k] - oracle.pmi[j]).abs() / empirical.std_err[k];
            compared += 1;
            beyond += (z > 3.0) as usize;
            max_z = max_z.max(z);
        }
    }
    (compared, beyond, max_z)
}

/// At least this share of compared pairs must lie within 3 standard errors.
pub const PMI_AGREEMENT: f64 = 0.99;

pub fn pmi_checks(setup: &PmiSetup) -> Result<Vec<Check>> {
    let out = run_pmi(setup)?;
    let mut checks = vec![Check::new(
        "pmi.oracle_correlation",
        out.oracle_pearson > CORRELATION_THRESHOLD,
        format!(
            "pearson={:.4} over {} pairs (> {CORRELATION_THRESHOLD})",
            out.oracle_pearson,
            out.oracle.pairs.len()
        ),
    )];
    let share = 1.0 - out.beyond_3se as f64 / out.compared.max(1) as f64;
    checks.push(Check::new(
        "pmi.empirical_matches_oracle",
        out.compared > 0 && share >= PMI_AGREEMENT,
        format!(
            "{} of {} pairs beyond 3 SE, max z={:.2}, empirical pearson={:.4}",
            out.beyond_3se, out.compared, out.max_z, out.empirical_pearson
        ),
    ));
    let mut null = setup.clone();
    null.config.betas.iter_mut().for_each(|b| *b = 0.0);
    let u = TinyUniverse::new(&null.config)?;
    let est = estimate_pmi(&u, null.events, null.min_count, null.config.seed + 2)?;
    let inside = est
        .pmi
        .iter()
        .zip(&est.std_err)
        .filter(|(p, s)| p.abs() <= 3.0 * **s)
        .count();
    let share = inside as f64 / est.pmi.len() as f64;
    checks.push(Check::new(
        "pmi.null_without_spread",
        share >= PMI_AGREEMENT,
        format!("{inside} of {} pairs within 3 SE of 0", est.pmi.len()),
    ));
    Ok(checks)
}

/// Dataset, trainer and report settings for an attention-vs-BLUE run.
#[derive(Debug, Clone)]
pub struct BlueExperiment {
    pub generator: GeneratorConfig,
    pub train: TrainConfig,
    pub blue: BlueConfig,
}

fn blue_generator(seed: u64, alphas: Vec<f64>, beta: f64) -> GeneratorConfig {
    let n = alphas.len();
    GeneratorConfig {
        dim: 16,
        vocab_size: 2_000,
        max_len: n,
        lambda: n as f64,
        betas: vec![beta; n],
        alphas,
        epsilon_p: 0.0,
        n_products: 200,
        n_queries: 10_000,
        seed,
    }
}

fn blue_trainer(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        epochs: 40,
        negatives_per_positive: 5,
        positive_mode: PositiveMode::Uniform { count: 4 },
        batch_size: 16,
        seed,
        optimizer: Optimizer::adam(),
        freeze_attention: false,
    }
}

impl BlueExperiment {
    /// Every position shares (α, β): BLUE weights are uniform.
    pub fn constant(seed: u64) -> Self {
        BlueExperiment {
            generator: blue_generator(seed, vec![0.75; 8], 2.0),
            train: blue_trainer(seed),
            blue: BlueConfig {
                seed,
                ..BlueConfig::default()
            },
        }
    }

    /// Variance growing linearly with position at constant β.
    pub fn linear(seed: u64) -> Self {
        BlueExperiment {
            generator: blue_generator(seed, linear_variance_alphas(8, 1.0, 0.55), 2.0),
            train: blue_trainer(seed),
            blue: BlueConfig {
                seed,
                ..BlueConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlueOutcome {
    pub dataset: SyntheticDataset,
    pub model: AttentionModel,
    pub trace: Vec<TraceRow>,
    pub report: BlueReport,
}

pub fn run_blue_experiment(exp: &BlueExperiment) -> Result<BlueOutcome> {
    let dataset = generate_dataset(&exp.generator)?;
    let init = AttentionModel::new(
        exp.generator.vocab_size,
        exp.generator.dim,
        exp.generator.max_len,
        &mut stream(exp.train.seed, streams::MODEL_INIT),
    );
    let outcome = train(init, &dataset.queries, &dataset.graph, &exp.train)?;
    let report = blue_report(&outcome.model, &dataset, &exp.blue)?;
    Ok(BlueOutcome {
        dataset,
        model: outcome.model,
        trace: outcome.trace,
        report,
    })
}

/// Constant parameters: BLUE weights uniform and attention within 0.15 of
/// uniform at every position.
pub fn blue_uniform_checks(outcome: &BlueOutcome) -> Vec<Check> {
    let r = &outcome.report;
    let k = r.positions.len() as f64;
    let blue_dev = r.blue.iter().map(|w| (w - 1.0 / k).abs()).fold(0.0, f64::max);
    let attn_dev = r.attention.iter().map(|w| (w - 1.0 / k).abs()).fold(0.0, f64::max);
    vec![
        Check::new(
            "blue.uniform_blue_weights",
            blue_dev < 0.15,
            format!("max |w - 1/k| = {blue_dev:.4} over {k} positions"),
        ),
        Check::new(
            "blue.uniform_attention",
            attn_dev < 0.15,
            format!("max |a - 1/k| = {attn_dev:.4} over {k} positions"),
        ),
        Check::new(
            "blue.weights_sum_to_one",
            (r.blue.iter().sum::<f64>() - 1.0).abs() < 1e-12,
            format!("sum = {:.15}", r.blue.iter().sum::<f64>()),
        ),
    ]
}

/// Linear variance profile: attention correlates with BLUE weights.
pub fn figure1_checks(outcome: &BlueOutcome) -> Result<(Vec<Check>, BetaFit)> {
    let r = &outcome.report;
    let alphas: Vec<f64> = r.positions.iter().map(|&i| outcome.dataset.config.alpha(i)).collect();
    let fit = fit_betas(&r.variances, &alphas)?;
    let corr = r.pearson.unwrap_or(f64::NAN);
    let flagged = fit.flagged.iter().filter(|f| **f).count();
    Ok((
        vec![
            Check::new(
                "figure1.attention_vs_blue",
                corr >= CORRELATION_THRESHOLD,
                format!("pearson={corr:.4} (>= {CORRELATION_THRESHOLD})"),
            ),
            Check::new(
                "figure1.variance_slope",
                fit.slope > 0.0,
                format!(
                    "fitted line {:.4} + {:.4}·i; {flagged} positions without a beta root",
                    fit.intercept, fit.slope
                ),
            ),
        ],
        fit,
    ))
}
