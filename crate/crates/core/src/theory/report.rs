use std::fmt::Write as _;

use rayon::prelude::*;

use crate::embedder::AttentionModel;
use crate::error::{Error, Result};
use crate::genmodel::{trigram_empirical_variance, SyntheticDataset};
use crate::rng::{sample_unit_sphere, stream};
use crate::stats::{linear_fit, pearson};

use super::blue_weights;

const VARIANCE_STREAM_BASE: u64 = 4 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct BlueConfig {
    /// Products averaged over for each position's variance.
    pub variance_products: usize,
    /// Monte Carlo draws per (product, position).
    pub variance_samples: usize,
    pub seed: u64,
    /// Accept a model whose attention is still at initialisation.
    pub allow_untrained: bool,
}

impl Default for BlueConfig {
    fn default() -> Self {
        BlueConfig {
            variance_products: 8,
            variance_samples: 20_000,
            seed: 0,
            allow_untrained: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlueReport {
    /// 1-based positions reached by at least one query.
    pub positions: Vec<usize>,
    /// Queries long enough to reach each position.
    pub query_counts: Vec<usize>,
    /// Mean attention per position, normalised to sum to 1.
    pub attention: Vec<f64>,
    /// Monte Carlo `E‖t_i − ρ_i p‖²`.
    pub variances: Vec<f64>,
    pub blue: Vec<f64>,
    /// Pearson correlation of `attention` with `blue`; `None` when either
    /// sequence is constant.
    pub pearson: Option<f64>,
}

/// Compares the model's per-position attention with inverse-variance
/// weights computed from the dataset's generator.
///
/// A query of length `n` contributes `n·w_i` to position `i`, its weight
/// relative to uniform attention, so queries of different lengths are on
/// one scale; the per-position means are then normalised to sum to 1.
pub fn blue_report(
    model: &AttentionModel,
    dataset: &SyntheticDataset,
    config: &BlueConfig,
) -> Result<BlueReport> {
    if model.has_untrained_attention() && !config.allow_untrained {
        return Err(Error::ModelRejected(
            "attention is untrained; set allow_untrained to report anyway".into(),
        ));
    }
    if config.variance_products == 0 {
        return Err(Error::InvalidConfig("variance_products must be positive".into()));
    }
    let n_pos = model.max_len().min(dataset.config.max_len);
    let mut sums = vec![0.0; n_pos];
    let mut counts = vec![0usize; n_pos];
    for q in &dataset.queries {
        let w = model.attention_weights(q)?;
        let n = w.len() as f64;
        for (i, wi) in w.iter().enumerate().take(n_pos) {
            sums[i] += n * wi;
            counts[i] += 1;
        }
    }
    let positions: Vec<usize> = (1..=n_pos).filter(|&i| counts[i - 1] > 0).collect();
    if positions.is_empty() {
        return Err(Error::EmptySamples("queries"));
    }
    let raw: Vec<f64> = positions.iter().map(|&i| sums[i - 1] / counts[i - 1] as f64).collect();
    let total: f64 = raw.iter().sum();
    let attention: Vec<f64> = raw.iter().map(|x| x / total).collect();

    let products: Vec<Vec<f64>> = if dataset.products.rows() > 0 {
        dataset
            .products
            .iter_rows()
            .take(config.variance_products)
            .map(|r| r.to_vec())
            .collect()
    } else {
        let mut rng = stream(config.seed, VARIANCE_STREAM_BASE - 1);
        (0..config.variance_products)
            .map(|_| sample_unit_sphere(&mut rng, dataset.config.dim))
            .collect()
    };
    let variances = positions
        .par_iter()
        .map(|&i| {
            let mut rng = stream(config.seed, VARIANCE_STREAM_BASE + i as u64);
            let mut acc = 0.0;
            for p in &products {
                acc += trigram_empirical_variance(
                    &mut rng,
                    p,
                    i,
                    &dataset.config,
                    &dataset.vocab,
                    config.variance_samples,
                )?;
            }
            Ok(acc / products.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let blue = blue_weights(&variances)?;
    let pearson = pearson(&attention, &blue).ok();
    Ok(BlueReport {
        query_counts: positions.iter().map(|&i| counts[i - 1]).collect(),
        positions,
        attention,
        variances,
        blue,
        pearson,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaFit {
    pub intercept: f64,
    pub slope: f64,
    /// The target line evaluated at each position.
    pub line: Vec<f64>,
    /// Fitted `β_i`; NaN where flagged.
    pub betas: Vec<f64>,
    /// Positions with no root (variance above the line, or `ρ` bounded).
    pub flagged: Vec<bool>,
}

/// Least-squares line through `(i, σ_i²)` and per-position `β_i` solving
/// `σ_i² = line_i − ρ(α_i, β_i)²` with the large-vocabulary scale
/// `ρ = αβ` (the partition function concentrated at `m·exp(β²/2)`).
pub fn fit_betas(variances: &[f64], alphas: &[f64]) -> Result<BetaFit> {
    let xs: Vec<f64> = (1..=variances.len()).map(|i| i as f64).collect();
    let (intercept, slope) = linear_fit(&xs, variances)?;
    if slope <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "target line needs a positive slope, fitted {slope}"
        )));
    }
    let line: Vec<f64> = xs.iter().map(|x| intercept + slope * x).collect();
    let mut fit = fit_betas_with(variances, alphas, &line, |a, b| a * b)?;
    fit.intercept = intercept;
    fit.slope = slope;
    Ok(fit)
}

/// As [`fit_betas`] against an explicit target line and scale function
/// `rho(α, β)`, which must be non-decreasing in `β ≥ 0`.
pub fn fit_betas_with(
    variances: &[f64],
    alphas: &[f64],
    line: &[f64],
    rho: impl Fn(f64, f64) -> f64,
) -> Result<BetaFit> {
    if variances.len() != alphas.len() || variances.len() != line.len() {
        return Err(Error::DimensionMismatch {
            left: variances.len(),
            right: alphas.len().min(line.len()),
        });
    }
    let mut betas = Vec::with_capacity(variances.len());
    let mut flagged = Vec::with_capacity(variances.len());
    for ((&v, &a), &target) in variances.iter().zip(alphas).zip(line) {
        let mut residual = target - v;
        if residual.abs() <= 1e-12 * target.abs().max(1.0) {
            residual = 0.0;
        }
        let root = solve_beta(residual, |b| rho(a, b).powi(2));
        flagged.push(root.is_none());
        betas.push(root.unwrap_or(f64::NAN));
    }
    Ok(BetaFit {
        intercept: f64::NAN,
        slope: f64::NAN,
        line: line.to_vec(),
        betas,
        flagged,
    })
}

/// Smallest `β ≥ 0` with `f(β) = target` by bisection, `f` non-decreasing.
fn solve_beta(target: f64, f: impl Fn(f64) -> f64) -> Option<f64> {
    if !(target >= 0.0) {
        return None;
    }
    if f(0.0) >= target {
        return (f(0.0) == target).then_some(0.0);
    }
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// The three figure panels as CSV text: attention vs BLUE weight,
/// empirical vs ideal variance, and fitted β per position.
pub fn figure1_csvs(report: &BlueReport, fit: &BetaFit) -> (String, String, String) {
    let mut a = String::from("# figure 1a: attention weight vs BLUE weight\n");
    a.push_str("position,attention_weight,blue_weight\n");
    let mut b = String::from("# figure 1b: empirical vs ideal (fitted linear) variance\n");
    b.push_str("position,empirical_variance,ideal_variance\n");
    let mut c = String::from("# figure 1c: beta fitted to the ideal variance line\n");
    c.push_str("position,beta_residual\n");
    for (k, &pos) in report.positions.iter().enumerate() {
        let _ = writeln!(a, "{pos},{},{}", report.attention[k], report.blue[k]);
        if let Some(line) = fit.line.get(k) {
            let _ = writeln!(b, "{pos},{},{line}", report.variances[k]);
        }
        if let Some(beta) = fit.betas.get(k) {
            let _ = writeln!(c, "{pos},{beta}");
        }
    }
    (a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_gives_zero_beta() {
        let fit = fit_betas_with(&[3.0, 4.0], &[0.5, 0.5], &[3.0, 4.0], |a, b| a * b).unwrap();
        assert_eq!(fit.betas, vec![0.0, 0.0]);
        assert!(fit.flagged.iter().all(|f| !f));
    }

    #[test]
    fn variance_above_line_is_flagged() {
        let fit = fit_betas_with(&[5.0], &[0.5], &[4.0], |a, b| a * b).unwrap();
        assert!(fit.flagged[0] && fit.betas[0].is_nan());
    }

    #[test]
    fn smaller_variance_needs_larger_beta() {
        let line = [10.0, 10.0, 10.0];
        let fit = fit_betas_with(&[9.0, 8.0, 6.0], &[0.7; 3], &line, |a, b| a * b).unwrap();
        assert!(fit.betas[0] < fit.betas[1] && fit.betas[1] < fit.betas[2]);
        // closed form for ρ = αβ: β = sqrt(line − σ²)/α
        assert!((fit.betas[2] - 2.0 / 0.7).abs() < 1e-10);
    }

    #[test]
    fn fitted_line_recovers_exact_linear_data() {
        let v: Vec<f64> = (1..=6).map(|i| 2.0 + 0.5 * i as f64).collect();
        let fit = fit_betas(&v, &[0.8; 6]).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12 && (fit.intercept - 2.0).abs() < 1e-12);
        assert!(fit.betas.iter().all(|b| b.abs() < 1e-6));
        assert!(fit_betas(&[3.0, 2.0, 1.0], &[1.0; 3]).is_err());
    }
}
