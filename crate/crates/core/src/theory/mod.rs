//! Validators for the model's analytic claims: inverse-variance weighting,
//! the low-rank PMI law, and the attention/BLUE comparison.

mod pmi;
mod report;
pub mod suites;

pub use pmi::{estimate_pmi, pmi_oracle, PmiEstimate, TinyUniverse};
pub use report::{
    blue_report, figure1_csvs, fit_betas, fit_betas_with, BetaFit, BlueConfig, BlueReport,
};

use crate::error::{Error, Result};

fn check_positive(variances: &[f64]) -> Result<()> {
    if variances.is_empty() {
        return Err(Error::EmptySamples("variances"));
    }
    for (index, &value) in variances.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveVariance { index, value });
        }
    }
    Ok(())
}

/// Inverse-variance weights `(1/σ_i²) / Σ_j (1/σ_j²)`.
pub fn blue_weights(variances: &[f64]) -> Result<Vec<f64>> {
    check_positive(variances)?;
    // scale by the smallest variance first so huge spreads stay finite
    let min = variances.iter().copied().fold(f64::INFINITY, f64::min);
    let prec: Vec<f64> = variances.iter().map(|v| min / v).collect();
    let total: f64 = prec.iter().sum();
    Ok(prec.into_iter().map(|p| p / total).collect())
}

/// Variance of the plain average and of the inverse-variance weighted
/// average of independent estimates: `(Σσ²/k², 1/Σ(1/σ²))`.
pub fn estimator_variances(variances: &[f64]) -> Result<(f64, f64)> {
    check_positive(variances)?;
    let k = variances.len() as f64;
    let unweighted = variances.iter().sum::<f64>() / (k * k);
    let weighted = 1.0 / variances.iter().map(|v| 1.0 / v).sum::<f64>();
    Ok((unweighted, weighted))
}

/// One named pass/fail outcome with the statistic behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {} {}", self.name, self.detail)
    }
}
