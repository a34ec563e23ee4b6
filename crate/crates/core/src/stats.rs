//! Small descriptive statistics shared by the validators.

use crate::error::{Error, Result};

pub fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::EmptySamples("mean"));
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::EmptySamples("variance"));
    }
    let m = mean(xs)?;
    Ok(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

/// Pearson correlation; errors when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::EmptySamples("pearson"));
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InsufficientCounts(
            "correlation of a constant sequence".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::EmptySamples("linear_fit"));
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientCounts("degenerate abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

/// Pearson χ² statistic of observed counts against expected counts.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> Result<f64> {
    if observed.len() != expected.len() {
        return Err(Error::DimensionMismatch {
            left: observed.len(),
            right: expected.len(),
        });
    }
    let mut stat = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e <= 0.0 {
            if o > 0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        let diff = o as f64 - e;
        stat += diff * diff / e;
    }
    Ok(stat)
}
