//! Random stream contract.
//!
//! Every random draw in the crate comes from a ChaCha8 stream cipher keyed by
//! the 64-bit run seed (expanded with `SeedableRng::seed_from_u64`, i.e.
//! PCG32 key expansion) and addressed by a 64-bit stream id. Streams are
//! independent, so work split across threads by stream id reproduces the
//! single-threaded output bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{norm, Matrix};

pub type StreamRng = ChaCha8Rng;

/// Stream ids used by dataset generation and training.
pub mod streams {
    pub const VOCAB: u64 = 1;
    pub const PRODUCTS: u64 = 2;
    pub const MODEL_INIT: u64 = 3;
    pub const SPLIT: u64 = 4;
    /// Query `i` draws from stream `QUERY_BASE + i`.
    pub const QUERY_BASE: u64 = 1 << 32;
    /// Training epoch `e` draws from stream `EPOCH_BASE + e`.
    pub const EPOCH_BASE: u64 = 2 << 32;
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform draw from the unit sphere in `d` dimensions (normalised Gaussian).
pub fn sample_unit_sphere<R: rand::Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    assert!(d >= 1, "sphere dimension must be positive");
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            for x in &mut v {
                *x /= n;
            }
            return v;
        }
    }
}

/// `m` i.i.d. standard spherical Gaussian vectors in `d` dimensions, one per row.
pub fn sample_trigram_vocab<R: rand::Rng + ?Sized>(rng: &mut R, m: usize, d: usize) -> Matrix {
    let data = (0..m * d).map(|_| standard_normal(rng)).collect();
    Matrix::from_vec(m, d, data).expect("shape is consistent by construction")
}

/// Uniform draw from the spherical cap `{x : |x| = 1, |x - center| <= radius}`.
///
/// The polar angle is drawn by rejection against the `sin^(d-2)` surface
/// density, the azimuth uniformly from the orthogonal complement.
pub fn sample_spherical_cap<R: rand::Rng + ?Sized>(
    rng: &mut R,
    center: &[f64],
    radius: f64,
) -> Vec<f64> {
    let d = center.len();
    if radius >= 2.0 {
        return sample_unit_sphere(rng, d);
    }
    if radius <= 0.0 {
        return center.to_vec();
    }
    let theta_max = 2.0 * (radius / 2.0).asin();
    let exponent = (d as i32 - 2).max(0);
    let envelope = if theta_max <= std::f64::consts::FRAC_PI_2 {
        theta_max.sin().powi(exponent)
    } else {
        1.0
    };
    let theta = loop {
        let theta = rng.random::<f64>() * theta_max;
        if envelope == 0.0 || rng.random::<f64>() * envelope <= theta.sin().powi(exponent) {
            break theta;
        }
    };
    // random unit direction orthogonal to center
    let ortho = loop {
        let mut g: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let proj = crate::linalg::dot_unchecked(&g, center);
        for (gi, ci) in g.iter_mut().zip(center) {
            *gi -= proj * ci;
        }
        let n = norm(&g);
        if n > 1e-12 {
            g.iter_mut().for_each(|x| *x /= n);
            break g;
        }
    };
    let (s, c) = theta.sin_cos();
    center
        .iter()
        .zip(&ortho)
        .map(|(ci, oi)| c * ci + s * oi)
        .collect()
}
