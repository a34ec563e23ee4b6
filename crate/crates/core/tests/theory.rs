use attest::rng::{sample_unit_sphere, stream};
use attest::theory::{blue_weights, estimator_variances, fit_betas_with, TinyUniverse};
use attest::types::GeneratorConfig;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Minimiser of `Σ w_i² σ_i²` subject to `Σ w_i = 1`, from the KKT system
/// `[2Σ 1; 1ᵀ 0] [w; λ] = [0; 1]` solved by LU.
fn kkt_weights(variances: &[f64]) -> Vec<f64> {
    let k = variances.len();
    let mut a = DMatrix::zeros(k + 1, k + 1);
    for (i, v) in variances.iter().enumerate() {
        a[(i, i)] = 2.0 * v;
        a[(i, k)] = 1.0;
        a[(k, i)] = 1.0;
    }
    let mut b = DVector::zeros(k + 1);
    b[k] = 1.0;
    let x = a.lu().solve(&b).expect("KKT system is non-singular");
    x.iter().take(k).copied().collect()
}

fn combined_variance(w: &[f64], variances: &[f64]) -> f64 {
    w.iter().zip(variances).map(|(w, v)| w * w * v).sum()
}

proptest! {
    #[test]
    fn blue_weights_solve_the_constrained_minimum(
        variances in prop::collection::vec(0.01f64..100.0, 1..20)
    ) {
        let w = blue_weights(&variances).unwrap();
        let oracle = kkt_weights(&variances);
        for (a, b) in w.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moving_along_the_simplex_never_helps(
        variances in prop::collection::vec(0.1f64..10.0, 2..10),
        i in 0usize..10, j in 0usize..10, step in -0.2f64..0.2,
    ) {
        let k = variances.len();
        let (i, j) = (i % k, j % k);
        prop_assume!(i != j);
        let w = blue_weights(&variances).unwrap();
        let mut moved = w.clone();
        moved[i] += step;
        moved[j] -= step;
        let best = combined_variance(&w, &variances);
        prop_assert!(combined_variance(&moved, &variances) >= best - 1e-12);
        let (_, blue_var) = estimator_variances(&variances).unwrap();
        prop_assert!((blue_var - best).abs() <= 1e-12 * best.max(1.0));
    }

    #[test]
    fn beta_fit_inverts_the_variance_model(
        betas in prop::collection::vec(0.05f64..3.0, 1..8),
        alphas in prop::collection::vec(0.51f64..=1.0, 8),
        base in 5.0f64..30.0,
    ) {
        let k = betas.len();
        let alphas = &alphas[..k];
        let line: Vec<f64> = (0..k).map(|i| base + i as f64).collect();
        let variances: Vec<f64> = (0..k)
            .map(|i| line[i] - (alphas[i] * betas[i]).powi(2))
            .collect();
        let fit = fit_betas_with(&variances, alphas, &line, |a, b| a * b).unwrap();
        prop_assert!(fit.flagged.iter().all(|f| !f));
        for (got, want) in fit.betas.iter().zip(&betas) {
            prop_assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }
}

#[test]
fn variance_above_the_line_is_flagged() {
    let fit = fit_betas_with(&[10.0, 12.0], &[0.9, 0.9], &[11.0, 11.0], |a, b| a * b).unwrap();
    assert_eq!(fit.flagged, vec![false, true]);
    assert!(fit.betas[1].is_nan());
    assert!((0.9 * fit.betas[0] - 1.0).abs() < 1e-12);
}

#[test]
fn tiny_universe_probabilities_sum_to_one() {
    let config = GeneratorConfig {
        epsilon_p: 0.25,
        seed: 3,
        ..GeneratorConfig::constant(4, 6, 3, 1.5, 0.8, 0.9)
    };
    let u = TinyUniverse::new(&config).unwrap();
    let all = u.all_queries();
    assert_eq!(all.len(), 6 + 36 + 216);
    for s in 0..5 {
        let p = sample_unit_sphere(&mut stream(s, 0), 4);
        let total: f64 = all.iter().map(|q| u.sequence_probability(q, &p)).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
    }
}
