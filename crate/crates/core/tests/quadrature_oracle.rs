//! Products and multiplier matrices checked against direct numerical
//! integration of the sine basis.

mod common;

use std::f64::consts::{PI, SQRT_2};

use hyperwave::noise::{apply_diffusion, cosine_to_sine, fast_multiply, sine_expand_product, NoiseModel};
use hyperwave::props::multiplier_hs_norm;
use hyperwave::{ModeGrid, PairState};
use common::{e, integrate};
use proptest::prelude::*;
use std::sync::Arc;

fn unit(n: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[n - 1] = 1.0;
    v
}

#[test]
fn triple_products_match_quadrature() {
    for m in 1..=8 {
        for n in 1..=8 {
            let exact = sine_expand_product(&unit(m, 8), &unit(n, 8), 8);
            for k in 1..=8 {
                let oracle = integrate(&|x| e(k, x) * e(m, x) * e(n, x));
                assert!(
                    (exact[k - 1] - oracle).abs() <= 1e-10,
                    "(m,n,k)=({m},{n},{k}): {} vs {oracle}",
                    exact[k - 1]
                );
            }
        }
    }
}

#[test]
fn cosine_projection_matches_quadrature() {
    for k in 1..=12 {
        for j in 0..=24 {
            let oracle = integrate(&|x| e(k, x) * (j as f64 * PI * x).cos());
            assert!((cosine_to_sine(k, j) - oracle).abs() <= 1e-11, "k={k} j={j}");
        }
    }
}

#[test]
fn first_mode_cubed() {
    let v = sine_expand_product(&[1.0], &[1.0], 1);
    let oracle = integrate(&|x| e(1, x).powi(3));
    assert!((v[0] - oracle).abs() < 1e-12);
    assert!((v[0] - 8.0 * SQRT_2 / (3.0 * PI)).abs() < 1e-12);
    let lin = sine_expand_product(&unit(1, 4), &unit(2, 4), 4);
    for k in 1..=4 {
        assert!((lin[k - 1] - integrate(&|x| e(k, x) * e(1, x) * e(2, x))).abs() < 1e-10);
    }
}

#[test]
fn diffusion_velocity_matches_quadrature() {
    let grid = Arc::new(ModeGrid::new(4, 1.0).unwrap());
    let x = PairState::new(grid, unit(1, 4), vec![0.0; 4]).unwrap();
    let out = apply_diffusion(&x, &unit(1, 4), &NoiseModel::new(0.0, 1.0, 4).unwrap()).unwrap();
    assert!((out.vel()[0] - integrate(&|x| e(1, x).powi(3))).abs() < 1e-10);
    assert!(out.pos().iter().all(|&p| p == 0.0));
}

#[test]
fn multiplier_matrix_matches_quadrature() {
    // m(x) = 1 + x (1 - x) given by its first 12 sine coefficients
    let len = 12;
    let m: Vec<f64> = (1..=len)
        .map(|k| integrate(&|x| (1.0 + x * (1.0 - x)) * e(k, x)))
        .collect();
    let mf = |x: f64| m.iter().enumerate().map(|(i, c)| c * e(i + 1, x)).sum::<f64>();
    let n = 16;
    let mut total = 0.0;
    for k in 1..=n {
        for j in 1..=n {
            let entry = integrate(&|x| e(k, x) * mf(x) * e(j, x)) / (j as f64 * PI);
            total += entry * entry;
        }
    }
    let direct = total.sqrt();
    let spectral = multiplier_hs_norm(&m, 0.0, n).unwrap();
    assert!((spectral - direct).abs() <= 1e-8 * direct, "{spectral} vs {direct}");
}

fn band_limited(len: usize, seed: &[f64]) -> Vec<f64> {
    (0..len).map(|i| seed[i % seed.len()] / (1.0 + i as f64 * 0.05)).collect()
}

#[test]
fn fast_path_on_first_mode() {
    let mut e1 = vec![0.0; 64];
    e1[0] = 1.0;
    let exact = sine_expand_product(&e1, &e1, 64);
    let fast = fast_multiply(&e1, &e1, 64, 2.0).unwrap();
    let num: f64 = exact.iter().zip(&fast).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let den: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
    assert!(num <= 1e-8 * den);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fast_path_matches_exact(
        v in prop::collection::vec(-1.0f64..1.0, 16),
        g in prop::collection::vec(-1.0f64..1.0, 16),
        factor in 2.0f64..3.5,
    ) {
        let n = 128;
        let v = band_limited(n, &v);
        let g = band_limited(n, &g);
        let exact = sine_expand_product(&v, &g, n);
        let fast = fast_multiply(&v, &g, n, factor).unwrap();
        let num: f64 = exact.iter().zip(&fast).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = exact.iter().map(|a| a * a).sum::<f64>().sqrt();
        prop_assert!(num <= 1e-8 * den, "relative deviation {}", num / den);
    }
}
