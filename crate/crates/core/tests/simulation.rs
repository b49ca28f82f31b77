//! End-to-end behaviour of the time stepper and the Monte Carlo sweeps on
//! small configurations.

use std::sync::Arc;

use hyperwave::harness::{mean_and_se, moment_sweep, SweepSpec};
use hyperwave::scheme::smooth_initial;
use hyperwave::wave::propagate;
use hyperwave::*;

fn config(n: usize, steps: usize, b0: f64, b1: f64) -> SimConfig {
    let grid = Arc::new(ModeGrid::new(n, 1.0).unwrap());
    let xi = smooth_initial(grid.clone(), 3.0, 2.0);
    SimConfig::new(grid, StepPlan::new(1.0, steps).unwrap(), NoiseModel::new(b0, b1, n).unwrap(), xi).unwrap()
}

fn spec(paths: usize, threads: usize) -> SweepSpec {
    SweepSpec {
        step_counts: vec![4, 8, 16, 32],
        ref_refine: 4,
        num_paths: paths,
        seed: 314,
        threads,
    }
}

#[test]
fn silent_dynamics_is_the_exact_wave() {
    for steps in [1, 7, 64] {
        let cfg = config(32, steps, 0.0, 0.0);
        let y = simulate_path(&cfg, 0, 1).unwrap();
        let exact = propagate(&cfg.initial, 1.0);
        assert!(y.sub(&exact).unwrap().norm_pair(0.0) <= 1e-10);
    }
    let (coarse, fine) = simulate_coupled(&config(16, 8, 0.0, 0.0), 4, 2, 2).unwrap();
    let exact = propagate(&config(16, 8, 0.0, 0.0).initial, 1.0);
    assert!(coarse.sub(&exact).unwrap().norm_pair(0.0) <= 1e-10);
    assert!(fine.sub(&exact).unwrap().norm_pair(0.0) <= 1e-10);
}

#[test]
fn empty_galerkin_set_kills_everything() {
    let cfg = config(8, 8, 0.5, 1.0);
    let (_, sub) = galerkin_pair(&cfg, &ModeSet::empty(), 0, 3).unwrap();
    assert_eq!(sub.norm_pair(0.0), 0.0);
}

#[test]
fn weak_error_below_strong_error() {
    let cfg = config(16, 4, 0.5, 1.0);
    let grid = cfg.grid.clone();
    let phi = Functional::sin_linear(Functional::smooth_direction(grid, 2.0), 0.4);
    let s = spec(200, 1);
    let strong = strong_error_sweep(&cfg, &s).unwrap();
    let weak = match weak_error_sweep(&cfg, &phi, &s, true) {
        Ok(r) => r,
        Err(Error::InsufficientPoints { .. }) => return,
        Err(e) => panic!("{e}"),
    };
    for i in 0..strong.errors.len() {
        let combined = (strong.std_errors[i].powi(2) + weak.std_errors[i].powi(2)).sqrt();
        assert!(weak.errors[i] <= strong.errors[i] + 3.0 * combined);
    }
}

#[test]
fn thread_count_never_changes_results() {
    let cfg = config(16, 4, 0.5, 1.0);
    let phi = Functional::exp_neg_sq(cfg.grid.clone(), 1.0);
    let a = strong_error_sweep(&cfg, &spec(40, 1)).unwrap();
    let b = strong_error_sweep(&cfg, &spec(40, 4)).unwrap();
    assert_eq!(a, b);
    let a = weak_error_sweep(&cfg, &phi, &spec(40, 1), false);
    let b = weak_error_sweep(&cfg, &phi, &spec(40, 3), false);
    assert_eq!(a, b);
    let a = galerkin_sweep(&cfg, &[4, 8, 16], 30, 5, 1).unwrap();
    let b = galerkin_sweep(&cfg, &[4, 8, 16], 30, 5, 4).unwrap();
    assert_eq!(a, b);
    let a = moment_sweep(&cfg, &[4, 8, 16], 6.0, 30, 5, 1).unwrap();
    let b = moment_sweep(&cfg, &[4, 8, 16], 6.0, 30, 5, 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn galerkin_error_shrinks_with_cutoff() {
    let cfg = config(32, 32, 0.5, 1.0);
    let r = galerkin_sweep(&cfg, &[4, 8, 16, 32], 100, 9, 1).unwrap();
    assert!(r.strictly_decreasing(), "{:?}", r.errors);
    assert_eq!(*r.errors.last().unwrap(), 0.0);
}

#[test]
fn coarse_endpoint_statistics_match_fine() {
    // the coupled coarse level sees the same Brownian path, so its mean is
    // exact and its second moment is close to the fine one
    let cfg = config(8, 8, 0.5, 1.0);
    let mut coarse_sq = Vec::new();
    let mut fine_sq = Vec::new();
    for p in 0..400 {
        let (c, f) = simulate_coupled(&cfg, 8, p, 17).unwrap();
        coarse_sq.push(c.norm_pair(0.0).powi(2));
        fine_sq.push(f.norm_pair(0.0).powi(2));
    }
    let (mc, sc) = mean_and_se(&coarse_sq);
    let (mf, sf) = mean_and_se(&fine_sq);
    assert!((mc - mf).abs() <= 5.0 * (sc + sf), "{mc} vs {mf}");
}
