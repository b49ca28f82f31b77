//! Monte Carlo estimation of temporal and spatial errors and log-log rate fits.
//!
//! Every sweep evaluates paths independently (optionally in parallel), stores
//! the per-path results in path order, and reduces them with a pairwise
//! summation tree fixed by the path count. Thread count therefore never
//! changes a single bit of the output.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scheme::{simulate_path, SimConfig, TrackSpec, Tracks};
use crate::spectral::{ModeGrid, ModeSet, PairState};

/// Fraction of failed paths above which a sweep is abandoned.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;
/// Errors at or below this (relative to the reference scale) are treated as zero.
pub const NEGLIGIBLE_ERROR: f64 = 1e-10;
/// Weak-error points enter the fit only when `|error| >= SIGNIFICANCE * std_error`.
pub const SIGNIFICANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionalKind {
    /// `x -> sin(<l, x>_{H_0} + shift)`
    SinLinear,
    /// `x -> exp(-scale ||x||^2_{H_0})`
    ExpNegSq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    pub kind: FunctionalKind,
    pub direction: PairState,
    pub shift: f64,
    pub scale: f64,
}

impl Functional {
    pub fn sin_linear(direction: PairState, shift: f64) -> Self {
        Self {
            kind: FunctionalKind::SinLinear,
            direction,
            shift,
            scale: 1.0,
        }
    }

    pub fn exp_neg_sq(grid: Arc<ModeGrid>, scale: f64) -> Self {
        Self {
            kind: FunctionalKind::ExpNegSq,
            direction: PairState::zeros(grid),
            shift: 0.0,
            scale,
        }
    }

    /// Riesz vector `pos_n = n^{-decay}`, `vel = 0`, unit `H_0` norm.
    pub fn smooth_direction(grid: Arc<ModeGrid>, decay: f64) -> PairState {
        let n = grid.cutoff();
        let pos: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-decay)).collect();
        let norm = pos.iter().map(|x| x * x).sum::<f64>().sqrt();
        PairState::new(grid, pos.iter().map(|x| x / norm).collect(), vec![0.0; n]).expect("finite")
    }

    pub fn eval(&self, x: &PairState) -> f64 {
        match self.kind {
            FunctionalKind::SinLinear => {
                let ip = self.direction.inner0(x).expect("functional and state share a grid");
                (ip + self.shift).sin()
            }
            FunctionalKind::ExpNegSq => {
                let n = x.norm_pair(0.0);
                (-self.scale * n * n).exp()
            }
        }
    }
}

pub fn eval_functional(phi: &Functional, x: &PairState) -> f64 {
    phi.eval(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `log e` against `log h`.
pub fn fit_rate(step_sizes: &[f64], errors: &[f64]) -> Result<RateFit> {
    if step_sizes.len() != errors.len() {
        return Err(Error::LengthMismatch {
            expected: step_sizes.len(),
            found: errors.len(),
        });
    }
    if step_sizes.len() < 3 {
        return Err(Error::InsufficientPoints {
            found: step_sizes.len(),
        });
    }
    if let Some(bad) = step_sizes.iter().chain(errors).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::invalid("errors", format!("log-log fit needs positive values, got {bad}")));
    }
    let xs: Vec<f64> = step_sizes.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("step_sizes", "need at least two distinct step sizes"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r_squared = if ss_tot <= f64::EPSILON * ss_res.max(1.0) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Per step size error estimates plus the fitted convergence order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Which points entered the fit.
    pub fitted: Vec<bool>,
    /// `None` when too few points are resolved (e.g. zero noise).
    pub fit: Option<RateFit>,
    pub failed_paths: usize,
}

impl RateReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::from(header);
        s.push('\n');
        for ((h, e), se) in self.step_sizes.iter().zip(&self.errors).zip(&self.std_errors) {
            s.push_str(&format!("{h},{e},{se}\n"));
        }
        s
    }
}

/// Sum with a balanced binary tree whose shape depends only on `xs.len()`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(0.0, |a, b| a + b),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `f` on paths `0..paths` with `threads` workers (0 = all cores),
/// returning results in path order.
pub fn run_paths<T, F>(threads: usize, paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| (0..paths as u64).into_par_iter().map(&f).collect())
}

fn split_failures<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize)> {
    let total = results.len();
    let mut ok = Vec::with_capacity(total);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(Error::NonFinite { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 || ok.is_empty() {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok((ok, failed))
}

/// Parameters shared by the temporal sweeps.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub step_counts: Vec<usize>,
    pub ref_refine: usize,
    pub num_paths: usize,
    pub seed: u64,
    pub threads: usize,
}

impl SweepSpec {
    fn validate(&self) -> Result<()> {
        if self.step_counts.is_empty() || self.step_counts.contains(&0) {
            return Err(Error::invalid("steps", "need positive step counts"));
        }
        if self.step_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("steps", "must be strictly increasing"));
        }
        if self.ref_refine == 0 {
            return Err(Error::invalid("ref_refine", "must be at least 1"));
        }
        if self.num_paths == 0 {
            return Err(Error::invalid("paths", "must be at least 1"));
        }
        Ok(())
    }

    fn fine_steps(&self) -> usize {
        self.ref_refine * self.step_counts.last().copied().unwrap_or(1)
    }
}

/// Endpoint of the reference path followed by one endpoint per step count.
fn coupled_endpoints(cfg: &SimConfig, spec: &SweepSpec) -> Result<(SimConfig, Vec<TrackSpec>)> {
    spec.validate()?;
    let fine = spec.fine_steps();
    let fine_cfg = cfg.with_steps(fine)?;
    let mut tracks = vec![TrackSpec { ratio: 1, modes: None }];
    for &n in &spec.step_counts {
        if !fine.is_multiple_of(n) {
            return Err(Error::invalid(
                "steps",
                format!("{n} does not divide the reference step count {fine}"),
            ));
        }
        tracks.push(TrackSpec {
            ratio: fine / n,
            modes: None,
        });
    }
    Ok((fine_cfg, tracks))
}

fn step_sizes(cfg: &SimConfig, counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&n| cfg.plan.horizon() / n as f64).collect()
}

/// RMS `H_0` distance at `T` between each level and the shared reference.
pub fn strong_error_sweep(cfg: &SimConfig, spec: &SweepSpec) -> Result<RateReport> {
    let (fine_cfg, tracks) = coupled_endpoints(cfg, spec)?;
    let engine = Tracks::new(&fine_cfg, tracks)?;
    let levels = spec.step_counts.len();
    let results = run_paths(spec.threads, spec.num_paths, |p| -> Result<(Vec<f64>, f64)> {
        let ends = engine.run(p, spec.seed)?;
        let reference = &ends[0];
        let sq = ends[1..]
            .iter()
            .map(|y| reference.sub(y).map(|d| d.norm_pair(0.0).powi(2)))
            .collect::<Result<Vec<f64>>>()?;
        Ok((sq, reference.norm_pair(0.0).powi(2)))
    });
    let (records, failed) = split_failures(results)?;

    let ref_sq: Vec<f64> = records.iter().map(|r| r.1).collect();
    let scale = (pairwise_sum(&ref_sq) / ref_sq.len() as f64).sqrt().max(1.0);
    let mut errors = Vec::with_capacity(levels);
    let mut std_errors = Vec::with_capacity(levels);
    for l in 0..levels {
        let col: Vec<f64> = records.iter().map(|r| r.0[l]).collect();
        let (msq, se_msq) = mean_and_se(&col);
        let rms = msq.sqrt();
        errors.push(rms);
        // delta method for sqrt of the mean square
        std_errors.push(if rms > 0.0 { se_msq / (2.0 * rms) } else { 0.0 });
    }
    let hs = step_sizes(cfg, &spec.step_counts);
    let fitted: Vec<bool> = errors.iter().map(|&e| e > NEGLIGIBLE_ERROR * scale).collect();
    let fit = fit_selected(&hs, &errors, &fitted)?;
    Ok(RateReport {
        step_sizes: hs,
        errors,
        std_errors,
        fitted,
        fit,
        failed_paths: failed,
    })
}

fn fit_selected(hs: &[f64], errors: &[f64], keep: &[bool]) -> Result<Option<RateFit>> {
    let (x, y): (Vec<f64>, Vec<f64>) = hs
        .iter()
        .zip(errors)
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|((h, e), _)| (*h, *e))
        .unzip();
    if x.len() < 3 {
        return Ok(None);
    }
    fit_rate(&x, &y).map(Some)
}

/// `|E phi(Y_ref) - E phi(Y_h)|` per step size.
///
/// With `coupled` the per-path differences on a shared Brownian path are
/// averaged. Otherwise each level is simulated on its own independent paths
/// and compared with the reference mean.
pub fn weak_error_sweep(cfg: &SimConfig, phi: &Functional, spec: &SweepSpec, coupled: bool) -> Result<RateReport> {
    let (fine_cfg, tracks) = coupled_endpoints(cfg, spec)?;
    let levels = spec.step_counts.len();
    let (errors, std_errors, failed) = if coupled {
        let engine = Tracks::new(&fine_cfg, tracks)?;
        let results = run_paths(spec.threads, spec.num_paths, |p| -> Result<Vec<f64>> {
            let ends = engine.run(p, spec.seed)?;
            let r = phi.eval(&ends[0]);
            Ok(ends[1..].iter().map(|y| r - phi.eval(y)).collect())
        });
        let (records, failed) = split_failures(results)?;
        let mut errors = Vec::with_capacity(levels);
        let mut ses = Vec::with_capacity(levels);
        for l in 0..levels {
            let col: Vec<f64> = records.iter().map(|r| r[l]).collect();
            let (m, se) = mean_and_se(&col);
            errors.push(m.abs());
            ses.push(se);
        }
        (errors, ses, failed)
    } else {
        let engine = Tracks::new(&fine_cfg, vec![TrackSpec { ratio: 1, modes: None }])?;
        let reference = run_paths(spec.threads, spec.num_paths, |p| engine.run(p, spec.seed).map(|e| phi.eval(&e[0])));
        let (ref_vals, mut failed) = split_failures(reference)?;
        let (ref_mean, ref_se) = mean_and_se(&ref_vals);
        let mut errors = Vec::with_capacity(levels);
        let mut ses = Vec::with_capacity(levels);
        for (l, &n) in spec.step_counts.iter().enumerate() {
            let level_cfg = cfg.with_steps(n)?;
            let level_seed = independent_seed(spec.seed, l);
            let vals = run_paths(spec.threads, spec.num_paths, |p| {
                simulate_path(&level_cfg, p, level_seed).map(|y| phi.eval(&y))
            });
            let (vals, f) = split_failures(vals)?;
            failed += f;
            let (m, se) = mean_and_se(&vals);
            errors.push((ref_mean - m).abs());
            ses.push((ref_se * ref_se + se * se).sqrt());
        }
        (errors, ses, failed)
    };

    let hs = step_sizes(cfg, &spec.step_counts);
    let resolved: Vec<bool> = errors.iter().map(|&e| e > NEGLIGIBLE_ERROR).collect();
    let fitted: Vec<bool> = errors
        .iter()
        .zip(&std_errors)
        .zip(&resolved)
        .map(|((e, se), r)| *r && *e >= SIGNIFICANCE * se)
        .collect();
    let fit = fit_selected(&hs, &errors, &fitted)?;
    if fit.is_none() && resolved.iter().any(|r| *r) {
        return Err(Error::InsufficientPoints {
            found: fitted.iter().filter(|f| **f).count(),
        });
    }
    Ok(RateReport {
        step_sizes: hs,
        errors,
        std_errors,
        fitted,
        fit,
        failed_paths: failed,
    })
}

fn independent_seed(seed: u64, level: usize) -> u64 {
    seed ^ (0xA076_1D64_78BD_642F_u64.wrapping_mul(level as u64 + 1))
}

/// Spatial truncation errors against the full-cutoff run on shared noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinReport {
    pub cutoffs: Vec<usize>,
    pub errors: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Slope of `log error` against `log cutoff` over the nonzero errors.
    pub fit: Option<RateFit>,
    pub failed_paths: usize,
}

impl GalerkinReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cutoff,error,std_error\n");
        for ((c, e), se) in self.cutoffs.iter().zip(&self.errors).zip(&self.std_errors) {
            s.push_str(&format!("{c},{e},{se}\n"));
        }
        s
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.errors.windows(2).all(|w| w[1] < w[0])
    }
}

pub fn galerkin_sweep(cfg: &SimConfig, cutoffs: &[usize], num_paths: usize, seed: u64, threads: usize) -> Result<GalerkinReport> {
    let n = cfg.grid.cutoff();
    if cutoffs.is_empty() || cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("cutoffs", "must be strictly increasing"));
    }
    if *cutoffs.last().unwrap() != n {
        return Err(Error::invalid("cutoffs", format!("largest cutoff must equal the grid cutoff {n}")));
    }
    if num_paths == 0 {
        return Err(Error::invalid("paths", "must be at least 1"));
    }
    let mut tracks = vec![TrackSpec { ratio: 1, modes: None }];
    for &c in &cutoffs[..cutoffs.len() - 1] {
        tracks.push(TrackSpec {
            ratio: 1,
            modes: Some(ModeSet::first(c)),
        });
    }
    let engine = Tracks::new(cfg, tracks)?;
    let results = run_paths(threads, num_paths, |p| -> Result<Vec<f64>> {
        let ends = engine.run(p, seed)?;
        let full = &ends[0];
        let mut sq = ends[1..]
            .iter()
            .map(|y| full.sub(y).map(|d| d.norm_pair(0.0).powi(2)))
            .collect::<Result<Vec<f64>>>()?;
        // the full cutoff compares the full run with itself
        sq.push(0.0);
        Ok(sq)
    });
    let (records, failed) = split_failures(results)?;
    let mut errors = Vec::with_capacity(cutoffs.len());
    let mut std_errors = Vec::with_capacity(cutoffs.len());
    for l in 0..cutoffs.len() {
        let col: Vec<f64> = records.iter().map(|r| r[l]).collect();
        let (msq, se) = mean_and_se(&col);
        let rms = msq.sqrt();
        errors.push(rms);
        std_errors.push(if rms > 0.0 { se / (2.0 * rms) } else { 0.0 });
    }
    let xs: Vec<f64> = cutoffs.iter().map(|&c| c as f64).collect();
    let keep: Vec<bool> = errors.iter().map(|&e| e > NEGLIGIBLE_ERROR).collect();
    let fit = fit_selected(&xs, &errors, &keep)?;
    Ok(GalerkinReport {
        cutoffs: cutoffs.to_vec(),
        errors,
        std_errors,
        fit,
        failed_paths: failed,
    })
}

/// `E ||Y_T||^p_{H_0}` per step size.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub step_sizes: Vec<f64>,
    pub moments: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub power: f64,
    pub failed_paths: usize,
}

impl MomentReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,moment,std_error\n");
        for ((h, m), se) in self.step_sizes.iter().zip(&self.moments).zip(&self.std_errors) {
            s.push_str(&format!("{h},{m},{se}\n"));
        }
        s
    }

    /// `max / min` of the estimated moments.
    pub fn spread(&self) -> f64 {
        let max = self.moments.iter().cloned().fold(f64::MIN, f64::max);
        let min = self.moments.iter().cloned().fold(f64::MAX, f64::min);
        max / min
    }
}

/// Moments of the terminal norm for each step count, all levels coupled to
/// the finest one.
pub fn moment_sweep(cfg: &SimConfig, step_counts: &[usize], power: f64, num_paths: usize, seed: u64, threads: usize) -> Result<MomentReport> {
    let spec = SweepSpec {
        step_counts: step_counts.to_vec(),
        ref_refine: 1,
        num_paths,
        seed,
        threads,
    };
    let (fine_cfg, mut tracks) = coupled_endpoints(cfg, &spec)?;
    // the finest level coincides with the reference track
    tracks.remove(0);
    let engine = Tracks::new(&fine_cfg, tracks)?;
    let results = run_paths(threads, num_paths, |p| {
        engine
            .run(p, seed)
            .map(|ends| ends.iter().map(|y| y.norm_pair(0.0).powf(power)).collect::<Vec<f64>>())
    });
    let (records, failed) = split_failures(results)?;
    let mut moments = Vec::new();
    let mut std_errors = Vec::new();
    for l in 0..step_counts.len() {
        let col: Vec<f64> = records.iter().map(|r| r[l]).collect();
        let (m, se) = mean_and_se(&col);
        moments.push(m);
        std_errors.push(se);
    }
    Ok(MomentReport {
        step_sizes: step_sizes(cfg, step_counts),
        moments,
        std_errors,
        power,
        failed_paths: failed,
    })
}
