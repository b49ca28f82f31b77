//! Numerical checks of the operator inequalities behind the convergence
//! analysis, evaluated on finite truncations.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{apply_diffusion, sine_expand_product, NoiseModel, NoiseStream};
use crate::spectral::{ModeGrid, PairState};
use crate::wave::{lambda_diff_opnorm, scalar_sup_scan, windowed_sup};

/// Tolerance for inequalities that hold exactly in exact arithmetic.
pub const INEQUALITY_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl DenseOperator {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("rows/cols", "must be positive"));
        }
        if entries.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                found: entries.len(),
            });
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("entries", "must be finite"));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let entries = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        Self::new(rows, cols, entries)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            entries: (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_matrix(&self.to_matrix().transpose())
    }

    pub fn matmul(&self, other: &DenseOperator) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::LengthMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        Ok(Self::from_matrix(&(self.to_matrix() * other.to_matrix())))
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.to_matrix().singular_values().iter().copied().collect()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        self.singular_values().into_iter().fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

/// `(sum sigma_i^p)^{1/p}`.
pub fn schatten_norm(a: &DenseOperator, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p", format!("must be at least 1, got {p}")));
    }
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Ok(0.0);
    }
    if p.is_infinite() {
        return Ok(max);
    }
    // scale by the largest value to keep sigma^p in range
    let s: f64 = sv.iter().map(|x| (x / max).powf(p)).sum();
    Ok(max * s.powf(1.0 / p))
}

/// `sum_u |T(A e_u, B e_u)| / (||T|| ||A||_{S_{1+r}} ||B||_{S_{1+1/r}})` with
/// `T(x, y) = x^T t0 y`. Zero when the denominator vanishes.
pub fn schatten_hoelder_ratio(a: &DenseOperator, b: &DenseOperator, t0: &DenseOperator, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("must be positive, got {r}")));
    }
    let m = a.transpose().matmul(t0)?.matmul(b)?;
    let lhs: f64 = (0..m.rows().min(m.cols())).map(|u| m.get(u, u).abs()).sum();
    let denom = t0.operator_norm() * schatten_norm(a, 1.0 + r)? * schatten_norm(b, 1.0 + 1.0 / r)?;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs / denom)
}

fn gaussian_matrix(stream: &mut NoiseStream, slot: u64, dim: usize) -> DenseOperator {
    let mut z = vec![0.0; dim * dim];
    stream.standard_normals(slot, &mut z);
    DenseOperator::new(dim, dim, z).expect("finite normals")
}

/// Largest Schatten-Hoelder ratio over `trials` random Gaussian triples.
pub fn check_schatten_hoelder(dim: usize, r: f64, trials: usize, seed: u64) -> Result<f64> {
    if dim == 0 || trials == 0 {
        return Err(Error::invalid("dim/trials", "must be positive"));
    }
    let ratios = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut stream = NoiseStream::new(seed, trial);
            let a = gaussian_matrix(&mut stream, 0, dim);
            let b = gaussian_matrix(&mut stream, 1, dim);
            let raw = gaussian_matrix(&mut stream, 2, dim);
            let t0 = DenseOperator::from_fn(dim, dim, |i, j| 0.5 * (raw.get(i, j) + raw.get(j, i)))?;
            schatten_hoelder_ratio(&a, &b, &t0, r)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// Frobenius norm of `(kpi)^{2r} <e_k, m e_j> (jpi)^{-1}` for `k, j <= n`.
pub fn multiplier_hs_norm(m: &[f64], r: f64, n: usize) -> Result<f64> {
    if !(r > -0.25 && r < 0.25) {
        return Err(Error::invalid("r", format!("{r} outside (-1/4, 1/4)")));
    }
    if n == 0 {
        return Err(Error::invalid("N", "must be positive"));
    }
    if m.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid("m", "must be finite"));
    }
    let row_w: Vec<f64> = (1..=n).map(|k| (k as f64 * PI).powf(2.0 * r)).collect();
    let mut unit = vec![0.0; n];
    let mut total = 0.0;
    for j in 0..n {
        unit[j] = 1.0;
        let col = sine_expand_product(m, &unit, n);
        unit[j] = 0.0;
        let cw = 1.0 / ((j + 1) as f64 * PI);
        total += col.iter().zip(&row_w).map(|(c, w)| (c * w * cw).powi(2)).sum::<f64>();
    }
    Ok(total.sqrt())
}

/// `(sum (kpi)^{4r} m_k^2)^{1/2}`.
pub fn multiplier_norm(m: &[f64], r: f64) -> f64 {
    m.iter()
        .enumerate()
        .map(|(i, c)| ((i + 1) as f64 * PI).powf(4.0 * r) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Noise weights and the regularity exponents tied to `epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCalibration {
    pub epsilon: f64,
    /// `mu_n = (n pi)^{(1 - epsilon)/2}`.
    pub mode_weights: Vec<f64>,
}

impl NoiseCalibration {
    pub fn new(epsilon: f64, noise_cutoff: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 2.0 / 3.0) {
            return Err(Error::invalid("epsilon", format!("{epsilon} outside (0, 2/3]")));
        }
        if noise_cutoff == 0 {
            return Err(Error::invalid("noise_cutoff", "must be at least 1"));
        }
        let mode_weights = (1..=noise_cutoff)
            .map(|n| (n as f64 * PI).powf((1.0 - epsilon) / 2.0))
            .collect();
        Ok(Self { epsilon, mode_weights })
    }

    pub fn gamma(&self) -> f64 {
        1.0 - self.epsilon / 4.0
    }

    pub fn beta(&self) -> f64 {
        0.5 + self.epsilon / 4.0
    }

    pub fn rho(&self) -> f64 {
        0.5 - self.epsilon / 4.0
    }
}

/// Random state with coefficient `n` of size `amp n^{-decay}`; draws are
/// keyed by mode so truncations at different cutoffs agree on shared modes.
fn random_state(grid: &std::sync::Arc<ModeGrid>, seed: u64, sample: u64, slot: u64) -> PairState {
    let n = grid.cutoff();
    let mut stream = NoiseStream::new(seed, sample);
    let mut amp = [0.0];
    stream.standard_normals(slot, &mut amp);
    let amp = 10f64.powf(amp[0].clamp(-2.0, 2.0));
    let mut pos = vec![0.0; n];
    let mut vel = vec![0.0; n];
    for k in 0..n {
        let mut z = [0.0; 2];
        stream.standard_normals(((slot + 1) << 20) + k as u64, &mut z);
        let m = (k + 1) as f64;
        pos[k] = amp * z[0] * m.powf(-1.5);
        vel[k] = amp * z[1] * m.powf(-0.5);
    }
    PairState::new(grid.clone(), pos, vel).expect("finite")
}

fn weighted_noise_energy(x: &PairState, model: &NoiseModel, weights_sq: &[f64]) -> Result<f64> {
    let k = model.noise_cutoff;
    let mut unit = vec![0.0; k];
    let mut total = 0.0;
    for n in 0..k {
        unit[n] = 1.0;
        let col = apply_diffusion(x, &unit, model)?;
        unit[n] = 0.0;
        total += weights_sq[n] * col.norm_pair(0.0).powi(2);
    }
    Ok(total)
}

/// Empirical growth and Lipschitz constants `(c_hat, l_hat)` of the diffusion.
pub fn calibrate_noise_constants(
    cal: &NoiseCalibration,
    grid: &std::sync::Arc<ModeGrid>,
    model: &NoiseModel,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if cal.mode_weights.len() != model.noise_cutoff {
        return Err(Error::LengthMismatch {
            expected: model.noise_cutoff,
            found: cal.mode_weights.len(),
        });
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be positive"));
    }
    let w2: Vec<f64> = cal.mode_weights.iter().map(|w| w * w).collect();
    let inv_w2: Vec<f64> = w2.iter().map(|w| 1.0 / w).collect();
    let growth_r = cal.gamma() - cal.beta();
    let lip_r = cal.beta() - cal.gamma();
    let pairs = (0..samples as u64)
        .into_par_iter()
        .map(|s| -> Result<(f64, f64)> {
            let x = random_state(grid, seed, s, 0);
            let y = random_state(grid, seed, s, 1);
            let growth = weighted_noise_energy(&x, model, &w2)? / x.norm_pair(growth_r).powi(2).max(1.0);
            let d = x.sub(&y)?;
            // B is affine, so (B(x) - B(y)) u is the b0-free diffusion of x - y
            let linear = NoiseModel::new(0.0, model.b1, model.noise_cutoff)?;
            let lip = weighted_noise_energy(&d, &linear, &inv_w2)? / d.norm_pair(lip_r).powi(2);
            Ok((growth.sqrt(), lip.sqrt()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.iter().fold((0.0f64, 0.0f64), |(c, l), (g, li)| (c.max(*g), l.max(*li))))
}

#[derive(Debug, Clone, Serialize)]
pub struct SupCheck {
    pub alphas: Vec<f64>,
    pub grid_max: Vec<f64>,
    pub sup: Vec<f64>,
    pub sup_at_0: f64,
    pub sup_at_2: f64,
    /// Growth of the windowed sup as the window approaches the excluded boundary.
    pub divergence_growth: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SemigroupCheck {
    pub cutoffs: Vec<usize>,
    pub alphas: Vec<f64>,
    pub times: usize,
    /// Largest `value - 2^{3/2} t^alpha` over the whole grid.
    pub max_excess: f64,
    /// Largest `value / (2^{3/2} t^alpha)`.
    pub max_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoelderCase {
    pub dim: usize,
    pub r: f64,
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HoelderCheck {
    pub trials: usize,
    pub cases: Vec<HoelderCase>,
    pub max_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierCheck {
    pub r: f64,
    pub cutoffs: Vec<usize>,
    pub hs_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Soft: successive ratios within 20% of each other.
    pub stable: bool,
    pub constant_limit: f64,
    pub constant_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationCheck {
    pub epsilon: f64,
    pub cutoffs: Vec<usize>,
    pub c_hat: Vec<f64>,
    pub l_hat: Vec<f64>,
    /// Soft: finite and within 30% across the cutoffs.
    pub stable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropsReport {
    pub seed: u64,
    pub sup_estimate: SupCheck,
    pub semigroup_bound: SemigroupCheck,
    pub schatten_hoelder: HoelderCheck,
    pub multiplier_hs: MultiplierCheck,
    pub noise_calibration: CalibrationCheck,
}

impl PropsReport {
    /// Whether every hard inequality holds.
    pub fn passed(&self) -> bool {
        self.sup_estimate.pass && self.semigroup_bound.pass && self.schatten_hoelder.pass
    }
}

pub fn check_sup_estimate() -> Result<SupCheck> {
    let alphas = vec![0.0, 0.5, 1.0, 1.5, 2.0];
    let mut grid_max = Vec::new();
    let mut sup = Vec::new();
    for &a in &alphas {
        let scan = scalar_sup_scan(a)?;
        grid_max.push(scan.grid_max);
        sup.push(scan.sup);
    }
    let sup_at_0 = sup[0];
    let sup_at_2 = sup[4];
    let near_zero = |lo: f64| windowed_sup(2.5, lo, 1.0, lo).sup;
    let far = |hi: f64| windowed_sup(-0.5, 0.0, hi, 1e-2).sup;
    let divergence_growth = vec![near_zero(1e-6) / near_zero(1e-2), far(1e4) / far(1e2)];
    let pass = grid_max.iter().chain(&sup).all(|&v| v <= 2.0 + 1e-9)
        && (sup_at_0 - 2.0).abs() <= 1e-6
        && (sup_at_2 - 0.5).abs() <= 1e-6;
    Ok(SupCheck {
        alphas,
        grid_max,
        sup,
        sup_at_0,
        sup_at_2,
        divergence_growth,
        pass,
    })
}

/// Log grid of `count` times on `[1e-6, 1e2]`.
pub fn semigroup_times(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 10f64.powf(-6.0 + 8.0 * i as f64 / (count - 1) as f64))
        .collect()
}

pub fn check_semigroup_bound(cutoffs: &[usize], alphas: &[f64], times: &[f64]) -> Result<SemigroupCheck> {
    let bound = 2f64.powf(1.5);
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_ratio = 0.0f64;
    for &n in cutoffs {
        let grid = ModeGrid::new(n, 1.0)?;
        for &a in alphas {
            for &t in times {
                let v = lambda_diff_opnorm(a, t, &grid)?;
                let b = bound * t.powf(a);
                max_excess = max_excess.max(v - b);
                max_ratio = max_ratio.max(v / b);
            }
        }
    }
    Ok(SemigroupCheck {
        cutoffs: cutoffs.to_vec(),
        alphas: alphas.to_vec(),
        times: times.len(),
        max_excess,
        max_ratio,
        pass: max_excess <= 1e-9,
    })
}

pub fn check_hoelder_suite(dims: &[usize], rs: &[f64], trials: usize, seed: u64) -> Result<HoelderCheck> {
    let mut cases = Vec::new();
    for (i, &dim) in dims.iter().enumerate() {
        for (j, &r) in rs.iter().enumerate() {
            let case_seed = seed.wrapping_add((i * rs.len() + j) as u64 * 0x9E37_79B9);
            cases.push(HoelderCase {
                dim,
                r,
                max_ratio: check_schatten_hoelder(dim, r, trials, case_seed)?,
            });
        }
    }
    let max_ratio = cases.iter().map(|c| c.max_ratio).fold(0.0, f64::max);
    Ok(HoelderCheck {
        trials,
        cases,
        max_ratio,
        pass: max_ratio <= 1.0 + INEQUALITY_SLACK,
    })
}

/// Sine coefficients of the constant function `c`.
pub fn constant_sine_coeffs(c: f64, len: usize) -> Vec<f64> {
    (1..=len)
        .map(|k| if k % 2 == 1 { c * 2.0 * 2f64.sqrt() / (k as f64 * PI) } else { 0.0 })
        .collect()
}

pub fn check_multiplier(r: f64, cutoffs: &[usize]) -> Result<MultiplierCheck> {
    let m = [1.0];
    let mut hs_norms = Vec::new();
    let mut ratios = Vec::new();
    for &n in cutoffs {
        let v = multiplier_hs_norm(&m, r, n)?;
        hs_norms.push(v);
        ratios.push(v / multiplier_norm(&m, r));
    }
    let stable = ratios.windows(2).all(|w| (w[1] / w[0] - 1.0).abs() <= 0.2);
    let constant_value = multiplier_hs_norm(&constant_sine_coeffs(1.0, 1024), 0.0, 128)?;
    Ok(MultiplierCheck {
        r,
        cutoffs: cutoffs.to_vec(),
        hs_norms,
        ratios,
        stable,
        constant_limit: 1.0 / 6f64.sqrt(),
        constant_value,
    })
}

pub fn check_calibration(epsilon: f64, cutoffs: &[usize], b0: f64, b1: f64, samples: usize, seed: u64) -> Result<CalibrationCheck> {
    let mut c_hat = Vec::new();
    let mut l_hat = Vec::new();
    for &n in cutoffs {
        let grid = std::sync::Arc::new(ModeGrid::new(n, 1.0)?);
        let model = NoiseModel::new(b0, b1, n)?;
        let cal = NoiseCalibration::new(epsilon, n)?;
        let (c, l) = calibrate_noise_constants(&cal, &grid, &model, samples, seed)?;
        c_hat.push(c);
        l_hat.push(l);
    }
    let within = |v: &[f64]| v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] == w[1] || (w[1] / w[0] - 1.0).abs() <= 0.3);
    let stable = within(&c_hat) && within(&l_hat);
    Ok(CalibrationCheck {
        epsilon,
        cutoffs: cutoffs.to_vec(),
        c_hat,
        l_hat,
        stable,
    })
}

/// Full property suite as reported by the `props` command.
pub fn run_property_suite(seed: u64) -> Result<PropsReport> {
    Ok(PropsReport {
        seed,
        sup_estimate: check_sup_estimate()?,
        semigroup_bound: check_semigroup_bound(&[16, 256], &[0.0, 0.25, 0.5, 0.75, 1.0], &semigroup_times(81))?,
        schatten_hoelder: check_hoelder_suite(&[2, 8, 16], &[1.0 / 3.0, 1.0, 2.0, 5.0], 1000, seed)?,
        multiplier_hs: check_multiplier(0.2, &[32, 64, 128])?,
        noise_calibration: check_calibration(0.5, &[64, 128], 0.5, 1.0, 32, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn schatten_examples() {
        let id = DenseOperator::identity(5).unwrap();
        for &p in &[1.0, 2.0, 3.5] {
            assert!((schatten_norm(&id, p).unwrap() - 5f64.powf(1.0 / p)).abs() < 1e-12);
        }
        let d = DenseOperator::new(2, 2, vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        assert!((schatten_norm(&d, 2.0).unwrap() - 5.0).abs() < 1e-12);
        let u = [1.0, 2.0, -2.0];
        let v = [0.5, 0.5];
        let r1 = DenseOperator::from_fn(3, 2, |i, j| u[i] * v[j]).unwrap();
        for &p in &[1.0, 1.7, 4.0] {
            assert!((schatten_norm(&r1, p).unwrap() - 3.0 * 0.5f64.sqrt()).abs() < 1e-12);
        }
        assert!(schatten_norm(&id, 0.5).is_err());
    }

    #[test]
    fn hoelder_equality_and_zero() {
        let id = DenseOperator::identity(4).unwrap();
        assert!((schatten_hoelder_ratio(&id, &id, &id, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let zero = DenseOperator::new(4, 4, vec![0.0; 16]).unwrap();
        assert_eq!(schatten_hoelder_ratio(&zero, &id, &id, 1.0).unwrap(), 0.0);
        let m = check_schatten_hoelder(8, 2.0, 200, 7).unwrap();
        assert!(m > 0.0 && m <= 1.0 + INEQUALITY_SLACK);
    }

    #[test]
    fn operator_validation() {
        assert!(DenseOperator::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseOperator::new(1, 1, vec![f64::NAN]).is_err());
        assert!(DenseOperator::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn multiplier_examples() {
        assert_eq!(multiplier_hs_norm(&[0.0; 4], 0.1, 8).unwrap(), 0.0);
        assert!(multiplier_hs_norm(&[1.0], 0.25, 8).is_err());
        assert!(multiplier_hs_norm(&[1.0], -0.25, 8).is_err());
        let c = multiplier_hs_norm(&constant_sine_coeffs(2.0, 1024), 0.0, 128).unwrap();
        assert!((c / (2.0 / 6f64.sqrt()) - 1.0).abs() < 0.02, "{c}");
    }

    #[test]
    fn calibration_degenerate_cases() {
        let grid = Arc::new(ModeGrid::new(16, 1.0).unwrap());
        let cal = NoiseCalibration::new(0.5, 16).unwrap();
        let (c, l) = calibrate_noise_constants(&cal, &grid, &NoiseModel::new(0.5, 0.0, 16).unwrap(), 4, 1).unwrap();
        assert!(c > 0.0);
        assert_eq!(l, 0.0);
        let (c, _) = calibrate_noise_constants(&cal, &grid, &NoiseModel::new(0.0, 0.0, 16).unwrap(), 4, 1).unwrap();
        assert_eq!(c, 0.0);
        assert!(calibrate_noise_constants(&cal, &grid, &NoiseModel::new(0.5, 1.0, 8).unwrap(), 4, 1).is_err());
    }

    #[test]
    fn calibration_weights() {
        let cal = NoiseCalibration::new(0.5, 8).unwrap();
        assert!(cal.mode_weights.windows(2).all(|w| w[1] > w[0]));
        assert!((cal.gamma() - 0.875).abs() < 1e-15);
        assert!((cal.beta() - 0.625).abs() < 1e-15);
        assert!((cal.rho() - 0.375).abs() < 1e-15);
        assert!(NoiseCalibration::new(0.7, 8).is_err());
        assert!(NoiseCalibration::new(0.0, 8).is_err());
    }
}
