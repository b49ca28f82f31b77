//! Exact action of the wave group on the truncated product space.
//!
//! On mode `n` with `s = sqrt(mu_n)` the group acts as
//!
//! ```text
//! pos' =  cos(t s) pos + sin(t s)/s vel
//! vel' = -s sin(t s) pos + cos(t s) vel
//! ```
//!
//! which is a rotation by `t s` in the orthonormal coordinates
//! `(pos, vel / s)` of `H_0 x H_{-1/2}`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::spectral::{ModeGrid, PairState};

/// Trigonometric tables of `e^{tA}` for one `(grid, t)`.
#[derive(Debug, Clone)]
pub struct GroupCache {
    grid: Arc<ModeGrid>,
    t: f64,
    cos_vals: Vec<f64>,
    sin_vals: Vec<f64>,
}

impl GroupCache {
    pub fn new(grid: Arc<ModeGrid>, t: f64) -> Self {
        let (sin_vals, cos_vals) = grid
            .sqrt_eigenvalues()
            .iter()
            .map(|s| (t * s).sin_cos())
            .unzip();
        Self {
            grid,
            t,
            cos_vals,
            sin_vals,
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }

    pub fn cos_vals(&self) -> &[f64] {
        &self.cos_vals
    }

    pub fn sin_vals(&self) -> &[f64] {
        &self.sin_vals
    }

    pub fn apply(&self, x: &PairState) -> Result<PairState> {
        if **x.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        let mut out = x.clone();
        self.apply_in_place(&mut out.pos, &mut out.vel);
        Ok(out)
    }

    pub(crate) fn apply_in_place(&self, pos: &mut [f64], vel: &mut [f64]) {
        let s = self.grid.sqrt_eigenvalues();
        for n in 0..pos.len() {
            let (c, sn, sq) = (self.cos_vals[n], self.sin_vals[n], s[n]);
            let (p, v) = (pos[n], vel[n]);
            pos[n] = c * p + (sn / sq) * v;
            vel[n] = -sq * sn * p + c * v;
        }
    }
}

/// `e^{tA} x`; defined for every real `t` on the truncation.
pub fn propagate(x: &PairState, t: f64) -> PairState {
    let cache = GroupCache::new(x.grid().clone(), t);
    let mut out = x.clone();
    cache.apply_in_place(&mut out.pos, &mut out.vel);
    out
}

/// `||e^{tA} e^{sA} x - e^{(s+t)A} x||_{H_0}`.
pub fn group_defect(x: &PairState, s: f64, t: f64) -> f64 {
    let two_step = propagate(&propagate(x, s), t);
    let one_step = propagate(x, s + t);
    two_step
        .sub(&one_step)
        .expect("same grid by construction")
        .norm_pair(0.0)
}

/// Largest singular value of `[[a, b], [c, d]]`.
pub fn block_spectral_norm(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let frob = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (frob * frob - 4.0 * det * det).max(0.0).sqrt();
    ((frob + disc) / 2.0).sqrt()
}

/// Exact `||Lambda^{-alpha}(id - e^{tA})||_{L(H_0)}` on the truncation.
pub fn lambda_diff_opnorm(alpha: f64, t: f64, grid: &ModeGrid) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} outside [0, 1]")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("must be positive, got {t}")));
    }
    let mut best = 0.0f64;
    for (mu, s) in grid.eigenvalues().iter().zip(grid.sqrt_eigenvalues()) {
        let theta = t * s;
        // 1 - cos(theta) without cancellation
        let half = (theta / 2.0).sin();
        let one_minus_cos = 2.0 * half * half;
        let sin = theta.sin();
        let norm = block_spectral_norm(one_minus_cos, -sin, sin, one_minus_cos);
        best = best.max(mu.powf(-alpha / 2.0) * norm);
    }
    Ok(best)
}

pub const SUP_GRID_SPACING: f64 = 1e-5;
pub const SUP_GRID_END: f64 = 4.0 * std::f64::consts::PI;

/// Result of a numerical supremum of `t^{-alpha} |1 - cos t|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupScan {
    /// Supremum estimate including the analytic tail bound.
    pub sup: f64,
    /// Best point found on the grid (after refinement).
    pub argmax: f64,
    /// Largest raw grid value, before refinement and tail bound.
    pub grid_max: f64,
}

fn sup_objective(alpha: f64, t: f64) -> f64 {
    let half = (t / 2.0).sin();
    let v = 2.0 * half * half;
    if alpha == 0.0 {
        v
    } else {
        t.powf(-alpha) * v
    }
}

/// Dense scan of `t^{-alpha} |1 - cos t|` over `(t_lo, t_hi]` with one Newton
/// refinement of the log-derivative around the best grid point.
pub fn windowed_sup(alpha: f64, t_lo: f64, t_hi: f64, spacing: f64) -> SupScan {
    let steps = ((t_hi - t_lo) / spacing).floor() as usize;
    let mut best_t = t_lo + spacing;
    let mut best = f64::NEG_INFINITY;
    for i in 1..=steps {
        let t = t_lo + i as f64 * spacing;
        let f = sup_objective(alpha, t);
        if f > best {
            best = f;
            best_t = t;
        }
    }
    let grid_max = best;
    let (mut sup, mut argmax) = (best, best_t);

    // d/dt log f = -alpha/t + cot(t/2)
    let half = (best_t / 2.0).sin();
    let g = -alpha / best_t + (best_t / 2.0).cos() / half;
    let dg = alpha / (best_t * best_t) - 1.0 / (2.0 * half * half);
    if dg != 0.0 {
        let t_new = best_t - g / dg;
        if t_new > t_lo && (t_new - best_t).abs() <= spacing {
            let f = sup_objective(alpha, t_new);
            if f > sup {
                sup = f;
                argmax = t_new;
            }
        }
    }
    SupScan {
        sup,
        argmax,
        grid_max,
    }
}

/// `sup_{t>0} t^{-alpha}|1 - cos t|` for `alpha` in `[0, 2]`.
pub fn scalar_sup_scan(alpha: f64) -> Result<SupScan> {
    if !(0.0..=2.0).contains(&alpha) {
        return Err(Error::invalid("alpha", format!("{alpha} outside [0, 2]")));
    }
    let mut scan = windowed_sup(alpha, 0.0, SUP_GRID_END, SUP_GRID_SPACING);
    // beyond the grid the objective is at most 2 t^{-alpha}
    let tail = 2.0 * SUP_GRID_END.powf(-alpha);
    if tail > scan.sup {
        scan.sup = tail;
    }
    Ok(scan)
}

pub fn scalar_sup(alpha: f64) -> Result<f64> {
    scalar_sup_scan(alpha).map(|s| s.sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Arc<ModeGrid> {
        Arc::new(ModeGrid::new(n, 1.0).unwrap())
    }

    #[test]
    fn propagate_examples() {
        let g = grid(1);
        let x = PairState::new(g.clone(), vec![1.0], vec![0.0]).unwrap();
        assert_eq!(propagate(&x, 0.0), x);
        let y = propagate(&x, 1.0);
        assert!((y.pos()[0] + 1.0).abs() < 1e-15);
        assert!(y.vel()[0].abs() < 1e-14);

        let x = PairState::new(g, vec![0.0], vec![1.0]).unwrap();
        let y = propagate(&x, 0.5);
        assert!((y.pos()[0] - 1.0 / PI).abs() < 1e-15);
        assert!(y.vel()[0].abs() < 1e-15);
    }

    #[test]
    fn cache_checks_grid() {
        let cache = GroupCache::new(grid(3), 0.1);
        assert!(cache.apply(&PairState::zeros(grid(4))).is_err());
        for (c, s) in cache.cos_vals().iter().zip(cache.sin_vals()) {
            assert!((c * c + s * s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn group_defect_examples() {
        let g = grid(8);
        let x = PairState::new(g, (1..=8).map(|n| 1.0 / n as f64).collect(), vec![0.5; 8]).unwrap();
        assert_eq!(group_defect(&x, 0.0, 0.0), 0.0);
        assert!(group_defect(&x, 0.3, 0.7) <= 1e-11 * x.norm_pair(0.0));
        assert!(group_defect(&x, 1.0, -1.0) <= 1e-11 * x.norm_pair(0.0));
    }

    #[test]
    fn block_norm_matches_rotation_formula() {
        for &th in &[0.0, 1e-9, 0.3, 1.0, PI, 5.0] {
            let h = (th / 2.0f64).sin();
            let n = block_spectral_norm(2.0 * h * h, -th.sin(), th.sin(), 2.0 * h * h);
            assert!((n - 2.0 * h.abs()).abs() < 1e-14);
        }
        assert!((block_spectral_norm(3.0, 0.0, 0.0, 4.0) - 4.0).abs() < 1e-14);
        assert!((block_spectral_norm(0.0, 2.0, 0.0, 0.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn lambda_diff_examples() {
        // t sqrt(mu_1) = pi on a single mode: ||I - R(pi)|| = 2
        let g = ModeGrid::new(1, 1.0).unwrap();
        assert!((lambda_diff_opnorm(0.0, 1.0, &g).unwrap() - 2.0).abs() < 1e-14);
        let g16 = ModeGrid::new(16, 1.0).unwrap();
        for &a in &[0.0, 0.5, 1.0] {
            let t = 1e-8;
            assert!(lambda_diff_opnorm(a, t, &g16).unwrap() <= 2f64.powf(1.5) * t.powf(a));
        }
        let g256 = ModeGrid::new(256, 1.0).unwrap();
        assert!(lambda_diff_opnorm(1.0, 0.01, &g256).unwrap() <= 2f64.powf(1.5) * 0.01);
        assert!(lambda_diff_opnorm(1.5, 0.1, &g16).is_err());
        assert!(lambda_diff_opnorm(0.5, 0.0, &g16).is_err());
    }

    #[test]
    fn sup_examples() {
        assert!((scalar_sup(0.0).unwrap() - 2.0).abs() < 1e-6);
        assert!((scalar_sup(2.0).unwrap() - 0.5).abs() < 1e-6);
        let s1 = scalar_sup(1.0).unwrap();
        assert!(s1 > 0.0 && s1 <= 2.0);
        assert!(scalar_sup(-0.1).is_err());
        assert!(scalar_sup(2.1).is_err());
    }

    #[test]
    fn sup_diverges_outside_range() {
        // growth at the window boundary as a stand-in for an infinite sup
        let near_zero = |lo: f64| windowed_sup(2.5, lo, 1.0, lo).sup;
        assert!(near_zero(1e-6) > 10.0 * near_zero(1e-2));
        let far = |hi: f64| windowed_sup(-0.5, 0.0, hi, 1e-2).sup;
        assert!(far(1e4) > 5.0 * far(1e2));
    }
}
