//! Sine-basis representation of the Dirichlet Laplacian on the unit interval.
//!
//! Mode `n` (1-based) is `e_n(x) = sqrt(2) sin(n pi x)` with eigenvalue
//! `mu_n = wave_speed * (n pi)^2` of `-wave_speed * Laplacian`. States are
//! stored as plain sine coefficients; every fractional-power weighting is
//! applied inside the norm functions.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Spectral truncation: the first `cutoff` Dirichlet eigenmodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeGrid {
    cutoff: usize,
    wave_speed: f64,
    eigenvalues: Vec<f64>,
    sqrt_eigenvalues: Vec<f64>,
}

impl ModeGrid {
    pub fn new(cutoff: usize, wave_speed: f64) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::invalid("cutoff", "must be at least 1"));
        }
        if !(wave_speed.is_finite() && wave_speed > 0.0) {
            return Err(Error::invalid(
                "wave_speed",
                format!("must be positive and finite, got {wave_speed}"),
            ));
        }
        let eigenvalues: Vec<f64> = (1..=cutoff)
            .map(|n| wave_speed * ((n as f64) * PI).powi(2))
            .collect();
        let sqrt_eigenvalues = eigenvalues.iter().map(|m| m.sqrt()).collect();
        Ok(Self {
            cutoff,
            wave_speed,
            eigenvalues,
            sqrt_eigenvalues,
        })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn wave_speed(&self) -> f64 {
        self.wave_speed
    }

    /// `mu_n` for 0-based index `n`, i.e. mode `n + 1`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sqrt_eigenvalues(&self) -> &[f64] {
        &self.sqrt_eigenvalues
    }

    /// Weights `mu_n^p`; `p == 0` gives exact ones.
    pub fn eigen_powers(&self, p: f64) -> Vec<f64> {
        if p == 0.0 {
            vec![1.0; self.cutoff]
        } else {
            self.eigenvalues.iter().map(|m| m.powf(p)).collect()
        }
    }
}

/// Convenience constructor mirroring [`ModeGrid::new`].
pub fn build_grid(cutoff: usize, wave_speed: f64) -> Result<ModeGrid> {
    ModeGrid::new(cutoff, wave_speed)
}

/// `||v||_{H_r} = (sum mu_n^{2r} a_n^2)^{1/2}`.
pub fn norm_scalar(coeffs: &[f64], r: f64, grid: &ModeGrid) -> Result<f64> {
    check_len(coeffs, grid.cutoff)?;
    Ok(weighted_sq(coeffs, r, grid).sqrt())
}

fn weighted_sq(coeffs: &[f64], r: f64, grid: &ModeGrid) -> f64 {
    if r == 0.0 {
        return coeffs.iter().map(|a| a * a).sum();
    }
    coeffs
        .iter()
        .zip(&grid.eigenvalues)
        .map(|(a, m)| m.powf(2.0 * r) * a * a)
        .sum()
}

fn check_len(v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// A point `(v, w)` of the position/velocity product space, truncated to a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    grid: Arc<ModeGrid>,
    pub(crate) pos: Vec<f64>,
    pub(crate) vel: Vec<f64>,
}

impl PairState {
    pub fn new(grid: Arc<ModeGrid>, pos: Vec<f64>, vel: Vec<f64>) -> Result<Self> {
        check_len(&pos, grid.cutoff)?;
        check_len(&vel, grid.cutoff)?;
        if !pos.iter().chain(&vel).all(|x| x.is_finite()) {
            return Err(Error::invalid("state", "coefficients must be finite"));
        }
        Ok(Self { grid, pos, vel })
    }

    pub fn zeros(grid: Arc<ModeGrid>) -> Self {
        let n = grid.cutoff;
        Self {
            grid,
            pos: vec![0.0; n],
            vel: vec![0.0; n],
        }
    }

    /// State with a single nonzero coefficient; `mode` is 1-based.
    pub fn unit(grid: Arc<ModeGrid>, mode: usize, velocity: bool) -> Result<Self> {
        if mode == 0 || mode > grid.cutoff {
            return Err(Error::invalid("mode", format!("{mode} outside 1..={}", grid.cutoff)));
        }
        let mut s = Self::zeros(grid);
        if velocity {
            s.vel[mode - 1] = 1.0;
        } else {
            s.pos[mode - 1] = 1.0;
        }
        Ok(s)
    }

    pub fn grid(&self) -> &Arc<ModeGrid> {
        &self.grid
    }

    pub fn pos(&self) -> &[f64] {
        &self.pos
    }

    pub fn vel(&self) -> &[f64] {
        &self.vel
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.pos, self.vel)
    }

    pub fn is_finite(&self) -> bool {
        self.pos.iter().chain(&self.vel).all(|x| x.is_finite())
    }

    /// `||(v,w)||_{H_r} = (sum mu^r a^2 + mu^{r-1} b^2)^{1/2}`.
    pub fn norm_pair(&self, r: f64) -> f64 {
        (weighted_sq(&self.pos, r / 2.0, &self.grid)
            + weighted_sq(&self.vel, r / 2.0 - 0.5, &self.grid))
        .sqrt()
    }

    /// `<x, y>_{H_0}`.
    pub fn inner0(&self, other: &PairState) -> Result<f64> {
        self.same_grid(other)?;
        let mu = &self.grid.eigenvalues;
        let p: f64 = self.pos.iter().zip(&other.pos).map(|(a, b)| a * b).sum();
        let v: f64 = self
            .vel
            .iter()
            .zip(&other.vel)
            .zip(mu)
            .map(|((a, b), m)| a * b / m)
            .sum();
        Ok(p + v)
    }

    /// Scales mode `n` of both components by `mu_n^{s/2}`.
    pub fn apply_lambda_power(&self, s: f64) -> PairState {
        if s == 0.0 {
            return self.clone();
        }
        let w = self.grid.eigen_powers(s / 2.0);
        PairState {
            grid: self.grid.clone(),
            pos: self.pos.iter().zip(&w).map(|(a, w)| a * w).collect(),
            vel: self.vel.iter().zip(&w).map(|(b, w)| b * w).collect(),
        }
    }

    /// Zeroes every mode outside `set`, in both components.
    pub fn project(&self, set: &ModeSet) -> Result<PairState> {
        let mask = set.mask(self.grid.cutoff)?;
        let mut out = self.clone();
        out.project_in_place(&mask);
        Ok(out)
    }

    pub(crate) fn project_in_place(&mut self, mask: &[bool]) {
        for ((p, v), keep) in self.pos.iter_mut().zip(self.vel.iter_mut()).zip(mask) {
            if !keep {
                *p = 0.0;
                *v = 0.0;
            }
        }
    }

    pub fn sub(&self, other: &PairState) -> Result<PairState> {
        self.same_grid(other)?;
        Ok(PairState {
            grid: self.grid.clone(),
            pos: self.pos.iter().zip(&other.pos).map(|(a, b)| a - b).collect(),
            vel: self.vel.iter().zip(&other.vel).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &PairState) -> Result<PairState> {
        self.same_grid(other)?;
        Ok(PairState {
            grid: self.grid.clone(),
            pos: self.pos.iter().zip(&other.pos).map(|(a, b)| a + b).collect(),
            vel: self.vel.iter().zip(&other.vel).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn scale(&self, c: f64) -> PairState {
        PairState {
            grid: self.grid.clone(),
            pos: self.pos.iter().map(|a| c * a).collect(),
            vel: self.vel.iter().map(|a| c * a).collect(),
        }
    }

    fn same_grid(&self, other: &PairState) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Free-function form of [`PairState::norm_pair`].
pub fn norm_pair(x: &PairState, r: f64) -> f64 {
    x.norm_pair(r)
}

pub fn apply_lambda_power(x: &PairState, s: f64) -> PairState {
    x.apply_lambda_power(s)
}

pub fn project(x: &PairState, set: &ModeSet) -> Result<PairState> {
    x.project(set)
}

/// Sorted set of 1-based mode indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModeSet {
    included: Vec<usize>,
}

impl ModeSet {
    /// Indices are sorted; duplicates are rejected.
    pub fn new(indices: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut included: Vec<usize> = indices.into_iter().collect();
        included.sort_unstable();
        if included.first() == Some(&0) {
            return Err(Error::invalid("modes", "mode indices are 1-based"));
        }
        if included.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("modes", "duplicate mode index"));
        }
        Ok(Self { included })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Modes `1..=n`.
    pub fn first(n: usize) -> Self {
        Self {
            included: (1..=n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.included
    }

    pub fn len(&self) -> usize {
        self.included.len()
    }

    pub fn is_empty(&self) -> bool {
        self.included.is_empty()
    }

    /// Membership mask over 0-based positions of a grid with `cutoff` modes.
    pub fn mask(&self, cutoff: usize) -> Result<Vec<bool>> {
        let mut mask = vec![false; cutoff];
        for &i in &self.included {
            if i > cutoff {
                return Err(Error::invalid(
                    "modes",
                    format!("mode {i} exceeds grid cutoff {cutoff}"),
                ));
            }
            mask[i - 1] = true;
        }
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, theta: f64) -> Arc<ModeGrid> {
        Arc::new(ModeGrid::new(n, theta).unwrap())
    }

    #[test]
    fn grid_eigenvalues() {
        let g = ModeGrid::new(1, 1.0).unwrap();
        assert_eq!(g.eigenvalues(), &[PI * PI]);
        let g = ModeGrid::new(3, 2.0).unwrap();
        let expected = [2.0 * PI * PI, 8.0 * PI * PI, 18.0 * PI * PI];
        for (a, b) in g.eigenvalues().iter().zip(expected) {
            assert!((a - b).abs() <= 1e-14 * b);
        }
        let g = ModeGrid::new(2, 1.0).unwrap();
        assert_eq!(g.eigenvalues()[1] / g.eigenvalues()[0], 4.0);
        for w in ModeGrid::new(50, 0.3).unwrap().eigenvalues().windows(2) {
            assert!(w[0] > 0.0 && w[1] > w[0]);
        }
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(ModeGrid::new(0, 1.0).is_err());
        assert!(ModeGrid::new(4, 0.0).is_err());
        assert!(ModeGrid::new(4, -1.0).is_err());
        assert!(ModeGrid::new(4, f64::NAN).is_err());
    }

    #[test]
    fn scalar_norms() {
        let g = grid(2, 1.0);
        assert_eq!(norm_scalar(&[1.0, 0.0], 0.0, &g).unwrap(), 1.0);
        assert!((norm_scalar(&[1.0, 0.0], 0.5, &g).unwrap() - PI).abs() < 1e-14);
        let expected = (PI.powi(-2) + (2.0 * PI).powi(-2)).sqrt();
        assert!((norm_scalar(&[1.0, 1.0], -0.5, &g).unwrap() - expected).abs() < 1e-15);
        assert!(matches!(
            norm_scalar(&[1.0], 0.0, &g),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pair_norms() {
        let g = grid(3, 1.0);
        let p = PairState::unit(g.clone(), 1, false).unwrap();
        assert_eq!(p.norm_pair(0.0), 1.0);
        let v = PairState::unit(g.clone(), 1, true).unwrap();
        assert!((v.norm_pair(0.0) - 1.0 / PI).abs() < 1e-15);
        let both = p.add(&v).unwrap();
        assert!((both.norm_pair(1.0) - (PI * PI + 1.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn lambda_powers() {
        let g = grid(3, 1.0);
        let x = PairState::new(g.clone(), vec![1.0, -2.0, 0.5], vec![0.3, 0.1, 4.0]).unwrap();
        assert_eq!(x.apply_lambda_power(0.0), x);
        let p = PairState::unit(g.clone(), 1, false).unwrap().apply_lambda_power(2.0);
        assert!((p.pos()[0] - PI * PI).abs() < 1e-13);
        assert_eq!(&p.pos()[1..], &[0.0, 0.0]);
        let back = x.apply_lambda_power(1.0).apply_lambda_power(-1.0);
        for (a, b) in back.pos().iter().chain(back.vel()).zip(x.pos().iter().chain(x.vel())) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn projections() {
        let g = grid(3, 1.0);
        let x = PairState::new(g.clone(), vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]).unwrap();
        assert_eq!(x.project(&ModeSet::first(3)).unwrap(), x);
        assert_eq!(x.project(&ModeSet::empty()).unwrap(), PairState::zeros(g.clone()));
        let y = x.project(&ModeSet::new([3, 1]).unwrap()).unwrap();
        assert_eq!(y.pos(), &[1.0, 0.0, 3.0]);
        assert_eq!(y.vel(), &[4.0, 0.0, 6.0]);
        assert!(x.project(&ModeSet::new([4]).unwrap()).is_err());
    }

    #[test]
    fn mode_set_validation() {
        assert!(ModeSet::new([1, 1]).is_err());
        assert!(ModeSet::new([0, 2]).is_err());
        assert_eq!(ModeSet::new([5, 2, 3]).unwrap().indices(), &[2, 3, 5]);
    }

    #[test]
    fn state_validation() {
        let g = grid(2, 1.0);
        assert!(PairState::new(g.clone(), vec![1.0], vec![0.0, 0.0]).is_err());
        assert!(PairState::new(g.clone(), vec![f64::NAN, 0.0], vec![0.0, 0.0]).is_err());
        let other = grid(3, 1.0);
        assert!(PairState::zeros(g).sub(&PairState::zeros(other)).is_err());
    }
}
