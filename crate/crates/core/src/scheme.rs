//! Exponential Euler stepping of the Galerkin-truncated equation
//!
//! ```text
//! Y_{n+1} = e^{hA} ( Y_n + h P_I F(Y_n) + P_I B(Y_n) (W_{t_{n+1}} - W_{t_n}) )
//! ```
//!
//! All coupled runs draw their Brownian increments at the finest resolution;
//! coarser tracks consume left-to-right sums of consecutive fine increments.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::noise::{FastProduct, NoiseModel, NoiseStream, ProductKernel, ProductScratch, WienerIncrement};
use crate::spectral::{ModeGrid, ModeSet, PairState};
use crate::wave::GroupCache;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPlan {
    horizon: f64,
    num_steps: usize,
    step: f64,
}

impl StepPlan {
    pub fn new(horizon: f64, num_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
        }
        if num_steps == 0 {
            return Err(Error::invalid("num_steps", "must be at least 1"));
        }
        Ok(Self {
            horizon,
            num_steps,
            step: horizon / num_steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Same horizon with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.horizon, self.num_steps * factor)
    }

    /// `max({0, h, 2h, ...} ∩ [0, t])`; a point within half an ulp-scale
    /// tolerance of a grid point counts as that grid point.
    pub fn floor_to_grid(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let ratio = t / self.step;
        let nearest = ratio.round();
        let k = if (ratio - nearest).abs() <= 4.0 * f64::EPSILON * nearest.max(1.0) {
            nearest
        } else {
            ratio.floor()
        };
        k * self.step
    }
}

/// Diagonal linear drift `F(v, w) = (d_pos v, d_vel w)` mode by mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalDrift {
    pub pos: Vec<f64>,
    pub vel: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ProductPath {
    #[default]
    Exact,
    Fast { dealias_factor: f64 },
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub grid: Arc<ModeGrid>,
    pub plan: StepPlan,
    pub noise: NoiseModel,
    pub initial: PairState,
    pub drift: Option<DiagonalDrift>,
    pub product: ProductPath,
}

impl SimConfig {
    pub fn new(grid: Arc<ModeGrid>, plan: StepPlan, noise: NoiseModel, initial: PairState) -> Result<Self> {
        let cfg = Self {
            grid,
            plan,
            noise,
            initial,
            drift: None,
            product: ProductPath::Exact,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_drift(mut self, drift: DiagonalDrift) -> Result<Self> {
        self.drift = Some(drift);
        self.validate()?;
        Ok(self)
    }

    pub fn with_product(mut self, product: ProductPath) -> Result<Self> {
        self.product = product;
        self.validate()?;
        Ok(self)
    }

    pub fn with_steps(&self, num_steps: usize) -> Result<Self> {
        let mut cfg = self.clone();
        cfg.plan = StepPlan::new(self.plan.horizon(), num_steps)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if **self.initial.grid() != *self.grid {
            return Err(Error::GridMismatch);
        }
        if self.noise.noise_cutoff > self.grid.cutoff() {
            return Err(Error::invalid(
                "noise_cutoff",
                format!("{} exceeds grid cutoff {}", self.noise.noise_cutoff, self.grid.cutoff()),
            ));
        }
        if let Some(d) = &self.drift {
            let n = self.grid.cutoff();
            if d.pos.len() != n || d.vel.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: d.pos.len().min(d.vel.len()),
                });
            }
            if !d.pos.iter().chain(&d.vel).all(|x| x.is_finite()) {
                return Err(Error::invalid("drift", "coefficients must be finite"));
            }
        }
        if let ProductPath::Fast { dealias_factor } = self.product {
            if !(dealias_factor >= 2.0) {
                return Err(Error::invalid("dealias_factor", "must be at least 2"));
            }
        }
        Ok(())
    }
}

enum Multiplier {
    Exact(ProductKernel, ProductScratch),
    Fast(FastProduct),
}

impl Multiplier {
    fn new(cfg: &SimConfig) -> Self {
        let n = cfg.grid.cutoff();
        let k = cfg.noise.noise_cutoff;
        match cfg.product {
            ProductPath::Exact => Multiplier::Exact(ProductKernel::new(n, k, n), ProductScratch::default()),
            ProductPath::Fast { dealias_factor } => Multiplier::Fast(
                FastProduct::new(n, k, n, dealias_factor).expect("validated dealias factor"),
            ),
        }
    }

    fn apply(&mut self, v: &[f64], g: &[f64], out: &mut [f64]) {
        match self {
            Multiplier::Exact(kernel, scratch) => kernel.apply(v, g, out, scratch),
            Multiplier::Fast(fast) => out.copy_from_slice(&fast.apply(v, g)),
        }
    }
}

/// Reusable buffers for stepping one configuration.
struct Stepper<'a> {
    cfg: &'a SimConfig,
    mult: Multiplier,
    prod: Vec<f64>,
    dpos: Vec<f64>,
    dvel: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let n = cfg.grid.cutoff();
        Self {
            cfg,
            mult: Multiplier::new(cfg),
            prod: vec![0.0; n],
            dpos: vec![0.0; n],
            dvel: vec![0.0; n],
        }
    }

    /// One exponential Euler step in place with Brownian increment `betas`.
    fn advance(&mut self, pos: &mut [f64], vel: &mut [f64], betas: &[f64], h: f64, cache: &GroupCache, mask: Option<&[bool]>) {
        let noise = &self.cfg.noise;
        self.dpos.iter_mut().for_each(|x| *x = 0.0);
        self.dvel.iter_mut().for_each(|x| *x = 0.0);
        if let Some(d) = &self.cfg.drift {
            for i in 0..pos.len() {
                self.dpos[i] = h * d.pos[i] * pos[i];
                self.dvel[i] = h * d.vel[i] * vel[i];
            }
        }
        if noise.b1 != 0.0 {
            self.mult.apply(pos, betas, &mut self.prod);
            for (dv, p) in self.dvel.iter_mut().zip(&self.prod) {
                *dv += noise.b1 * p;
            }
        }
        if noise.b0 != 0.0 {
            for (dv, b) in self.dvel.iter_mut().zip(betas) {
                *dv += noise.b0 * b;
            }
        }
        match mask {
            Some(mask) => {
                for i in 0..pos.len() {
                    if mask[i] {
                        pos[i] += self.dpos[i];
                        vel[i] += self.dvel[i];
                    }
                }
            }
            None => {
                for i in 0..pos.len() {
                    pos[i] += self.dpos[i];
                    vel[i] += self.dvel[i];
                }
            }
        }
        cache.apply_in_place(pos, vel);
    }
}

fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-14 * a.abs().max(b.abs())
}

/// `e^{hA}(x + h F(x) + B(x) dW)` using a cache built for `(grid, h)`.
pub fn step_once(x: &PairState, cache: &GroupCache, incr: &WienerIncrement, cfg: &SimConfig) -> Result<PairState> {
    let h = cfg.plan.step();
    if !same_step(cache.time(), h) {
        return Err(Error::StepMismatch {
            what: "group cache",
            expected: h,
            found: cache.time(),
        });
    }
    if !same_step(incr.step, h) {
        return Err(Error::StepMismatch {
            what: "wiener increment",
            expected: h,
            found: incr.step,
        });
    }
    if incr.betas.len() != cfg.noise.noise_cutoff {
        return Err(Error::LengthMismatch {
            expected: cfg.noise.noise_cutoff,
            found: incr.betas.len(),
        });
    }
    if **x.grid() != *cfg.grid || **cache.grid() != *cfg.grid {
        return Err(Error::GridMismatch);
    }
    let mut out = x.clone();
    Stepper::new(cfg).advance(&mut out.pos, &mut out.vel, &incr.betas, h, cache, None);
    Ok(out)
}

/// One coupled trajectory inside a [`Tracks`] run.
#[derive(Debug, Clone)]
pub struct TrackSpec {
    /// Number of fine steps per step of this track.
    pub ratio: usize,
    /// Galerkin projection; `None` keeps every mode.
    pub modes: Option<ModeSet>,
}

/// Several trajectories driven by the same Brownian path, sampled at the
/// finest resolution `plan.num_steps()`.
pub struct Tracks<'a> {
    cfg: &'a SimConfig,
    specs: Vec<TrackSpec>,
    masks: Vec<Option<Vec<bool>>>,
    caches: Vec<GroupCache>,
}

impl<'a> Tracks<'a> {
    /// `cfg.plan` is the fine plan; every ratio must divide its step count.
    pub fn new(cfg: &'a SimConfig, specs: Vec<TrackSpec>) -> Result<Self> {
        cfg.validate()?;
        let fine = cfg.plan.num_steps();
        let mut masks = Vec::with_capacity(specs.len());
        let mut caches = Vec::with_capacity(specs.len());
        for spec in &specs {
            if spec.ratio == 0 || !fine.is_multiple_of(spec.ratio) {
                return Err(Error::invalid(
                    "ratio",
                    format!("{} does not divide the fine step count {fine}", spec.ratio),
                ));
            }
            masks.push(match &spec.modes {
                Some(set) => Some(set.mask(cfg.grid.cutoff())?),
                None => None,
            });
            let coarse = StepPlan::new(cfg.plan.horizon(), fine / spec.ratio)?;
            caches.push(GroupCache::new(cfg.grid.clone(), coarse.step()));
        }
        Ok(Self {
            cfg,
            specs,
            masks,
            caches,
        })
    }

    /// Endpoints at `T` of every track, in spec order.
    pub fn run(&self, path: u64, seed: u64) -> Result<Vec<PairState>> {
        let cfg = self.cfg;
        let n = cfg.grid.cutoff();
        let k = cfg.noise.noise_cutoff;
        let fine = cfg.plan.num_steps();
        let sd = cfg.plan.step().sqrt();

        let mut stepper = Stepper::new(cfg);
        let mut states: Vec<(Vec<f64>, Vec<f64>)> = self
            .masks
            .iter()
            .map(|mask| {
                let mut s = cfg.initial.clone();
                if let Some(m) = mask {
                    s.project_in_place(m);
                }
                s.into_parts()
            })
            .collect();
        let mut sums = vec![vec![0.0; k]; self.specs.len()];
        let mut betas = vec![0.0; k];
        let mut stream = NoiseStream::new(seed, path);

        for step in 0..fine {
            if !cfg.noise.is_silent() {
                stream.standard_normals(step as u64, &mut betas);
                betas.iter_mut().for_each(|b| *b *= sd);
            }
            for (t, spec) in self.specs.iter().enumerate() {
                let (pos, vel) = &mut states[t];
                let cache = &self.caches[t];
                let mask = self.masks[t].as_deref();
                if spec.ratio == 1 {
                    stepper.advance(pos, vel, &betas, cache.time(), cache, mask);
                } else {
                    for (s, b) in sums[t].iter_mut().zip(&betas) {
                        *s += b;
                    }
                    if (step + 1) % spec.ratio == 0 {
                        stepper.advance(pos, vel, &sums[t], cache.time(), cache, mask);
                        sums[t].iter_mut().for_each(|s| *s = 0.0);
                    }
                }
                if !pos.iter().chain(vel.iter()).all(|x| x.is_finite()) {
                    return Err(Error::NonFinite { path, step });
                }
            }
        }
        states
            .into_iter()
            .map(|(pos, vel)| {
                debug_assert_eq!(pos.len(), n);
                PairState::new(cfg.grid.clone(), pos, vel)
            })
            .collect()
    }
}

/// `Y_N` at time `T` for one path; a pure function of `(cfg, path, seed)`.
pub fn simulate_path(cfg: &SimConfig, path_index: u64, seed: u64) -> Result<PairState> {
    let tracks = Tracks::new(cfg, vec![TrackSpec { ratio: 1, modes: None }])?;
    Ok(tracks.run(path_index, seed)?.pop().expect("one track"))
}

/// `(coarse, fine)` endpoints on a shared Brownian path; the fine level has
/// `refine` times as many steps and coarse increments are sums of fine ones.
pub fn simulate_coupled(cfg_coarse: &SimConfig, refine: usize, path_index: u64, seed: u64) -> Result<(PairState, PairState)> {
    if refine < 2 {
        return Err(Error::invalid("refine", "coupling needs a refinement factor of at least 2"));
    }
    let mut fine_cfg = cfg_coarse.clone();
    fine_cfg.plan = cfg_coarse.plan.refined(refine)?;
    let tracks = Tracks::new(
        &fine_cfg,
        vec![
            TrackSpec { ratio: refine, modes: None },
            TrackSpec { ratio: 1, modes: None },
        ],
    )?;
    let mut out = tracks.run(path_index, seed)?;
    let fine = out.pop().expect("two tracks");
    let coarse = out.pop().expect("two tracks");
    Ok((coarse, fine))
}

/// `(full, projected)` endpoints on a shared Wiener realisation.
pub fn galerkin_pair(cfg: &SimConfig, sub: &ModeSet, path_index: u64, seed: u64) -> Result<(PairState, PairState)> {
    let tracks = Tracks::new(
        cfg,
        vec![
            TrackSpec { ratio: 1, modes: None },
            TrackSpec { ratio: 1, modes: Some(sub.clone()) },
        ],
    )?;
    let mut out = tracks.run(path_index, seed)?;
    let projected = out.pop().expect("two tracks");
    let full = out.pop().expect("two tracks");
    Ok((full, projected))
}

/// Smooth deterministic initial state `pos_n = n^{-pos_decay}`,
/// `vel_n = n^{-vel_decay}`, scaled to unit `H_0` norm.
pub fn smooth_initial(grid: Arc<ModeGrid>, pos_decay: f64, vel_decay: f64) -> PairState {
    let n = grid.cutoff();
    let pos = (1..=n).map(|k| (k as f64).powf(-pos_decay)).collect();
    let vel = (1..=n).map(|k| (k as f64).powf(-vel_decay)).collect();
    let raw = PairState::new(grid, pos, vel).expect("finite by construction");
    let norm = raw.norm_pair(0.0);
    raw.scale(1.0 / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::sample_increment;
    use crate::wave::propagate;

    fn config(n: usize, steps: usize, b0: f64, b1: f64) -> SimConfig {
        let grid = Arc::new(ModeGrid::new(n, 1.0).unwrap());
        let xi = smooth_initial(grid.clone(), 3.0, 2.0);
        SimConfig::new(grid, StepPlan::new(1.0, steps).unwrap(), NoiseModel::new(b0, b1, n).unwrap(), xi).unwrap()
    }

    fn max_diff(a: &PairState, b: &PairState) -> f64 {
        a.sub(b).unwrap().norm_pair(0.0)
    }

    #[test]
    fn floor_to_grid() {
        let plan = StepPlan::new(1.0, 10).unwrap();
        assert_eq!(plan.floor_to_grid(0.0), 0.0);
        assert_eq!(plan.floor_to_grid(0.35), 3.0 * plan.step());
        // 0.3 / 0.1 is 2.9999999999999996 in floating point
        assert_eq!(plan.floor_to_grid(0.3), 3.0 * plan.step());
        assert_eq!(plan.floor_to_grid(1.0), 1.0);
        let p = StepPlan::new(3.0, 7).unwrap();
        assert!((p.step() * 7.0 - 3.0).abs() <= 1e-14 * 3.0);
        assert!(StepPlan::new(0.0, 4).is_err());
        assert!(StepPlan::new(1.0, 0).is_err());
    }

    #[test]
    fn silent_step_is_pure_group() {
        let cfg = config(8, 4, 0.0, 0.0);
        let h = cfg.plan.step();
        let cache = GroupCache::new(cfg.grid.clone(), h);
        let incr = sample_increment(&mut NoiseStream::new(1, 0), 0, 8, h).unwrap();
        let y = step_once(&cfg.initial, &cache, &incr, &cfg).unwrap();
        assert!(max_diff(&y, &propagate(&cfg.initial, h)) < 1e-15);
        assert!(max_diff(&propagate(&y, -h), &cfg.initial) < 1e-11);
    }

    #[test]
    fn additive_noise_from_rest() {
        let mut cfg = config(6, 4, 1.0, 0.0);
        cfg.initial = PairState::zeros(cfg.grid.clone());
        let h = cfg.plan.step();
        let cache = GroupCache::new(cfg.grid.clone(), h);
        let incr = sample_increment(&mut NoiseStream::new(3, 0), 0, 6, h).unwrap();
        let y = step_once(&cfg.initial, &cache, &incr, &cfg).unwrap();
        let expect = propagate(&PairState::new(cfg.grid.clone(), vec![0.0; 6], incr.betas.clone()).unwrap(), h);
        assert!(max_diff(&y, &expect) < 1e-15);
    }

    #[test]
    fn step_mismatch_is_rejected() {
        let cfg = config(4, 4, 0.5, 1.0);
        let h = cfg.plan.step();
        let wrong = GroupCache::new(cfg.grid.clone(), 2.0 * h);
        let incr = sample_increment(&mut NoiseStream::new(1, 0), 0, 4, h).unwrap();
        assert!(matches!(step_once(&cfg.initial, &wrong, &incr, &cfg), Err(Error::StepMismatch { .. })));
        let cache = GroupCache::new(cfg.grid.clone(), h);
        let bad = sample_increment(&mut NoiseStream::new(1, 0), 0, 4, h / 2.0).unwrap();
        assert!(matches!(step_once(&cfg.initial, &cache, &bad, &cfg), Err(Error::StepMismatch { .. })));
    }

    #[test]
    fn single_step_path_unrolls() {
        let cfg = config(8, 1, 0.5, 1.0);
        let h = cfg.plan.step();
        let cache = GroupCache::new(cfg.grid.clone(), h);
        let incr = sample_increment(&mut NoiseStream::new(9, 4), 0, 8, h).unwrap();
        let manual = step_once(&cfg.initial, &cache, &incr, &cfg).unwrap();
        assert_eq!(simulate_path(&cfg, 4, 9).unwrap(), manual);
    }

    #[test]
    fn silent_path_is_exact_wave() {
        for steps in [1, 3, 64] {
            let cfg = config(16, steps, 0.0, 0.0);
            let y = simulate_path(&cfg, 0, 0).unwrap();
            assert!(max_diff(&y, &propagate(&cfg.initial, 1.0)) < 1e-10);
        }
    }

    #[test]
    fn coupled_levels() {
        let cfg = config(8, 4, 0.0, 0.0);
        let (c, f) = simulate_coupled(&cfg, 4, 0, 0).unwrap();
        let exact = propagate(&cfg.initial, 1.0);
        assert!(max_diff(&c, &exact) < 1e-10 && max_diff(&f, &exact) < 1e-10);
        assert!(simulate_coupled(&cfg, 1, 0, 0).is_err());

        // fine endpoint is the plain fine simulation, bit for bit
        let cfg = config(8, 4, 0.5, 1.0);
        let (_, fine) = simulate_coupled(&cfg, 3, 2, 17).unwrap();
        assert_eq!(fine, simulate_path(&cfg.with_steps(12).unwrap(), 2, 17).unwrap());
    }

    #[test]
    fn coarse_increment_is_sum_of_fine() {
        // one coarse step of a linear additive model: coarse endpoint = e^{hA}(xi + sum of fine betas)
        let mut cfg = config(4, 1, 1.0, 0.0);
        cfg.initial = PairState::zeros(cfg.grid.clone());
        let (coarse, _) = simulate_coupled(&cfg, 3, 5, 21).unwrap();
        let fine_h = 1.0 / 3.0;
        let mut stream = NoiseStream::new(21, 5);
        let mut sum = vec![0.0; 4];
        for step in 0..3 {
            let inc = sample_increment(&mut stream, step, 4, fine_h).unwrap();
            for (s, b) in sum.iter_mut().zip(&inc.betas) {
                *s += b;
            }
        }
        let expect = propagate(&PairState::new(cfg.grid.clone(), vec![0.0; 4], sum).unwrap(), 1.0);
        assert_eq!(coarse, expect);
    }

    #[test]
    fn galerkin_pair_edges() {
        let cfg = config(8, 8, 0.5, 1.0);
        let (full, sub) = galerkin_pair(&cfg, &ModeSet::first(8), 1, 2).unwrap();
        assert_eq!(full, sub);
        let (_, sub) = galerkin_pair(&cfg, &ModeSet::empty(), 1, 2).unwrap();
        assert_eq!(sub, PairState::zeros(cfg.grid.clone()));
    }

    #[test]
    fn drift_enters_once_per_step() {
        let cfg = config(4, 1, 0.0, 0.0)
            .with_drift(DiagonalDrift {
                pos: vec![0.5; 4],
                vel: vec![-1.0; 4],
            })
            .unwrap();
        let y = simulate_path(&cfg, 0, 0).unwrap();
        let x = &cfg.initial;
        let pre = PairState::new(
            cfg.grid.clone(),
            x.pos().iter().map(|p| p * 1.5).collect(),
            x.vel().iter().map(|v| v * 0.0).collect(),
        )
        .unwrap();
        assert!(max_diff(&y, &propagate(&pre, 1.0)) < 1e-14);
        assert!(config(4, 1, 0.0, 0.0)
            .with_drift(DiagonalDrift { pos: vec![0.0; 3], vel: vec![0.0; 4] })
            .is_err());
    }

    #[test]
    fn blowup_is_reported() {
        let cfg = config(4, 4, 0.0, 0.0)
            .with_drift(DiagonalDrift {
                pos: vec![1e300; 4],
                vel: vec![1e300; 4],
            })
            .unwrap();
        assert!(matches!(simulate_path(&cfg, 3, 0), Err(Error::NonFinite { path: 3, .. })));
    }

    #[test]
    fn fast_product_path_agrees() {
        let cfg = config(16, 8, 0.5, 1.0);
        let fast = cfg.clone().with_product(ProductPath::Fast { dealias_factor: 2.0 }).unwrap();
        let a = simulate_path(&cfg, 0, 5).unwrap();
        let b = simulate_path(&fast, 0, 5).unwrap();
        assert!(max_diff(&a, &b) < 1e-12 * a.norm_pair(0.0));
    }
}
