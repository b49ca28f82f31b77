//! Spectral Galerkin and exponential Euler simulation of the stochastic wave
//! equation with affine multiplicative noise on `(0, 1)` with Dirichlet
//! boundary conditions, plus Monte Carlo tooling for measuring strong, weak
//! and spatial convergence rates.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod noise;
pub mod props;
pub mod scheme;
pub mod spectral;
pub mod wave;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use harness::{
    eval_functional, fit_rate, galerkin_sweep, moment_sweep, strong_error_sweep, weak_error_sweep, Functional,
    FunctionalKind, GalerkinReport, MomentReport, RateFit, RateReport, SweepSpec,
};
pub use noise::{apply_diffusion, fast_multiply, sample_increment, sine_expand_product, NoiseModel, WienerIncrement};
pub use props::{
    calibrate_noise_constants, check_schatten_hoelder, multiplier_hs_norm, schatten_norm, DenseOperator,
    NoiseCalibration,
};
pub use scheme::{galerkin_pair, simulate_coupled, simulate_path, step_once, SimConfig, StepPlan};
pub use spectral::{apply_lambda_power, build_grid, norm_pair, norm_scalar, project, ModeGrid, ModeSet, PairState};
pub use wave::{group_defect, lambda_diff_opnorm, propagate, scalar_sup, GroupCache};
