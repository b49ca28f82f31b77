//! JSON experiment configuration shared by the command-line front end and the
//! Python bindings.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{Functional, SweepSpec};
use crate::noise::NoiseModel;
use crate::scheme::{smooth_initial, SimConfig, StepPlan};
use crate::spectral::ModeGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub pos_decay: f64,
    pub vel_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    /// `"sin-linear"` or `"exp-neg-sq"`.
    pub kind: String,
    pub ell_decay: f64,
    pub shift: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub modes: usize,
    pub noise_modes: usize,
    pub b0: f64,
    pub b1: f64,
    pub xi: InitialSpec,
    pub steps: Vec<usize>,
    pub ref_refine: usize,
    pub paths: usize,
    pub functional: FunctionalSpec,
    pub epsilon: f64,
    pub seed: u64,
    pub threads: usize,
    pub out: String,
}

fn bad(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive and finite, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be finite, got {v}")))
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            horizon: 1.0,
            modes: 128,
            noise_modes: 128,
            b0: 0.5,
            b1: 1.0,
            xi: InitialSpec {
                pos_decay: 3.0,
                vel_decay: 2.0,
            },
            steps: vec![16, 32, 64, 128, 256],
            ref_refine: 8,
            paths: 4000,
            functional: FunctionalSpec {
                kind: "sin-linear".into(),
                ell_decay: 2.0,
                shift: 0.0,
                scale: 1.0,
            },
            epsilon: 0.5,
            seed: 20240601,
            threads: 0,
            out: "out.csv".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad(&json_field(&e.to_string()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(compact.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        positive("theta", self.theta)?;
        positive("T", self.horizon)?;
        if self.modes == 0 {
            return Err(bad("modes", "must be at least 1"));
        }
        if self.noise_modes == 0 || self.noise_modes > self.modes {
            return Err(bad("noise_modes", format!("must lie in 1..={}", self.modes)));
        }
        finite("b0", self.b0)?;
        finite("b1", self.b1)?;
        finite("xi.pos_decay", self.xi.pos_decay)?;
        finite("xi.vel_decay", self.xi.vel_decay)?;
        if self.steps.len() < 3 {
            return Err(bad("steps", "need at least 3 step counts for a rate fit"));
        }
        if self.steps.contains(&0) || self.steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(bad("steps", "must be positive and strictly increasing"));
        }
        if self.ref_refine == 0 {
            return Err(bad("ref_refine", "must be at least 1"));
        }
        let fine = self.ref_refine * self.steps[self.steps.len() - 1];
        if let Some(n) = self.steps.iter().find(|&&n| !fine.is_multiple_of(n)) {
            return Err(bad("steps", format!("{n} does not divide the reference count {fine}")));
        }
        if self.paths == 0 {
            return Err(bad("paths", "must be at least 1"));
        }
        match self.functional.kind.as_str() {
            "sin-linear" | "exp-neg-sq" => {}
            other => return Err(bad("functional.kind", format!("unknown kind {other:?}"))),
        }
        finite("functional.ell_decay", self.functional.ell_decay)?;
        finite("functional.shift", self.functional.shift)?;
        positive("functional.scale", self.functional.scale)?;
        if !(self.epsilon > 0.0 && self.epsilon <= 2.0 / 3.0) {
            return Err(bad("epsilon", format!("must lie in (0, 2/3], got {}", self.epsilon)));
        }
        if self.out.is_empty() {
            return Err(bad("out", "must not be empty"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<ModeGrid>> {
        Ok(Arc::new(ModeGrid::new(self.modes, self.theta)?))
    }

    /// Simulation setup at the coarsest step count.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let grid = self.grid()?;
        let xi = smooth_initial(grid.clone(), self.xi.pos_decay, self.xi.vel_decay);
        SimConfig::new(
            grid,
            StepPlan::new(self.horizon, self.steps[0])?,
            NoiseModel::new(self.b0, self.b1, self.noise_modes)?,
            xi,
        )
    }

    pub fn functional(&self, grid: Arc<ModeGrid>) -> Functional {
        match self.functional.kind.as_str() {
            "exp-neg-sq" => Functional::exp_neg_sq(grid, self.functional.scale),
            _ => Functional::sin_linear(
                Functional::smooth_direction(grid, self.functional.ell_decay),
                self.functional.shift,
            ),
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            step_counts: self.steps.clone(),
            ref_refine: self.ref_refine,
            num_paths: self.paths,
            seed: self.seed,
            threads: self.threads,
        }
    }
}

/// Best-effort field name from a serde error message.
fn json_field(msg: &str) -> String {
    for marker in ["unknown field `", "missing field `"] {
        if let Some(i) = msg.find(marker) {
            let rest = &msg[i + marker.len()..];
            if let Some(j) = rest.find('`') {
                return rest[..j].to_string();
            }
        }
    }
    "config".to_string()
}
