use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UserError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    /// Sharpness of the smoothing profile.
    pub sharpness: f64,
    /// Sample spacing; by ambient dimension when absent (0.05 up to 2, else 0.1).
    pub spacing: Option<f64>,
    /// Conormal ray length of the Lagrangian model.
    pub fiber_length: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self { sharpness: 1.0, spacing: None, fiber_length: 2.0 }
    }
}

impl BuildConfig {
    pub fn spacing_for(&self, dim: usize) -> f64 {
        self.spacing.unwrap_or(if dim <= 2 { 0.05 } else { 0.1 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub box_half: f64,
    /// Zero scan spacing; 0.05, 0.25, 0.5 for 1, 2, 3+ pairs when absent.
    pub grid: Option<f64>,
    /// Arc length between skeleton samples.
    pub spacing: f64,
    pub horizon: f64,
    pub verify_points: usize,
    pub lyapunov_delta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { box_half: 3.0, grid: None, spacing: 0.05, horizon: 60.0, verify_points: 1000, lyapunov_delta: 1e-3 }
    }
}

impl ModelConfig {
    pub fn grid_for(&self, pairs: usize) -> f64 {
        self.grid.unwrap_or(match pairs {
            0 | 1 => 0.05,
            2 => 0.25,
            _ => 0.5,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CuspConfig {
    pub epsilon: f64,
    /// Blend half-width; `epsilon / 8` when absent.
    pub width: Option<f64>,
    pub u_half: f64,
    pub q_dim: usize,
    pub samples: usize,
    /// Principal angles below this count as tangency.
    pub angle_tol: f64,
}

impl Default for CuspConfig {
    fn default() -> Self {
        Self { epsilon: 0.1, width: None, u_half: 1.0, q_dim: 1, samples: 10_000, angle_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub build: BuildConfig,
    pub model: ModelConfig,
    pub cusp: CuspConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(UserError::wrap)?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| UserError::msg(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("build.sharpness", self.build.sharpness),
            ("build.fiber_length", self.build.fiber_length),
            ("model.box_half", self.model.box_half),
            ("model.spacing", self.model.spacing),
            ("model.horizon", self.model.horizon),
            ("model.lyapunov_delta", self.model.lyapunov_delta),
            ("cusp.epsilon", self.cusp.epsilon),
            ("cusp.u_half", self.cusp.u_half),
            ("cusp.angle_tol", self.cusp.angle_tol),
        ];
        let optional =
            [("build.spacing", self.build.spacing), ("model.grid", self.model.grid), ("cusp.width", self.cusp.width)];
        for (name, v) in positive.into_iter().chain(optional.into_iter().filter_map(|(n, v)| v.map(|v| (n, v)))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(UserError::msg(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON of `value`.
pub fn digest<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Wrapper written around every JSON artifact.
#[derive(Debug, Serialize)]
pub struct Artifact<'a, T: Serialize> {
    pub command: &'a str,
    pub seed: u64,
    pub config_digest: String,
    pub config: &'a RunConfig,
    /// Digest of the input file, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    pub result: T,
}

/// Run parameters that enter the digest: the command line meaning plus the config.
#[derive(Serialize)]
struct Provenance<'a, A: Serialize> {
    command: &'a str,
    args: &'a A,
    config: &'a RunConfig,
}

pub fn artifact<'a, T: Serialize, A: Serialize>(
    command: &'a str,
    args: &A,
    config: &'a RunConfig,
    input: Option<&[u8]>,
    result: T,
) -> Artifact<'a, T> {
    Artifact {
        command,
        seed: config.seed,
        config_digest: digest(&Provenance { command, args, config }),
        config,
        input_digest: input.map(|b| hex::encode(Sha256::digest(b))),
        result,
    }
}
