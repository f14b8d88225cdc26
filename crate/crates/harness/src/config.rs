//! Experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sara_core::objectives::{BlobDataset, MlpObjective, NoiseSpec, Objective, QuadraticObjective};
use sara_core::optimizers::{HyperParams, LrSchedule, OptimizerKind};
use sara_core::subspace::SelectorSpec;

use crate::error::{HarnessError, Result};

/// Which gradient oracle to train on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// Seeded `½Σ‖A_l x_l − B_l‖²` with square `A_l` whose singular values are
    /// evenly spaced in `[s_min, s_max]`.
    Quadratic {
        shapes: Vec<(usize, usize)>,
        #[serde(default = "one")]
        s_min: f64,
        #[serde(default = "one")]
        s_max: f64,
        dataset_seed: u64,
    },
    /// Two-layer ReLU perceptron on Gaussian blobs with unit-variance
    /// clusters around centres drawn with standard deviation `spread`.
    Mlp {
        input: usize,
        hidden: usize,
        classes: usize,
        per_class: usize,
        batch_size: usize,
        #[serde(default = "default_spread")]
        spread: f64,
        dataset_seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_spread() -> f64 {
    2.0
}

fn default_cadence() -> u64 {
    200
}

fn default_delta_trials() -> usize {
    10_000
}

fn yes() -> bool {
    true
}

/// A built objective, keeping the concrete type for analytic constants.
pub enum BuiltObjective {
    Quadratic(QuadraticObjective),
    Mlp(MlpObjective),
}

impl BuiltObjective {
    pub fn as_dyn(&self) -> &dyn Objective {
        match self {
            BuiltObjective::Quadratic(q) => q,
            BuiltObjective::Mlp(m) => m,
        }
    }
}

impl ObjectiveSpec {
    pub fn build(&self, noise: &NoiseSpec) -> Result<BuiltObjective> {
        match self {
            ObjectiveSpec::Quadratic {
                shapes,
                s_min,
                s_max,
                dataset_seed,
            } => {
                let noise = if noise.sigmas.is_empty() {
                    NoiseSpec::uniform(shapes.len(), 0.0)?
                } else {
                    noise.clone()
                };
                Ok(BuiltObjective::Quadratic(QuadraticObjective::seeded(
                    shapes,
                    *s_min,
                    *s_max,
                    noise,
                    *dataset_seed,
                )?))
            }
            ObjectiveSpec::Mlp {
                input,
                hidden,
                classes,
                per_class,
                batch_size,
                spread,
                dataset_seed,
            } => {
                if !noise.sigmas.is_empty() {
                    return Err(HarnessError::Config(
                        "the MLP objective draws its noise from mini-batches; leave `noise` empty".into(),
                    ));
                }
                let data = BlobDataset::generate(*input, *classes, *per_class, *spread, *dataset_seed)?;
                Ok(BuiltObjective::Mlp(MlpObjective::with_dataset(
                    *hidden,
                    data,
                    *batch_size,
                    *dataset_seed,
                )?))
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ObjectiveSpec::Quadratic { .. } => "quadratic",
            ObjectiveSpec::Mlp { .. } => "mlp",
        }
    }
}

/// Inputs of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub objective: ObjectiveSpec,
    pub optimizer: OptimizerKind,
    pub selector: SelectorSpec,
    #[serde(default)]
    pub hyper: HyperParams,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub total_steps: u64,
    #[serde(default = "default_cadence")]
    pub metric_cadence: u64,
    #[serde(default)]
    pub anchor_step: Option<u64>,
    #[serde(default)]
    pub checkpoint_steps: Vec<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    /// Replace `η`, `β₁` and `τ` by the MSGD-SARA closed-form schedule
    /// (quadratic objective and `msgd` only).
    #[serde(default)]
    pub theory_schedule: bool,
    /// Monte Carlo draws for δ when a layer has more than 12 rows.
    #[serde(default = "default_delta_trials")]
    pub delta_trials: usize,
    /// Log the overlap of dominant subspaces of raw stochastic gradients at
    /// the metric cadence.
    #[serde(default = "yes")]
    pub gradient_overlap: bool,
    #[serde(default)]
    pub deterministic: bool,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(HarnessError::io(path))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let parsed = match ext {
            "json" => serde_json::from_str(&text).map_err(|e| e.to_string()),
            "toml" => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => toml::from_str(&text)
                .map_err(|e| e.to_string())
                .or_else(|_| serde_json::from_str(&text).map_err(|e| e.to_string())),
        };
        parsed.map_err(|message| HarnessError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Checks the config against the layer shapes it implies.
    pub fn validate(&self, shapes: &[(usize, usize)]) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.metric_cadence == 0 {
            return bad("metric_cadence must be >= 1".into());
        }
        if let Some(s) = self.checkpoint_steps.iter().find(|&&s| s > self.total_steps) {
            return bad(format!("checkpoint step {s} exceeds total_steps {}", self.total_steps));
        }
        if self.checkpoint_steps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoint_steps must be strictly increasing".into());
        }
        if self.selector.refresh_period == 0 {
            return bad("selector.refresh_period must be >= 1".into());
        }
        if self.optimizer.is_low_rank() {
            for (l, &(m, n)) in shapes.iter().enumerate() {
                if self.selector.rank == 0 || self.selector.rank > m.min(n) {
                    return bad(format!("rank {} not in [1, {}] for layer {l}", self.selector.rank, m.min(n)));
                }
            }
        }
        if let Some(a) = self.anchor_step {
            if !self.optimizer.is_low_rank() {
                return bad("anchor_step requires a low-rank optimizer".into());
            }
            if !self.theory_schedule && (a % self.selector.refresh_period != 0 || a >= self.total_steps) {
                return bad(format!(
                    "anchor_step {a} must be a refresh step below total_steps {}",
                    self.total_steps
                ));
            }
        }
        if self.theory_schedule {
            if !matches!(self.objective, ObjectiveSpec::Quadratic { .. }) {
                return bad("theory_schedule needs analytic L, Delta and sigma^2 (quadratic objective)".into());
            }
            if self.optimizer != OptimizerKind::Msgd {
                return bad("theory_schedule applies to the msgd optimizer".into());
            }
        }
        if let ObjectiveSpec::Quadratic { shapes: s, .. } = &self.objective {
            if !self.noise.sigmas.is_empty() && self.noise.sigmas.len() != s.len() {
                return bad(format!("noise has {} radii for {} layers", self.noise.sigmas.len(), s.len()));
            }
        }
        if self.delta_trials == 0 {
            return bad("delta_trials must be >= 1".into());
        }
        Ok(())
    }

    /// SHA-256 over the config's JSON form with the output directory cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        hex_digest(&serde_json::to_vec(&c).unwrap_or_default())
    }

    /// Identifies the objective (spec and noise) independent of optimizer and
    /// master seed; runs with different ids are not comparable.
    pub fn objective_id(&self) -> String {
        let v = serde_json::json!({ "objective": self.objective, "noise": self.noise });
        hex_digest(v.to_string().as_bytes())[..16].to_string()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("runs").join(&self.hash()[..12]))
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
