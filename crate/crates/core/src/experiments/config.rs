//! Versioned experiment configuration with embedded desk defaults.

use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_sigma, default_orders};
use crate::error::{Error, Result};
use crate::optimizer::Variant;

pub const CONFIG_VERSION: u32 = 1;

/// The three parameter strategies: head-only training from a pretrained
/// backbone, full training from a pretrained start, or everything from
/// random initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    FinetuneFrozen,
    FinetuneFull,
    Scratch,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::FinetuneFrozen => "finetune-frozen",
            Strategy::FinetuneFull => "finetune-full",
            Strategy::Scratch => "scratch",
        }
    }

    pub fn needs_pretraining(&self) -> bool {
        !matches!(self, Strategy::Scratch)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetune-frozen" => Ok(Strategy::FinetuneFrozen),
            "finetune-full" => Ok(Strategy::FinetuneFull),
            "scratch" => Ok(Strategy::Scratch),
            other => Err(Error::InvalidConfig(format!("unknown strategy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub joints: usize,
    pub noise_level: f64,
    /// Held-out evaluation set size (generated separately).
    pub eval_n: usize,
    /// Disjoint pretraining set size for the finetune strategies.
    pub pretrain_n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    /// Coordinate-classification splitting factor.
    pub kappa: f64,
    pub smoothing_sigma_bins: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub eta: f64,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BlurConfig {
    pub kernel_size: usize,
    pub sigma: f64,
}

/// Full sweep configuration. JSON on disk, versioned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub version: u32,
    pub master_seed: u64,
    /// One run per seed per cell.
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub blur: BlurConfig,
    pub variants: Vec<Variant>,
    pub strategies: Vec<Strategy>,
    pub epsilon_grid: Vec<f64>,
    pub clip_grid: Vec<f64>,
    pub delta: f64,
    /// Projection dimension k.
    pub subspace_dim: usize,
    /// Basis refresh interval R in steps.
    pub refresh_interval: usize,
    pub eta: f64,
    pub warmup_frac: f64,
    pub steps: usize,
    /// Poisson sampling rate q.
    pub sample_rate: f64,
    /// Public subset size m used for basis estimation.
    pub public_set_size: usize,
    pub pretrain: PretrainConfig,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            master_seed: 42,
            seeds: (0..10).collect(),
            dataset: DatasetConfig {
                n: 2000,
                height: 32,
                width: 32,
                joints: 4,
                noise_level: 0.1,
                eval_n: 300,
                pretrain_n: 2000,
            },
            model: ModelConfig { hidden_dim: 64, kappa: 2.0, smoothing_sigma_bins: 2.0 },
            blur: BlurConfig { kernel_size: 9, sigma: 3.0 },
            variants: Variant::all().to_vec(),
            strategies: vec![Strategy::FinetuneFrozen],
            epsilon_grid: vec![0.2, 0.4, 0.6, 0.8],
            clip_grid: vec![0.01, 0.1, 1.0],
            delta: 4e-5,
            subspace_dim: 50,
            refresh_interval: 30,
            eta: 1.0,
            warmup_frac: 0.05,
            steps: 240,
            sample_rate: 0.034,
            public_set_size: 100,
            pretrain: PretrainConfig { steps: 800, eta: 1.5, sample_rate: 0.034 },
            output_dir: "results".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::InvalidConfig(format!(
                "config version {} unsupported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() || self.strategies.is_empty() {
            return Err(Error::InvalidConfig("variant and strategy lists must be nonempty".into()));
        }
        if self.epsilon_grid.is_empty() || self.clip_grid.is_empty() {
            return Err(Error::InvalidConfig("epsilon and clip grids must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list must be nonempty".into()));
        }
        if self.epsilon_grid.iter().any(|&e| e <= 0.0) {
            return Err(Error::InvalidConfig("epsilon values must be > 0".into()));
        }
        if self.clip_grid.iter().any(|&c| c <= 0.0) {
            return Err(Error::InvalidConfig("clip norms must be > 0".into()));
        }
        if !(0.0 < self.delta && self.delta < 1.0) {
            return Err(Error::InvalidConfig("delta must lie in (0, 1)".into()));
        }
        if !(0.0 < self.sample_rate && self.sample_rate <= 1.0) {
            return Err(Error::InvalidConfig("sample rate must lie in (0, 1]".into()));
        }
        if self.steps == 0 || self.refresh_interval == 0 {
            return Err(Error::InvalidConfig("steps and refresh interval must be >= 1".into()));
        }
        if self.public_set_size >= self.dataset.n {
            return Err(Error::InvalidConfig("public set must be smaller than the dataset".into()));
        }
        if self.dataset.eval_n == 0 {
            return Err(Error::InvalidConfig("eval set must be nonempty".into()));
        }
        if self.strategies.iter().any(Strategy::needs_pretraining)
            && (self.dataset.pretrain_n == 0 || self.pretrain.steps == 0)
        {
            return Err(Error::InvalidConfig(
                "finetune strategies need a pretraining set and steps".into(),
            ));
        }
        Ok(())
    }

    /// Calibrates sigma for every epsilon in the grid; infeasible budgets
    /// come back as None. Run before any training starts.
    pub fn calibrate_grid(&self) -> Result<Vec<(f64, Option<f64>)>> {
        let orders = default_orders();
        self.epsilon_grid
            .iter()
            .map(|&eps| {
                match calibrate_sigma(eps, self.delta, self.sample_rate, self.steps, &orders) {
                    Ok(sigma) => Ok((eps, Some(sigma))),
                    Err(Error::CalibrationInfeasible { .. }) => Ok((eps, None)),
                    Err(e) => Err(e),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_json();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn default_grids_match_the_benchmark_defaults() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.epsilon_grid, vec![0.2, 0.4, 0.6, 0.8]);
        assert_eq!(cfg.clip_grid, vec![0.01, 0.1, 1.0]);
        assert_eq!(cfg.delta, 4e-5);
        assert_eq!(cfg.subspace_dim, 50);
        assert_eq!(cfg.public_set_size, 100);
    }

    #[test]
    fn bad_version_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.version = 99;
        let text = cfg.to_json();
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn default_grid_is_calibratable() {
        let cfg = ExperimentConfig::default();
        for (eps, sigma) in cfg.calibrate_grid().unwrap() {
            let sigma = sigma.unwrap_or_else(|| panic!("epsilon {eps} should be feasible"));
            assert!(sigma > 0.3);
        }
    }
}
