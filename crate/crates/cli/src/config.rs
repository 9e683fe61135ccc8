use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vsn_core::{Averaging, Network, PriorSpec, ProposerParams, TrainConfig};

/// Flat run configuration read from a `key = value` TOML file. Every key is
/// optional; command-line flags override whatever the file sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // training
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub iters_per_round: usize,
    pub rounds: usize,
    pub hidden: usize,
    pub center_features: bool,
    pub seed: u64,
    pub network: Network,
    // prior
    pub cx_frac: f64,
    pub cy_frac: f64,
    pub sigma_frac: f64,
    // region proposals
    pub scales: Vec<f64>,
    pub min_region_px: usize,
    pub edge_weight: f64,
    // evaluation and diagnostics
    pub macro_average: bool,
    pub thresholds: usize,
    pub debug_targets: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let p = PriorSpec::default();
        let r = ProposerParams::default();
        Self {
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            iters_per_round: t.iters_per_round,
            rounds: t.rounds,
            hidden: t.hidden,
            center_features: t.center_features,
            seed: t.seed,
            network: Network::default(),
            cx_frac: p.cx_frac,
            cy_frac: p.cy_frac,
            sigma_frac: p.sigma_frac,
            scales: r.scales,
            min_region_px: r.min_region_px,
            edge_weight: r.edge_weight,
            macro_average: false,
            thresholds: vsn_core::eval::DEFAULT_THRESHOLDS,
            debug_targets: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| anyhow::Error::new(UsageError(format!("config {}: {e}", path.display()))))
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            iters_per_round: self.iters_per_round,
            rounds: self.rounds,
            hidden: self.hidden,
            center_features: self.center_features,
            seed: self.seed,
        }
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec {
            cx_frac: self.cx_frac,
            cy_frac: self.cy_frac,
            sigma_frac: self.sigma_frac,
        }
    }

    pub fn proposer(&self) -> ProposerParams {
        ProposerParams {
            scales: self.scales.clone(),
            min_region_px: self.min_region_px,
            edge_weight: self.edge_weight,
        }
    }

    pub fn averaging(&self) -> Averaging {
        if self.macro_average {
            Averaging::Macro
        } else {
            Averaging::Micro
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Marks errors that should exit with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Parses `HxW`.
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let Some((h, w)) = s.split_once(['x', 'X']) else {
        bail!(UsageError(format!("size must look like HxW, got {s:?}")));
    };
    match (h.trim().parse(), w.trim().parse()) {
        (Ok(h), Ok(w)) => Ok((h, w)),
        _ => bail!(UsageError(format!("size must look like HxW, got {s:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("lr = 0.1\nlearning_rate = 2").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig {
            lr: 3e-5,
            scales: vec![0.2, 0.4],
            network: Network::Ssn,
            ..RunConfig::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sizes() {
        assert_eq!(parse_size("12x34").unwrap(), (12, 34));
        assert!(parse_size("12").is_err());
        assert!(parse_size("ax3").is_err());
    }
}
