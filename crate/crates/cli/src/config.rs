//! Settings shared by `train` and `evaluate`.

use std::f64::consts::PI;

use beaconloc::positioning::{EkfConfig, MhConfig, Selection};
use beaconloc::training::{EpochOptions, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionKey {
    Instantaneous,
    Accumulated,
}

/// Flat TOML file; every key is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub beacons: usize,
    pub max_aps: usize,
    pub k: usize,
    /// Use at most this many datasets of the training walk; 0 keeps all.
    pub datasets: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub lr: f64,
    pub epochs: usize,
    pub split: f64,
    pub s_xy: f64,
    pub speed: f64,
    pub guard: f64,
    pub joseph: bool,
    pub hypotheses: usize,
    pub s_phi: f64,
    pub window: f64,
    pub warmup: f64,
    pub selection: SelectionKey,
    pub step_noise: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let e = EkfConfig::default();
        let m = MhConfig::default();
        Self {
            seed: 0,
            beacons: EpochOptions::default().beacons,
            max_aps: EpochOptions::default().max_aps,
            k: t.k,
            datasets: 0,
            mu1: t.mu1,
            mu2: t.mu2,
            lr: t.lr,
            epochs: t.epochs,
            split: t.split,
            s_xy: e.s_xy,
            speed: e.speed,
            guard: e.guard,
            joseph: e.joseph,
            hypotheses: m.hypotheses,
            s_phi: PI,
            window: m.window,
            warmup: m.warmup,
            selection: SelectionKey::Accumulated,
            step_noise: m.step_noise,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        if cfg.beacons == 0 || cfg.max_aps == 0 || cfg.hypotheses == 0 {
            return Err(CliError::Validation("beacons, max_aps and hypotheses must be positive".into()));
        }
        if !(cfg.s_xy > 0.0 && cfg.speed >= 0.0 && cfg.guard >= 0.0 && cfg.s_phi > 0.0) {
            return Err(CliError::Validation("filter settings out of range".into()));
        }
        cfg.train(cfg.seed).validate()?;
        Ok(cfg)
    }

    pub fn epoch_options(&self) -> EpochOptions {
        EpochOptions { beacons: self.beacons, max_aps: self.max_aps }
    }

    pub fn ekf(&self) -> EkfConfig {
        EkfConfig { s_xy: self.s_xy, speed: self.speed, guard: self.guard, joseph: self.joseph }
    }

    pub fn mh(&self) -> MhConfig {
        MhConfig {
            hypotheses: self.hypotheses,
            s_xy: self.s_xy,
            s_phi: self.s_phi,
            window: self.window,
            warmup: self.warmup,
            selection: match self.selection {
                SelectionKey::Instantaneous => Selection::Instantaneous,
                SelectionKey::Accumulated => Selection::Accumulated,
            },
            step_noise: self.step_noise,
            ekf: self.ekf(),
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            mu1: self.mu1,
            mu2: self.mu2,
            lr: self.lr,
            epochs: self.epochs,
            split: self.split,
            k: self.k,
            seed,
            ekf: self.ekf(),
        }
    }
}
