//! End-to-end optimisation of a neural ranger against the unified cost.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::{unified_cost_tape, RangeLink};
use super::dataset::{Epoch, TrainingDataset};
use super::metrics::evaluate;
use super::pipeline::{initial_state, range_epochs, run_wifi};
use super::TrainingError;
use crate::channel_sim::Point;
use crate::nn_core::{adam_step, AdamConfig, AdamState, ParamSet, Tape, Var};
use crate::positioning::{process_noise, EkfConfig, TapeEkf};
use crate::ranging::{NnModel, Ranger, OFFSET_UNIT_DB};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub mu1: f64,
    pub mu2: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Fraction of datasets used for training; the rest validate.
    pub split: f64,
    /// Epochs per dataset.
    pub k: usize,
    pub seed: u64,
    /// Frozen filter settings used inside the cost.
    pub ekf: EkfConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { mu1: 1.0, mu2: 1.0, lr: 1e-3, epochs: 50, split: 0.7, k: 100, seed: 0, ekf: EkfConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.mu1 >= 0.0 && self.mu2 >= 0.0) {
            return Err(TrainingError::Input(format!("cost weights ({}, {}) must be non-negative", self.mu1, self.mu2)));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(TrainingError::Input(format!("split {} must lie in (0, 1)", self.split)));
        }
        if !(self.lr > 0.0) || self.k < 3 {
            return Err(TrainingError::Input("learning rate must be positive and K at least 3".into()));
        }
        Ok(())
    }

    /// Scenario name used in history headers.
    pub fn scenario(&self) -> &'static str {
        match (self.mu1 > 0.0, self.mu2 > 0.0) {
            (false, true) => "unsupervised",
            (true, true) => "sensor-aided",
            (true, false) => "sensor-only",
            (false, false) => "frozen",
        }
    }
}

/// Costs after one pass; epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean unified cost over the training datasets, each scored just before
    /// its own update (epoch 0: no updates).
    pub train_cost: f64,
    pub val_cost: f64,
    /// Wi-Fi-only positioning MAE on the labeled test walk, if any.
    pub test_mae: Option<f64>,
}

/// Parameters of the epoch with the lowest validation cost so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub val_cost: f64,
    pub params: ParamSet,
}

/// Everything besides the current model needed to continue a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub adam: AdamState,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestEpoch>,
}

/// Held-out labeled walk for progress reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct TestWalk {
    pub epochs: Vec<Epoch>,
    pub truth: Vec<Point>,
}

/// Shuffles dataset indices with `seed` and splits them `split : 1 − split`.
pub fn split_datasets(n: usize, split: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), TrainingError> {
    let n_train = (split * n as f64).round() as usize;
    if n < 2 || n_train == 0 || n_train == n {
        return Err(TrainingError::Input(format!("{n} datasets cannot be split {split}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = idx.split_off(n_train);
    Ok((idx, val))
}

/// Records ranging, filtering and the unified cost of one dataset on `tape`.
///
/// Returns the cost and the filtered trajectory values.
pub fn dataset_cost_tape<'t>(
    tape: &'t Tape,
    model: &NnModel,
    vars: &std::collections::BTreeMap<String, Var<'t>>,
    ds: &TrainingDataset,
    cfg: &TrainConfig,
) -> Result<(Var<'t>, Vec<Point>), TrainingError> {
    let epochs = &ds.epochs;
    let inputs: Vec<_> = epochs.iter().flat_map(|e| e.inputs.iter().cloned()).collect();
    if inputs.is_empty() {
        return Err(TrainingError::Input("dataset has no ranged APs".into()));
    }
    let (csi, rss) = model.batch_tensors(&inputs)?;
    let per = rss.shape()[1];
    let num_aps = model.num_aps();
    let mut idx = Vec::with_capacity(inputs.len() * per);
    for i in &inputs {
        if i.ap_id >= num_aps {
            return Err(TrainingError::Input(format!("AP {} has no offset (model knows {num_aps})", i.ap_id)));
        }
        idx.extend(std::iter::repeat_n(i.ap_id, per));
    }
    let offsets = vars
        .get(NnModel::offsets_name())
        .copied()
        .ok_or_else(|| TrainingError::Input("model has no AP offsets".into()))?;
    let rss = tape.constant(rss).add(offsets.gather(&idx, &[inputs.len(), per])?.scale(OFFSET_UNIT_DB))?;
    let (d, s) = model.forward(vars, tape.constant(csi), rss)?;

    let mut ekf = TapeEkf::init(tape, &initial_state(epochs, &cfg.ekf)?);
    let mut rows = Vec::with_capacity(epochs.len());
    let mut links = Vec::with_capacity(inputs.len());
    let mut at = 0;
    for (k, e) in epochs.iter().enumerate() {
        if k > 0 {
            ekf = ekf.predict(process_noise(cfg.ekf.speed, e.time - epochs[k - 1].time))?;
        }
        let n = e.inputs.len();
        if n > 0 {
            let sel: Vec<usize> = (at..at + n).collect();
            ekf = ekf.update(&e.ap_positions, d.gather(&sel, &[n, 1])?, s.gather(&sel, &[n, 1])?, &cfg.ekf)?;
            links.extend(e.ap_positions.iter().map(|&anchor| RangeLink { epoch: k, anchor }));
            at += n;
        }
        rows.push(ekf.z.transpose()?);
    }
    let z = Var::concat(&rows, 0)?;
    let track = z.value().data().chunks_exact(2).map(|c| [c[0], c[1]]).collect();
    let cost = unified_cost_tape(z, d, &ds.pdr, &links, cfg.mu1, cfg.mu2, cfg.ekf.guard)?;
    Ok((cost, track))
}

/// Unified cost of one dataset under the current parameters.
pub fn dataset_cost(model: &NnModel, ds: &TrainingDataset, cfg: &TrainConfig) -> Result<f64, TrainingError> {
    let tape = Tape::new();
    let vars = model.bind(&tape, false);
    Ok(dataset_cost_tape(&tape, model, &vars, ds, cfg)?.0.item())
}

/// Gradient of the unified cost of one dataset with respect to every parameter.
pub fn dataset_gradient(
    model: &NnModel,
    ds: &TrainingDataset,
    cfg: &TrainConfig,
) -> Result<(f64, ParamSet), TrainingError> {
    let tape = Tape::new();
    let vars = model.bind(&tape, true);
    let (cost, _) = dataset_cost_tape(&tape, model, &vars, ds, cfg)?;
    let value = cost.item();
    let grads = tape.backward(cost)?;
    let mut out = ParamSet::new();
    for (name, v) in &vars {
        out.insert(name.clone(), grads.get_or_zeros(*v));
    }
    Ok((value, out))
}

/// Wi-Fi-only positioning MAE of `model` on a labeled walk.
pub fn test_mae(model: &NnModel, walk: &TestWalk, ekf: &EkfConfig) -> Result<f64, TrainingError> {
    let ranges = range_epochs(&Ranger::Nn(model), &walk.epochs, &model.offsets())?;
    let track = run_wifi(&walk.epochs, &ranges, ekf)?;
    Ok(evaluate(&track, &walk.truth)?.mae)
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: NnModel,
    pub state: TrainState,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

impl Trainer {
    pub fn new(model: NnModel, cfg: TrainConfig, datasets: usize) -> Result<Self, TrainingError> {
        Self::resume(model, cfg, datasets, TrainState::default())
    }

    pub fn resume(model: NnModel, cfg: TrainConfig, datasets: usize, state: TrainState) -> Result<Self, TrainingError> {
        cfg.validate()?;
        let (train_idx, val_idx) = split_datasets(datasets, cfg.split, cfg.seed)?;
        Ok(Self { cfg, model, state, train_idx, val_idx })
    }

    fn mean_cost(&self, datasets: &[TrainingDataset], idx: &[usize], epoch: usize) -> Result<f64, TrainingError> {
        let mut total = 0.0;
        for &i in idx {
            let c = dataset_cost(&self.model, &datasets[i], &self.cfg).map_err(|e| abort(epoch, i, e))?;
            if !c.is_finite() {
                return Err(TrainingError::Aborted { epoch, dataset: i, reason: "non-finite cost".into() });
            }
            total += c;
        }
        Ok(total / idx.len() as f64)
    }

    fn record(&mut self, rec: EpochRecord) -> EpochRecord {
        if self.state.best.as_ref().is_none_or(|b| rec.val_cost < b.val_cost) {
            self.state.best = Some(BestEpoch { epoch: rec.epoch, val_cost: rec.val_cost, params: self.model.params.clone() });
        }
        self.state.history.push(rec.clone());
        rec
    }

    /// The current model with the parameters of its best validation epoch.
    pub fn best_model(&self) -> NnModel {
        let mut m = self.model.clone();
        if let Some(b) = &self.state.best {
            m.params = b.params.clone();
        }
        m
    }

    /// Scores the untrained model as epoch 0 (only once).
    pub fn baseline(&mut self, datasets: &[TrainingDataset], test: Option<&TestWalk>) -> Result<EpochRecord, TrainingError> {
        if let Some(r) = self.state.history.first() {
            return Ok(r.clone());
        }
        let rec = EpochRecord {
            epoch: 0,
            train_cost: self.mean_cost(datasets, &self.train_idx, 0)?,
            val_cost: self.mean_cost(datasets, &self.val_idx, 0)?,
            test_mae: test.map(|t| test_mae(&self.model, t, &self.cfg.ekf)).transpose()?,
        };
        Ok(self.record(rec))
    }

    /// One pass over the training datasets in a seed-dependent order, one
    /// Adam step each.
    pub fn run_epoch(&mut self, datasets: &[TrainingDataset], test: Option<&TestWalk>) -> Result<EpochRecord, TrainingError> {
        self.baseline(datasets, test)?;
        let epoch = self.state.epoch + 1;
        let mut order = self.train_idx.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(epoch as u64)));
        let adam = AdamConfig { lr: self.cfg.lr, ..AdamConfig::default() };
        let mut total = 0.0;
        for &i in &order {
            let (c, grads) = dataset_gradient(&self.model, &datasets[i], &self.cfg).map_err(|e| abort(epoch, i, e))?;
            if !c.is_finite() {
                return Err(TrainingError::Aborted { epoch, dataset: i, reason: "non-finite cost".into() });
            }
            adam_step(&mut self.model.params, &grads, &mut self.state.adam, &adam).map_err(|e| abort(epoch, i, e.into()))?;
            total += c;
        }
        self.state.epoch = epoch;
        let rec = EpochRecord {
            epoch,
            train_cost: total / order.len() as f64,
            val_cost: self.mean_cost(datasets, &self.val_idx, epoch)?,
            test_mae: test.map(|t| test_mae(&self.model, t, &self.cfg.ekf)).transpose()?,
        };
        Ok(self.record(rec))
    }
}

fn abort(epoch: usize, dataset: usize, e: TrainingError) -> TrainingError {
    match e {
        TrainingError::Aborted { .. } => e,
        e if e.is_numerical() => TrainingError::Aborted { epoch, dataset, reason: e.to_string() },
        e => e,
    }
}

/// Runs `cfg.epochs` epochs from scratch. Returns the parameters of the epoch
/// with the lowest validation cost, and the history.
pub fn train(
    model: NnModel,
    datasets: &[TrainingDataset],
    cfg: &TrainConfig,
    test: Option<&TestWalk>,
) -> Result<(NnModel, Vec<EpochRecord>), TrainingError> {
    let mut t = Trainer::new(model, *cfg, datasets.len())?;
    t.baseline(datasets, test)?;
    for _ in 0..cfg.epochs {
        t.run_epoch(datasets, test)?;
    }
    Ok((t.best_model(), t.state.history))
}

/// Offsets in dB, for reporting.
pub fn offsets_of(model: &NnModel) -> Vec<f64> {
    model.offsets().offsets
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = split_datasets(20, 0.7, 3).unwrap();
        assert_eq!((a.len(), b.len()), (14, 6));
        assert_eq!(split_datasets(20, 0.7, 3).unwrap(), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.into_iter().chain(b).collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(split_datasets(1, 0.7, 0).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig { mu1: -1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { split: 1.0, ..Default::default() }.validate().is_err());
        assert_eq!(TrainConfig { mu1: 0.0, ..Default::default() }.scenario(), "unsupervised");
        assert_eq!(TrainConfig::default().scenario(), "sensor-aided");
    }
}
