//! The four subcommands.

use std::path::Path;

use beaconloc::channel_sim::config::RunConfig;
use beaconloc::channel_sim::records::Recording;
use beaconloc::channel_sim::{generate_walk, Point};
use beaconloc::ranging::{ApOffsetTable, CalibrationParams, NnModel, Ranger, Topology};
use beaconloc::training::train::{EpochRecord, TestWalk};
use beaconloc::training::{
    calibration_samples, datasets_from_recording, epochs_from_recording, error_metrics, evaluate as score,
    fit_baselines as fit, pdr_track, range_epochs, run_fused, run_wifi, Epoch, EpochOptions, TrainState, Trainer,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::output::{create_dir, read, read_text, write, write_table, Header};
use crate::{Backend, CliError, Mode};

pub const CALIBRATION_FILE: &str = "calibration.rec";
pub const TRAIN_FILE: &str = "train.rec";
pub const TEST_FILE: &str = "test.rec";
pub const PARAMS_FILE: &str = "params.toml";
/// Parameters of the best validation epoch, used by `evaluate`.
pub const MODEL_FILE: &str = "model.json";
/// Parameters after the last epoch, used by `--resume`.
pub const LAST_FILE: &str = "last.json";
pub const STATE_FILE: &str = "state.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const CDF_FILE: &str = "cdf.txt";
pub const TRAJECTORY_FILE: &str = "trajectory.txt";

fn load_recording(path: &Path) -> Result<(Recording, Vec<u8>), CliError> {
    let bytes = read(path)?;
    let rec = Recording::read(bytes.as_slice()).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok((rec, bytes))
}

fn write_recording(path: &Path, rec: &Recording) -> Result<(), CliError> {
    let mut buf = Vec::new();
    rec.write(&mut buf).map_err(|e| CliError::Validation(e.to_string()))?;
    std::fs::write(path, buf).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Writes the labeled calibration walk, the unlabeled training walk and the
/// labeled test walk, each from its own random stream.
pub fn simulate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let (mut cfg, bytes) = match config {
        Some(p) => {
            let text = read_text(p)?;
            (RunConfig::from_toml(&text)?, Some(text.into_bytes()))
        }
        None => (RunConfig::default(), None),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut header = Header::new("simulate", cfg.seed);
    if let (Some(p), Some(b)) = (config, &bytes) {
        header = header.input("config", p, b);
    }
    let site = cfg.site();
    site.validate()?;
    create_dir(out)?;
    let walk = |stream: u64, route: &dyn Fn(&mut ChaCha8Rng) -> Vec<Point>| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let waypoints = route(&mut rng);
        generate_walk(&site, &waypoints, cfg.speed, &cfg.imu(), &mut rng)
    };
    if cfg.calibration {
        let w = walk(1, &|r| cfg.calibration_route(r))?;
        let h = header.clone().field("walk", "calibration");
        write_recording(&out.join(CALIBRATION_FILE), &Recording::from_walk(&site, &w, true, h.lines().to_vec()))?;
    }
    if cfg.train_duration > 0.0 {
        let w = walk(2, &|r| cfg.random_route(cfg.train_duration * cfg.speed, r))?;
        let h = header.clone().field("walk", "train");
        write_recording(&out.join(TRAIN_FILE), &Recording::from_walk(&site, &w, false, h.lines().to_vec()))?;
    }
    if cfg.test_length > 0.0 || !cfg.test_path.is_empty() {
        let w = walk(3, &|r| cfg.test_route(r))?;
        let h = header.clone().field("walk", "test");
        write_recording(&out.join(TEST_FILE), &Recording::from_walk(&site, &w, true, h.lines().to_vec()))?;
    }
    Ok(())
}

pub fn fit_baselines(
    input: &Path,
    backend: Option<Backend>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
) -> Result<(), CliError> {
    let (cfg, _, header) = start("fit-baselines", config, seed)?;
    let (rec, bytes) = load_recording(input)?;
    let header = header.input("input", input, &bytes);
    if !rec.is_labeled() {
        return Err(CliError::Validation(format!("{}: calibration needs a labeled walk", input.display())));
    }
    match backend {
        Some(Backend::Cupid) if !rec.has_csi() => {
            return Err(CliError::Validation(format!(
                "{}: the cupid backend needs CSI columns, the record has RSS only",
                input.display()
            )))
        }
        Some(Backend::Fc | Backend::Cnn) => {
            return Err(CliError::Validation("fit-baselines fits pathloss, polynomial and cupid only".into()))
        }
        _ => {}
    }
    let opts = EpochOptions { max_aps: usize::MAX, ..cfg.epoch_options() };
    let samples = calibration_samples(&epochs_from_recording(&rec, &opts)?)?;
    let (params, report) = fit(&samples)?;
    let body = toml::to_string(&params).map_err(|e| CliError::Validation(e.to_string()))?;
    let header = header
        .field("samples", report.samples)
        .field("nmse_pathloss", report.nmse_pathloss)
        .field("nmse_polynomial", report.nmse_polynomial)
        .field("nmse_cupid", report.nmse_cupid)
        .field("cupid_accuracy", report.cupid_accuracy);
    create_dir(out)?;
    write(&out.join(PARAMS_FILE), &format!("{}{body}", header.comment()))
}

pub fn load_params(path: &Path) -> Result<CalibrationParams, CliError> {
    let p: CalibrationParams = toml::from_str(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

pub fn load_model(path: &Path) -> Result<NnModel, CliError> {
    Ok(NnModel::from_json(&read_text(path)?)?)
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    header: Vec<String>,
    state: TrainState,
}

fn num_aps(rec: &Recording) -> usize {
    rec.aps.iter().map(|a| a.id + 1).max().unwrap_or(0)
}

/// Epochs, PDR track and truth of a labeled walk.
pub fn labeled_walk(rec: &Recording, opts: &EpochOptions) -> Result<(Vec<Epoch>, Vec<Point>, Vec<Point>), CliError> {
    let mut epochs = epochs_from_recording(rec, opts)?;
    let pdr = pdr_track(rec, &mut epochs)?;
    let truth = epochs
        .iter()
        .map(|e| e.truth.ok_or_else(|| CliError::Validation("test walk is unlabeled".into())))
        .collect::<Result<_, _>>()?;
    Ok((epochs, pdr, truth))
}

fn history_csv(header: &Header, history: &[EpochRecord]) -> String {
    let mut s = header.comment();
    s.push_str("epoch,train_cost,val_cost,test_mae\n");
    for r in history {
        let mae = r.test_mae.map_or(String::new(), |v| v.to_string());
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_cost, r.val_cost, mae));
    }
    s
}

/// Loads the optional config and starts the header once the seed is known.
fn start(subcommand: &str, config: Option<&Path>, seed: Option<u64>) -> Result<(PipelineConfig, u64, Header), CliError> {
    let (cfg, bytes) = match config {
        None => (PipelineConfig::default(), None),
        Some(p) => {
            let bytes = read(p)?;
            let text =
                String::from_utf8(bytes.clone()).map_err(|_| CliError::Validation("config is not UTF-8".into()))?;
            (PipelineConfig::from_toml(&text)?, Some(bytes))
        }
    };
    let seed = seed.unwrap_or(cfg.seed);
    let mut header = Header::new(subcommand, seed);
    if let (Some(p), Some(b)) = (config, bytes) {
        header = header.input("config", p, &b);
    }
    Ok((cfg, seed, header))
}

pub struct TrainArgs<'a> {
    pub input: &'a Path,
    pub backend: Backend,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
    pub test: Option<&'a Path>,
    pub resume: Option<&'a Path>,
}

/// Trains from scratch, or continues the run saved in `resume`, until the
/// configured number of epochs.
pub fn train(args: &TrainArgs<'_>, out: &Path) -> Result<(), CliError> {
    let (cfg, seed, header) = start("train", args.config, args.seed)?;
    let (rec, bytes) = load_recording(args.input)?;
    let mut header = header.input("input", args.input, &bytes);
    let topology = match args.backend {
        Backend::Cnn => Topology::cnn(cfg.beacons),
        Backend::Fc => Topology::fc(cfg.beacons),
        b => return Err(CliError::Validation(format!("{b:?} is not a trainable backend"))),
    };
    if matches!(args.backend, Backend::Cnn) && !rec.has_csi() {
        return Err(CliError::Validation("the cnn backend needs CSI columns, the record has RSS only".into()));
    }
    let mut datasets = datasets_from_recording(&rec, &cfg.epoch_options(), cfg.k)?;
    if cfg.datasets > 0 {
        datasets.truncate(cfg.datasets);
    }
    let test = match args.test {
        Some(p) => {
            let (t, b) = load_recording(p)?;
            header = header.input("test", p, &b);
            let (epochs, _, truth) = labeled_walk(&t, &cfg.epoch_options())?;
            Some(TestWalk { epochs, truth })
        }
        None => None,
    };
    let tc = cfg.train(seed);
    let (model, state) = match args.resume {
        Some(dir) => {
            let model = load_model(&dir.join(LAST_FILE))?;
            if model.topology != topology {
                return Err(CliError::Validation("checkpoint topology differs from the requested backend".into()));
            }
            let sf: StateFile = serde_json::from_str(&read_text(&dir.join(STATE_FILE))?)
                .map_err(|e| CliError::Validation(format!("{}: {e}", STATE_FILE)))?;
            header = header.field("resumed_from_epoch", sf.state.epoch);
            (model, sf.state)
        }
        None => (NnModel::new(topology, num_aps(&rec), seed), TrainState::default()),
    };
    let header = header
        .field("backend", args.backend.kind().name())
        .field("scenario", tc.scenario())
        .field("datasets", datasets.len())
        .field("mu1", tc.mu1)
        .field("mu2", tc.mu2);
    let mut trainer = Trainer::resume(model, tc, datasets.len(), state)?;
    trainer.baseline(&datasets, test.as_ref())?;
    while trainer.state.epoch < tc.epochs {
        trainer.run_epoch(&datasets, test.as_ref())?;
    }
    let best = trainer.state.best.as_ref().map_or(0, |b| b.epoch);
    let header = header.field("best_epoch", best);
    create_dir(out)?;
    write(&out.join(MODEL_FILE), &trainer.best_model().to_json_with_header(header.lines()))?;
    write(&out.join(LAST_FILE), &trainer.model.to_json_with_header(header.lines()))?;
    let sf = StateFile { header: header.lines().to_vec(), state: trainer.state.clone() };
    write(&out.join(STATE_FILE), &serde_json::to_string(&sf).map_err(|e| CliError::Validation(e.to_string()))?)?;
    write(&out.join(HISTORY_FILE), &history_csv(&header, &trainer.state.history))
}

pub struct EvaluateArgs<'a> {
    pub input: &'a Path,
    pub backend: Backend,
    pub mode: Mode,
    pub params: Option<&'a Path>,
    pub model: Option<&'a Path>,
    pub config: Option<&'a Path>,
    pub seed: Option<u64>,
}

/// Tracks the walk; writes the trajectory and, for labeled walks, metrics
/// and the error CDF.
pub fn evaluate(args: &EvaluateArgs<'_>, out: &Path) -> Result<(), CliError> {
    let (cfg, _, header) = start("evaluate", args.config, args.seed)?;
    let (rec, bytes) = load_recording(args.input)?;
    let mut header = header.input("input", args.input, &bytes);
    let mut params = CalibrationParams::default();
    let mut model = None;
    if args.backend.kind().is_neural() {
        let p = args.model.ok_or_else(|| CliError::Validation("--model is required for fc and cnn".into()))?;
        header = header.input("model", p, &read(p)?);
        model = Some(load_model(p)?);
    } else if let Some(p) = args.params {
        header = header.input("params", p, &read(p)?);
        params = load_params(p)?;
    }
    let (ranger, offsets, beacons) = match (args.backend, &model) {
        (Backend::Pathloss, _) => (Ranger::PathLoss(&params.pathloss), ApOffsetTable::default(), cfg.beacons),
        (Backend::Polynomial, _) => (Ranger::Polynomial(&params.polynomial), ApOffsetTable::default(), cfg.beacons),
        (Backend::Cupid, _) => (Ranger::Cupid(&params.cupid), ApOffsetTable::default(), cfg.beacons),
        (_, Some(m)) => {
            let topo_ok = matches!(
                (args.backend, m.topology),
                (Backend::Fc, Topology::Fc { .. }) | (Backend::Cnn, Topology::Cnn { .. })
            );
            if !topo_ok {
                return Err(CliError::Validation("checkpoint does not match the requested backend".into()));
            }
            (Ranger::Nn(m), m.offsets(), m.topology.beacons())
        }
        _ => unreachable!("neural backends load a model above"),
    };
    let header = header.field("backend", args.backend.kind().name()).field("mode", args.mode.name());
    let opts = EpochOptions { beacons, ..cfg.epoch_options() };
    let mut epochs = epochs_from_recording(&rec, &opts)?;
    let pdr = if args.mode == Mode::Fused { Some(pdr_track(&rec, &mut epochs)?) } else { None };
    let ranges = range_epochs(&ranger, &epochs, &offsets)?;
    let (positions, extra) = match &pdr {
        None => (run_wifi(&epochs, &ranges, &cfg.ekf())?, None),
        Some(p) => {
            let f = run_fused(&epochs, &ranges, p, &cfg.mh())?;
            (f.positions.clone(), Some(f))
        }
    };
    let truth: Option<Vec<Point>> = epochs.iter().map(|e| e.truth).collect();

    create_dir(out)?;
    let mut columns = vec!["t", "x", "y"];
    if truth.is_some() {
        columns.extend(["true_x", "true_y"]);
    }
    if extra.is_some() {
        columns.extend(["phi_ref", "hypothesis"]);
    }
    let rows: Vec<Vec<f64>> = (0..epochs.len())
        .map(|k| {
            let mut r = vec![epochs[k].time, positions[k][0], positions[k][1]];
            if let Some(t) = &truth {
                r.extend(t[k]);
            }
            if let Some(f) = &extra {
                r.extend([f.phi_ref[k], f.selected[k] as f64]);
            }
            r
        })
        .collect();
    write_table(&out.join(TRAJECTORY_FILE), &header, &columns, &rows)?;

    if let Some(truth) = truth {
        let m = score(&positions, &truth)?;
        let mut text = header.comment();
        text.push_str(&format!("epochs {}\nmae {}\nrmse {}\np90 {}\n", m.count, m.mae, m.rmse, m.p90));
        let range_err: Vec<f64> = epochs
            .iter()
            .zip(&ranges)
            .flat_map(|(e, r)| {
                let links = e.link_truth.clone().unwrap_or_default();
                links.into_iter().zip(r.clone()).map(|((d, _), o)| (o.d_hat - d).abs())
            })
            .collect();
        if !range_err.is_empty() {
            text.push_str(&format!("range_mae {}\n", error_metrics(&range_err)?.mae));
        }
        write(&out.join(METRICS_FILE), &text)?;
        let cdf: Vec<Vec<f64>> = m.cdf.iter().map(|&(e, f)| vec![e, f]).collect();
        write_table(&out.join(CDF_FILE), &header, &["error", "fraction"], &cdf)?;
    }
    Ok(())
}
