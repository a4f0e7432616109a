//! Calibration: training plugs against a frozen socket's predictions.
//!
//! Every plug is trained in isolation — its own Adam state, its own
//! early-stopping monitor, its own best-checkpoint snapshot — against only
//! its group's slice of the cached predictions. Nothing couples one plug's
//! schedule to another's, which is the whole point: a group that converges
//! in 8 epochs stops at 8, a group that needs 40 gets 40. The per-epoch
//! shuffle stream is derived from (seed, "calibrate-shuffle", epoch) and
//! shared by all plugs, so sequential and parallel execution replay the
//! exact same batches and produce bit-identical plugs.

mod monitor;

pub use monitor::{Monitor, MonitorDecision};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, Rng, Tape};
use crate::plug::{extract_group, load_bank, save_bank, Plug, PlugBank, PlugSpec};
use crate::socket::PredictionCache;
use crate::{Tensor32, data::Split};

/// Hyper-parameters for calibrating one bank of plugs. The same settings
/// apply to every plug; what differs per plug is its data slice and the
/// schedule its own monitor settles on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrateHyper {
    /// Hidden width of each plug's two inner layers.
    pub d: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Layer-norm epsilon for the gating path.
    pub eps: f64,
}

impl Default for CalibrateHyper {
    fn default() -> Self {
        Self {
            d: 256,
            lr: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            eps: 1e-5,
        }
    }
}

impl CalibrateHyper {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config(format!(
                "calibration dims must be ≥ 1: d={} batch_size={} max_epochs={}",
                self.d, self.batch_size, self.max_epochs
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be ≥ 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config(format!("layer-norm eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// How the target space is handled. `PerGroup` is the method under study:
/// several plugs, each owning a slice. `Collective` is the baseline it is
/// measured against — one plug for everything — and is only a valid label
/// for a single-group partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    PerGroup,
    Collective,
}

impl CalibrationMode {
    pub fn name(self) -> &'static str {
        match self {
            CalibrationMode::PerGroup => "per_group",
            CalibrationMode::Collective => "collective",
        }
    }
}

/// What one plug's training run looked like, for the record and for the
/// diagnostics built on top (stop-epoch spread, loss curves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugOutcome {
    pub plug_id: usize,
    pub io: usize,
    /// Last epoch actually run (where the monitor stopped it, or
    /// `max_epochs` if it never did).
    pub stop_epoch: usize,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Sample-weighted mean train loss per epoch, index 0 = epoch 1.
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    /// Digest of the plug as restored to its best-validation state.
    pub digest: String,
}

/// A completed calibration: configuration, provenance, and per-plug
/// outcomes. Pair it with the trained `PlugBank` it describes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub mode: CalibrationMode,
    pub spec: PlugSpec,
    pub hyper: CalibrateHyper,
    pub seed: u64,
    pub fingerprint: String,
    pub socket_digest: String,
    pub outcomes: Vec<PlugOutcome>,
}

impl CalibrationRun {
    pub fn stop_epochs(&self) -> Vec<usize> {
        self.outcomes.iter().map(|o| o.stop_epoch).collect()
    }
}

/// One group's slice of the cached predictions and targets, already
/// flattened to (windows × io) matrices. Owning the slices keeps each
/// plug's training loop free of any shared structure.
struct GroupData {
    x_train: Tensor32,
    y_train: Tensor32,
    x_val: Tensor32,
    y_val: Tensor32,
}

fn group_data(
    train: &PredictionCache,
    val: &PredictionCache,
    spec: &PlugSpec,
    gi: usize,
) -> Result<GroupData> {
    Ok(GroupData {
        x_train: extract_group(&train.yhat, spec, gi)?,
        y_train: extract_group(&train.y, spec, gi)?,
        x_val: extract_group(&val.yhat, spec, gi)?,
        y_val: extract_group(&val.y, spec, gi)?,
    })
}

fn gather_rows(src: &Tensor32, idx: &[usize]) -> Tensor32 {
    let w = src.row_width();
    let mut out = vec![0.0f32; idx.len() * w];
    for (r, &i) in idx.iter().enumerate() {
        out[r * w..(r + 1) * w].copy_from_slice(src.row(i));
    }
    Tensor32::raw(vec![idx.len(), w], out)
}

/// Mean squared error of the plug over a full split, in row chunks.
fn full_loss(plug: &Plug<f32>, x: &Tensor32, y: &Tensor32) -> Result<f64> {
    let (w, io) = (x.rows(), x.row_width());
    let mut acc = 0.0f64;
    let chunk = 256;
    let mut r0 = 0;
    while r0 < w {
        let r1 = (r0 + chunk).min(w);
        let sub = Tensor32::raw(vec![r1 - r0, io], x.data()[r0 * io..r1 * io].to_vec());
        let out = plug.forward(&sub)?;
        for (o, t) in out.data().iter().zip(&y.data()[r0 * io..r1 * io]) {
            let d = (*o as f64) - (*t as f64);
            acc += d * d;
        }
        r0 = r1;
    }
    Ok(acc / (w * io) as f64)
}

/// Trains one plug on its slice. Self-contained by construction: the Adam
/// state, the monitor, the best-parameter snapshot and the epoch shuffles
/// (derived from `shuffle_root`, identical for every plug) all live in
/// this call frame, so concurrent invocations cannot interact.
fn train_single_plug(
    mut plug: Plug<f32>,
    plug_id: usize,
    data: &GroupData,
    hyper: &CalibrateHyper,
    shuffle_root: Rng,
) -> Result<(Plug<f32>, PlugOutcome)> {
    let w = data.x_train.rows();
    let io = plug.io;
    let mut adam = Adam::new(AdamConfig::with_lr(hyper.lr), &plug.mlp.params())?;
    let mut monitor = Monitor::new(hyper.patience)?;
    let mut best: Vec<Tensor32> = plug.mlp.params().into_iter().cloned().collect();
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut stop_epoch = hyper.max_epochs;

    for epoch in 1..=hyper.max_epochs {
        let perm = shuffle_root.derive_u64(epoch as u64).permutation(w);
        let mut loss_sum = 0.0f64;
        for batch in perm.chunks(hyper.batch_size) {
            let xb = gather_rows(&data.x_train, batch);
            let yb = gather_rows(&data.y_train, batch);
            let mut tape = Tape::new();
            let xid = tape.leaf(xb);
            let (out, param_ids) = plug.forward_on_tape(&mut tape, xid)?;
            let loss_id = tape.mse(out, &yb)?;
            let loss = tape.value(loss_id).data()[0] as f64;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "plug {plug_id}: non-finite train loss at epoch {epoch}"
                )));
            }
            let mut grads = tape.backward(loss_id)?;
            let grad_tensors: Vec<Tensor32> = param_ids
                .iter()
                .map(|&id| {
                    let shape = tape.value(id).shape().to_vec();
                    grads.take_or_zeros(id, &shape)
                })
                .collect();
            adam.step(&mut plug.mlp.params_mut(), &grad_tensors)?;
            loss_sum += loss * batch.len() as f64;
        }
        train_curve.push(loss_sum / w as f64);
        let val = full_loss(&plug, &data.x_val, &data.y_val)?;
        val_curve.push(val);
        match monitor.update(epoch, val)? {
            MonitorDecision::Improved => {
                for (b, p) in best.iter_mut().zip(plug.mlp.params()) {
                    b.clone_from(p);
                }
            }
            MonitorDecision::Continue => {}
            MonitorDecision::Stop => {
                stop_epoch = epoch;
                break;
            }
        }
    }

    for (p, b) in plug.mlp.params_mut().into_iter().zip(&best) {
        *p = b.clone();
    }
    let digest = plug.digest();
    let outcome = PlugOutcome {
        plug_id,
        io,
        stop_epoch,
        best_epoch: monitor.best_epoch(),
        best_val: monitor.best_val(),
        train_curve,
        val_curve,
        digest,
    };
    Ok((plug, outcome))
}

fn check_inputs(
    mode: CalibrationMode,
    train: &PredictionCache,
    val: &PredictionCache,
    bank: &PlugBank<f32>,
    hyper: &CalibrateHyper,
) -> Result<()> {
    hyper.validate()?;
    if mode == CalibrationMode::Collective && !bank.spec.is_collective() {
        return Err(Error::Config(format!(
            "collective mode requires exactly one plug, bank has {}",
            bank.plug_count()
        )));
    }
    if bank.d != hyper.d || bank.eps != hyper.eps {
        return Err(Error::Config(format!(
            "bank was built with d={} eps={}, hyper says d={} eps={}",
            bank.d, bank.eps, hyper.d, hyper.eps
        )));
    }
    for (cache, split) in [(train, Split::Train), (val, Split::Val)] {
        if cache.split != split {
            return Err(Error::Config(format!(
                "expected a {} cache, got {}",
                split.name(),
                cache.split.name()
            )));
        }
        if cache.n() != bank.spec.n || cache.s() != bank.spec.s {
            return Err(Error::Shape(format!(
                "{} cache is {}×{}, partition expects {}×{}",
                split.name(),
                cache.n(),
                cache.s(),
                bank.spec.n,
                bank.spec.s
            )));
        }
        if cache.windows() == 0 {
            return Err(Error::Config(format!("{} cache holds no windows", split.name())));
        }
    }
    if train.fingerprint != val.fingerprint {
        return Err(Error::Config(
            "train and val caches come from different datasets".into(),
        ));
    }
    if train.socket_digest != val.socket_digest {
        return Err(Error::Config(
            "train and val caches come from different sockets".into(),
        ));
    }
    Ok(())
}

/// Calibrates every plug in the bank, one after another.
pub fn calibrate(
    mode: CalibrationMode,
    train: &PredictionCache,
    val: &PredictionCache,
    bank: PlugBank<f32>,
    hyper: &CalibrateHyper,
    seed: u64,
) -> Result<(PlugBank<f32>, CalibrationRun)> {
    check_inputs(mode, train, val, &bank, hyper)?;
    let shuffle_root = Rng::new(seed).derive("calibrate-shuffle");
    let spec = bank.spec.clone();
    let mut plugs = Vec::with_capacity(bank.plug_count());
    let mut outcomes = Vec::with_capacity(bank.plug_count());
    for (gi, plug) in bank.plugs.into_iter().enumerate() {
        let data = group_data(train, val, &spec, gi)?;
        let (trained, outcome) =
            train_single_plug(plug, gi, &data, hyper, shuffle_root.clone())?;
        plugs.push(trained);
        outcomes.push(outcome);
    }
    let trained_bank = PlugBank {
        spec: spec.clone(),
        d: bank.d,
        eps: bank.eps,
        plugs,
    };
    let run = CalibrationRun {
        mode,
        spec,
        hyper: *hyper,
        seed,
        fingerprint: train.fingerprint.clone(),
        socket_digest: train.socket_digest.clone(),
        outcomes,
    };
    Ok((trained_bank, run))
}

/// Calibrates every plug concurrently, one thread per plug. Because each
/// plug's run is self-contained and the shuffle streams are derived, not
/// shared, the result is bit-identical to [`calibrate`] — this is an
/// execution-strategy choice, never a numerics choice.
pub fn calibrate_parallel(
    mode: CalibrationMode,
    train: &PredictionCache,
    val: &PredictionCache,
    bank: PlugBank<f32>,
    hyper: &CalibrateHyper,
    seed: u64,
) -> Result<(PlugBank<f32>, CalibrationRun)> {
    let workers = bank.plug_count().max(1);
    calibrate_parallel_capped(mode, train, val, bank, hyper, seed, workers)
}

type TrainedPlug = (Plug<f32>, PlugOutcome);

/// [`calibrate_parallel`] with at most `workers` plugs in flight at once.
pub fn calibrate_parallel_capped(
    mode: CalibrationMode,
    train: &PredictionCache,
    val: &PredictionCache,
    bank: PlugBank<f32>,
    hyper: &CalibrateHyper,
    seed: u64,
    workers: usize,
) -> Result<(PlugBank<f32>, CalibrationRun)> {
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    check_inputs(mode, train, val, &bank, hyper)?;
    let shuffle_root = Rng::new(seed).derive("calibrate-shuffle");
    let spec = bank.spec.clone();
    let count = bank.plug_count();
    let mut slots: Vec<Option<Result<TrainedPlug>>> = Vec::new();
    slots.resize_with(count, || None);

    std::thread::scope(|scope| -> Result<()> {
        let mut pending = bank.plugs.into_iter().enumerate();
        loop {
            let wave: Vec<_> = pending.by_ref().take(workers).collect();
            if wave.is_empty() {
                break;
            }
            let mut handles = Vec::with_capacity(wave.len());
            for (gi, plug) in wave {
                let spec = &spec;
                let root = shuffle_root.clone();
                let handle = scope.spawn(move || {
                    let data = group_data(train, val, spec, gi)?;
                    train_single_plug(plug, gi, &data, hyper, root)
                });
                handles.push((gi, handle));
            }
            for (gi, handle) in handles {
                slots[gi] = Some(handle.join().map_err(|_| {
                    Error::Training(format!("plug {gi}: calibration thread panicked"))
                })?);
            }
        }
        Ok(())
    })?;

    let mut plugs = Vec::with_capacity(count);
    let mut outcomes = Vec::with_capacity(count);
    for slot in slots {
        let (plug, outcome) = slot.expect("every slot filled above")?;
        plugs.push(plug);
        outcomes.push(outcome);
    }
    let trained_bank = PlugBank {
        spec: spec.clone(),
        d: bank.d,
        eps: bank.eps,
        plugs,
    };
    let run = CalibrationRun {
        mode,
        spec,
        hyper: *hyper,
        seed,
        fingerprint: train.fingerprint.clone(),
        socket_digest: train.socket_digest.clone(),
        outcomes,
    };
    Ok((trained_bank, run))
}

// ─── run persistence ─────────────────────────────────────────────────────

/// Writes a calibration to `dir`: `run.json`, the trained plugs under
/// `plugs/`, and two CSVs — `loss_curves.csv` (epoch, plug_id, train_loss,
/// val_loss; plug-major) and `stop_epochs.csv`.
pub fn save_run(dir: &Path, run: &CalibrationRun, bank: &PlugBank<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let run_path = dir.join("run.json");
    let body = serde_json::to_string_pretty(run).map_err(|e| Error::json(&run_path, e))?;
    fs::write(&run_path, body).map_err(|e| Error::io(&run_path, e))?;
    save_bank(&dir.join("plugs"), bank)?;

    let mut curves = String::from("epoch,plug_id,train_loss,val_loss\n");
    for o in &run.outcomes {
        for (e, (tl, vl)) in o.train_curve.iter().zip(&o.val_curve).enumerate() {
            curves.push_str(&format!("{},{},{},{}\n", e + 1, o.plug_id, tl, vl));
        }
    }
    let curves_path = dir.join("loss_curves.csv");
    fs::write(&curves_path, curves).map_err(|e| Error::io(&curves_path, e))?;

    let mut stops = String::from("plug_id,io,stop_epoch,best_epoch,best_val\n");
    for o in &run.outcomes {
        stops.push_str(&format!(
            "{},{},{},{},{}\n",
            o.plug_id, o.io, o.stop_epoch, o.best_epoch, o.best_val
        ));
    }
    let stops_path = dir.join("stop_epochs.csv");
    fs::write(&stops_path, stops).map_err(|e| Error::io(&stops_path, e))
}

/// Loads a saved calibration and its trained bank, checking that the
/// recorded plug digests match the tensors on disk.
pub fn load_run(dir: &Path) -> Result<(CalibrationRun, PlugBank<f32>)> {
    let run_path = dir.join("run.json");
    let body = fs::read_to_string(&run_path).map_err(|e| Error::io(&run_path, e))?;
    let run: CalibrationRun = serde_json::from_str(&body).map_err(|e| Error::json(&run_path, e))?;
    let bank = load_bank(&dir.join("plugs"))?;
    if bank.spec != run.spec {
        return Err(Error::Format(format!(
            "bank partition in {} disagrees with run.json",
            dir.display()
        )));
    }
    for (o, digest) in run.outcomes.iter().zip(bank.digests()) {
        if o.digest != digest {
            return Err(Error::Format(format!(
                "plug {} digest in run.json does not match saved tensors",
                o.plug_id
            )));
        }
    }
    Ok((run, bank))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plug::{partition, Axis};

    /// A tiny synthetic cache pair: ŷ is a noisy linear distortion of y,
    /// so a calibrator has something real to learn.
    fn toy_caches(n: usize, s: usize, w_train: usize, w_val: usize) -> (PredictionCache, PredictionCache) {
        let mut rng = Rng::new(1234);
        let mut make = |w: usize, split: Split| {
            let mut y = vec![0.0f32; w * n * s];
            let mut yhat = vec![0.0f32; w * n * s];
            for i in 0..w * n * s {
                let t = rng.next_normal() as f32;
                y[i] = t;
                yhat[i] = 0.7 * t + 0.3 + 0.05 * rng.next_normal() as f32;
            }
            PredictionCache::new(
                split,
                Tensor32::new(vec![w, n, s], yhat).unwrap(),
                Tensor32::new(vec![w, n, s], y).unwrap(),
                "fp-test".into(),
                "socket-test".into(),
            )
            .unwrap()
        };
        (make(w_train, Split::Train), make(w_val, Split::Val))
    }

    fn small_hyper() -> CalibrateHyper {
        CalibrateHyper {
            d: 8,
            lr: 1e-3,
            batch_size: 16,
            max_epochs: 6,
            patience: 2,
            eps: 1e-5,
        }
    }

    #[test]
    fn calibration_learns_and_is_deterministic() {
        let (train, val) = toy_caches(4, 3, 64, 32);
        let hyper = small_hyper();
        let spec = partition(Axis::Variable, 4, 3, 2).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 7).unwrap();
        let init_val: Vec<f64> = (0..bank.plug_count())
            .map(|gi| {
                let data = group_data(&train, &val, &bank.spec, gi).unwrap();
                full_loss(&bank.plugs[gi], &data.x_val, &data.y_val).unwrap()
            })
            .collect();
        let (trained, run) =
            calibrate(CalibrationMode::PerGroup, &train, &val, bank.clone(), &hyper, 7).unwrap();
        for (o, init) in run.outcomes.iter().zip(&init_val) {
            assert!(o.best_val < *init, "plug {} did not improve: {} vs {init}", o.plug_id, o.best_val);
            assert_eq!(o.val_curve.len(), o.stop_epoch);
        }
        // same seed → bit-identical plugs; different seed → different
        let (again, run2) =
            calibrate(CalibrationMode::PerGroup, &train, &val, bank.clone(), &hyper, 7).unwrap();
        assert_eq!(trained.digests(), again.digests());
        assert_eq!(run, run2);
        let bank9 = PlugBank::init(run.spec.clone(), hyper.d, hyper.eps, 9).unwrap();
        let (other, _) =
            calibrate(CalibrationMode::PerGroup, &train, &val, bank9, &hyper, 9).unwrap();
        assert_ne!(trained.digests(), other.digests());
    }

    #[test]
    fn parallel_equals_sequential_bitwise() {
        let (train, val) = toy_caches(6, 2, 48, 24);
        let hyper = small_hyper();
        let spec = partition(Axis::Variable, 6, 2, 3).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 11).unwrap();
        let (seq, run_seq) =
            calibrate(CalibrationMode::PerGroup, &train, &val, bank.clone(), &hyper, 11).unwrap();
        let (par, run_par) =
            calibrate_parallel(CalibrationMode::PerGroup, &train, &val, bank, &hyper, 11).unwrap();
        assert_eq!(seq.digests(), par.digests());
        assert_eq!(run_seq, run_par);
    }

    #[test]
    fn worker_cap_changes_schedule_not_results() {
        let (train, val) = toy_caches(6, 2, 48, 24);
        let hyper = small_hyper();
        let spec = partition(Axis::Variable, 6, 2, 6).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 17).unwrap();
        let (full, run_full) =
            calibrate_parallel(CalibrationMode::PerGroup, &train, &val, bank.clone(), &hyper, 17)
                .unwrap();
        for workers in [1, 2, 4] {
            let (capped, run) = calibrate_parallel_capped(
                CalibrationMode::PerGroup, &train, &val, bank.clone(), &hyper, 17, workers,
            )
            .unwrap();
            assert_eq!(full.digests(), capped.digests(), "workers={workers}");
            assert_eq!(run_full, run, "workers={workers}");
        }
        let err = calibrate_parallel_capped(
            CalibrationMode::PerGroup, &train, &val, bank, &hyper, 17, 0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }

    /// With at least two execution units, running M≥4 independent plugs
    /// on threads should cost no more wall-clock time than running them
    /// one after another. On a single-core host there is nothing to
    /// measure, so the test reports that and exits.
    #[test]
    fn parallel_is_not_slower_on_multicore() {
        let units = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        if units < 2 {
            println!("skipped: only {units} execution unit(s) available");
            return;
        }
        let (train, val) = toy_caches(4, 8, 512, 128);
        let hyper = CalibrateHyper {
            d: 32,
            max_epochs: 12,
            patience: 12,
            ..small_hyper()
        };
        let spec = partition(Axis::Variable, 4, 8, 4).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 23).unwrap();
        let t0 = std::time::Instant::now();
        calibrate(CalibrationMode::PerGroup, &train, &val, bank.clone(), &hyper, 23).unwrap();
        let sequential = t0.elapsed();
        let t1 = std::time::Instant::now();
        calibrate_parallel(CalibrationMode::PerGroup, &train, &val, bank, &hyper, 23).unwrap();
        let parallel = t1.elapsed();
        assert!(
            parallel <= sequential,
            "parallel {parallel:?} slower than sequential {sequential:?} on {units} units"
        );
    }

    #[test]
    fn collective_mode_requires_one_plug() {
        let (train, val) = toy_caches(4, 2, 32, 16);
        let hyper = small_hyper();
        let spec = partition(Axis::Variable, 4, 2, 2).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 1).unwrap();
        let err = calibrate(CalibrationMode::Collective, &train, &val, bank, &hyper, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
        let one = partition(Axis::Variable, 4, 2, 1).unwrap();
        let bank = PlugBank::init(one, hyper.d, hyper.eps, 1).unwrap();
        assert!(calibrate(CalibrationMode::Collective, &train, &val, bank, &hyper, 1).is_ok());
    }

    #[test]
    fn mismatched_caches_are_rejected() {
        let (train, val) = toy_caches(4, 2, 32, 16);
        let hyper = small_hyper();
        let spec = partition(Axis::Variable, 4, 2, 2).unwrap();
        let bank = PlugBank::init(spec.clone(), hyper.d, hyper.eps, 1).unwrap();
        // wrong split order
        let err =
            calibrate(CalibrationMode::PerGroup, &val, &train, bank.clone(), &hyper, 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
        // different dataset fingerprints
        let mut val2 = val.clone();
        val2.fingerprint = "fp-other".into();
        let err =
            calibrate(CalibrationMode::PerGroup, &train, &val2, bank.clone(), &hyper, 1).unwrap_err();
        assert!(err.to_string().contains("dataset"), "{err}");
        // geometry mismatch
        let (t3, _) = toy_caches(3, 2, 32, 16);
        let err = calibrate(CalibrationMode::PerGroup, &t3, &val, bank, &hyper, 1).unwrap_err();
        assert!(matches!(err, Error::Shape(_) | Error::Config(_)), "{err:?}");
    }

    #[test]
    fn run_round_trips_through_disk() {
        let (train, val) = toy_caches(3, 2, 40, 20);
        let hyper = small_hyper();
        let spec = partition(Axis::Step, 3, 2, 2).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 5).unwrap();
        let (trained, run) =
            calibrate(CalibrationMode::PerGroup, &train, &val, bank, &hyper, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_run(dir.path(), &run, &trained).unwrap();
        let (run2, bank2) = load_run(dir.path()).unwrap();
        assert_eq!(run, run2);
        assert_eq!(trained.digests(), bank2.digests());
        let curves = std::fs::read_to_string(dir.path().join("loss_curves.csv")).unwrap();
        assert!(curves.starts_with("epoch,plug_id,train_loss,val_loss\n"));
        let lines: usize = run.outcomes.iter().map(|o| o.train_curve.len()).sum();
        assert_eq!(curves.lines().count(), lines + 1);
    }

    #[test]
    fn restored_plugs_reproduce_best_val_exactly() {
        let (train, val) = toy_caches(2, 4, 48, 24);
        let hyper = CalibrateHyper {
            max_epochs: 10,
            ..small_hyper()
        };
        let spec = partition(Axis::Variable, 2, 4, 2).unwrap();
        let bank = PlugBank::init(spec, hyper.d, hyper.eps, 13).unwrap();
        let (trained, run) =
            calibrate(CalibrationMode::PerGroup, &train, &val, bank, &hyper, 13).unwrap();
        for (gi, o) in run.outcomes.iter().enumerate() {
            let data = group_data(&train, &val, &run.spec, gi).unwrap();
            let recomputed = full_loss(&trained.plugs[gi], &data.x_val, &data.y_val).unwrap();
            assert_eq!(recomputed, o.best_val, "plug {gi}");
            assert_eq!(o.best_val, o.val_curve[o.best_epoch - 1]);
        }
    }
}
