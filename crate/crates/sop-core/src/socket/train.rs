use serde::{Deserialize, Serialize};

use super::{decompose, socket_digest, DecompHead, FrozenSocket, Model, SocketKind};
use crate::calibrate::{Monitor, MonitorDecision};
use crate::data::{PreparedData, Split};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Adam, AdamConfig, DenseParams, Mlp, NodeId, Rng, Tape};
use crate::Tensor32;

/// Socket training knobs. The socket trains like an ordinary forecaster:
/// one Adam, one collective early-stopping monitor over the whole
/// validation loss. (That collectivity is fine here — the socket is the
/// baseline; it is the *calibrators* that must not share a monitor.)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocketHyper {
    /// Hidden width of the mlp kind.
    pub hidden: usize,
    /// Moving-average kernel of the linear_decomp kind.
    pub kernel: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SocketHyper {
    fn default() -> Self {
        Self {
            hidden: 128,
            kernel: 25,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
        }
    }
}

impl SocketHyper {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("hidden", self.hidden),
            ("kernel", self.kernel),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("socket {what} must be ≥ 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("socket lr must be > 0, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SocketTrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val: f64,
    pub train_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
}

/// Row-gather into a fresh (batch × width) matrix.
fn gather_rows(src: &Tensor32, idx: &[usize]) -> Tensor32 {
    let w = src.row_width();
    let mut out = vec![0.0f32; idx.len() * w];
    for (r, &i) in idx.iter().enumerate() {
        out[r * w..(r + 1) * w].copy_from_slice(src.row(i));
    }
    Tensor32::raw(vec![idx.len(), w], out)
}

/// Per-variable design matrices for the decomposition socket:
/// seasonal/trend are (w × t), target is (w × s).
struct DecompData {
    seasonal: Vec<Tensor32>,
    trend: Vec<Tensor32>,
    target: Vec<Tensor32>,
}

fn decomp_data(data: &PreparedData, split: Split, kernel: usize) -> DecompData {
    let set = data.windows(split);
    let (w, n, t, s) = (set.len(), set.n, set.t, set.s);
    let mut seasonal = vec![vec![0.0f32; w * t]; n];
    let mut trend = vec![vec![0.0f32; w * t]; n];
    let mut target = vec![vec![0.0f32; w * s]; n];
    let mut xs = vec![0.0f32; t];
    let mut xt = vec![0.0f32; t];
    for (i, sample) in set.samples.iter().enumerate() {
        for v in 0..n {
            decompose(sample.x.row(v), kernel, &mut xs, &mut xt);
            seasonal[v][i * t..(i + 1) * t].copy_from_slice(&xs);
            trend[v][i * t..(i + 1) * t].copy_from_slice(&xt);
            target[v][i * s..(i + 1) * s].copy_from_slice(sample.y.row(v));
        }
    }
    DecompData {
        seasonal: seasonal
            .into_iter()
            .map(|d| Tensor32::raw(vec![w, t], d))
            .collect(),
        trend: trend
            .into_iter()
            .map(|d| Tensor32::raw(vec![w, t], d))
            .collect(),
        target: target
            .into_iter()
            .map(|d| Tensor32::raw(vec![w, s], d))
            .collect(),
    }
}

/// Flattened (w × n·t) inputs and (w × n·s) targets for the mlp kind.
fn flat_data(data: &PreparedData, split: Split) -> (Tensor32, Tensor32) {
    let set = data.windows(split);
    let (w, n, t, s) = (set.len(), set.n, set.t, set.s);
    let mut x = vec![0.0f32; w * n * t];
    let mut y = vec![0.0f32; w * n * s];
    for (i, sample) in set.samples.iter().enumerate() {
        x[i * n * t..(i + 1) * n * t].copy_from_slice(sample.x.data());
        y[i * n * s..(i + 1) * n * s].copy_from_slice(sample.y.data());
    }
    (
        Tensor32::raw(vec![w, n * t], x),
        Tensor32::raw(vec![w, n * s], y),
    )
}

enum Trainable {
    Decomp(Vec<DecompHead>),
    Mlp(Mlp<f32>),
}

impl Trainable {
    fn params_mut(&mut self) -> Vec<&mut Tensor32> {
        match self {
            Trainable::Decomp(heads) => heads
                .iter_mut()
                .flat_map(|h| {
                    [
                        &mut h.seasonal.w,
                        &mut h.seasonal.b,
                        &mut h.trend.w,
                        &mut h.trend.b,
                    ]
                })
                .collect(),
            Trainable::Mlp(mlp) => mlp.params_mut(),
        }
    }

    fn params(&self) -> Vec<&Tensor32> {
        match self {
            Trainable::Decomp(heads) => heads
                .iter()
                .flat_map(|h| [&h.seasonal.w, &h.seasonal.b, &h.trend.w, &h.trend.b])
                .collect(),
            Trainable::Mlp(mlp) => mlp.params(),
        }
    }

    fn snapshot(&self) -> Vec<Tensor32> {
        self.params().into_iter().cloned().collect()
    }

    fn restore(&mut self, snapshot: &[Tensor32]) {
        for (p, s) in self.params_mut().into_iter().zip(snapshot) {
            *p = s.clone();
        }
    }

    /// Records one batch on a fresh tape. Returns the tape, the loss node
    /// and parameter leaf ids in canonical parameter order.
    fn batch_tape(
        &self,
        decomp: Option<&DecompData>,
        flat: Option<&(Tensor32, Tensor32)>,
        batch: &[usize],
    ) -> Result<(Tape<f32>, NodeId, Vec<NodeId>)> {
        let mut tape = Tape::new();
        match self {
            Trainable::Decomp(heads) => {
                let d = decomp.expect("decomp data");
                let mut param_ids = Vec::with_capacity(heads.len() * 4);
                let mut partials = Vec::with_capacity(heads.len());
                for (v, head) in heads.iter().enumerate() {
                    let xs = tape.leaf(gather_rows(&d.seasonal[v], batch));
                    let xt = tape.leaf(gather_rows(&d.trend[v], batch));
                    let y = gather_rows(&d.target[v], batch);
                    let ws = tape.leaf(head.seasonal.w.clone());
                    let bs = tape.leaf(head.seasonal.b.clone());
                    let wt = tape.leaf(head.trend.w.clone());
                    let bt = tape.leaf(head.trend.b.clone());
                    param_ids.extend([ws, bs, wt, bt]);
                    let ps = tape.dense(xs, ws, bs)?;
                    let pt = tape.dense(xt, wt, bt)?;
                    let pred = tape.add(ps, pt)?;
                    partials.push(tape.mse(pred, &y)?);
                }
                let loss = tape.mean_scalars(&partials)?;
                Ok((tape, loss, param_ids))
            }
            Trainable::Mlp(mlp) => {
                let (x_all, y_all) = flat.expect("flat data");
                let x = tape.leaf(gather_rows(x_all, batch));
                let y = gather_rows(y_all, batch);
                let (out, param_ids) = mlp.forward_on_tape(&mut tape, x)?;
                let loss = tape.mse(out, &y)?;
                Ok((tape, loss, param_ids))
            }
        }
    }

    /// Full-split MSE with the current parameters, f64-accumulated.
    fn full_loss(
        &self,
        decomp: Option<&DecompData>,
        flat: Option<&(Tensor32, Tensor32)>,
    ) -> Result<f64> {
        match self {
            Trainable::Decomp(heads) => {
                let d = decomp.expect("decomp data");
                let mut acc = 0.0f64;
                let mut count = 0usize;
                for (v, head) in heads.iter().enumerate() {
                    let pred = head.apply(&d.seasonal[v], &d.trend[v])?;
                    for (&p, &t) in pred.data().iter().zip(d.target[v].data()) {
                        let diff = p as f64 - t as f64;
                        acc += diff * diff;
                    }
                    count += pred.numel();
                }
                Ok(acc / count as f64)
            }
            Trainable::Mlp(mlp) => {
                let (x_all, y_all) = flat.expect("flat data");
                let rows = x_all.rows();
                let width_in = x_all.row_width();
                let width_out = y_all.row_width();
                let mut acc = 0.0f64;
                let chunk = 256;
                let mut r0 = 0;
                while r0 < rows {
                    let r1 = (r0 + chunk).min(rows);
                    let x = Tensor32::raw(
                        vec![r1 - r0, width_in],
                        x_all.data()[r0 * width_in..r1 * width_in].to_vec(),
                    );
                    let pred = mlp.forward(&x)?;
                    let y = &y_all.data()[r0 * width_out..r1 * width_out];
                    for (&p, &t) in pred.data().iter().zip(y) {
                        let diff = p as f64 - t as f64;
                        acc += diff * diff;
                    }
                    r0 = r1;
                }
                Ok(acc / (rows * width_out) as f64)
            }
        }
    }
}

/// Trains a built-in socket on the prepared dataset, restores the best
/// validation snapshot and freezes it. Deterministic for a fixed
/// (kind, data, hyper, seed): init draws from the "socket-init" stream,
/// epoch shuffles from "socket-shuffle" keyed by epoch.
pub fn train_socket(
    kind: SocketKind,
    data: &PreparedData,
    hyper: &SocketHyper,
    seed: u64,
) -> Result<(FrozenSocket, SocketTrainReport)> {
    hyper.validate()?;
    if kind == SocketKind::External {
        return Err(Error::Config(
            "external sockets cannot be trained; load their prediction files instead".into(),
        ));
    }
    if data.train.is_empty() || data.val.is_empty() {
        return Err(Error::Config(
            "socket training needs non-empty train and val window sets".into(),
        ));
    }
    let (n, t, s) = (data.n, data.t, data.s);
    let root = Rng::new(seed);
    let mut init_rng = root.derive("socket-init");
    let mut model = match kind {
        SocketKind::LinearDecomp => {
            let mut heads = Vec::with_capacity(n);
            for _ in 0..n {
                heads.push(DecompHead {
                    seasonal: DenseParams::init(t, s, &mut init_rng)?,
                    trend: DenseParams::init(t, s, &mut init_rng)?,
                });
            }
            Trainable::Decomp(heads)
        }
        SocketKind::Mlp => Trainable::Mlp(Mlp::init(
            &[n * t, hyper.hidden, n * s],
            &[Activation::Gelu, Activation::Identity],
            &mut init_rng,
        )?),
        SocketKind::External => unreachable!(),
    };

    let (train_decomp, val_decomp) = match kind {
        SocketKind::LinearDecomp => (
            Some(decomp_data(data, Split::Train, hyper.kernel)),
            Some(decomp_data(data, Split::Val, hyper.kernel)),
        ),
        _ => (None, None),
    };
    let (train_flat, val_flat) = match kind {
        SocketKind::Mlp => (
            Some(flat_data(data, Split::Train)),
            Some(flat_data(data, Split::Val)),
        ),
        _ => (None, None),
    };

    let mut adam = Adam::new(AdamConfig::with_lr(hyper.lr), &model.params())?;
    let mut monitor = Monitor::new(hyper.patience)?;
    let shuffle_root = root.derive("socket-shuffle");
    let w_train = data.train.len();
    let mut best_snapshot = model.snapshot();
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut epochs_run = 0;

    for epoch in 1..=hyper.max_epochs {
        epochs_run = epoch;
        let perm = shuffle_root.derive_u64(epoch as u64).permutation(w_train);
        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for batch in perm.chunks(hyper.batch_size) {
            let (tape, loss_id, param_ids) =
                model.batch_tape(train_decomp.as_ref(), train_flat.as_ref(), batch)?;
            let loss = tape.value(loss_id).data()[0] as f64;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "socket loss became non-finite at epoch {epoch}"
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
            adam.step(&mut model.params_mut(), &grad_tensors)?;
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        train_curve.push(loss_sum / seen as f64);
        let val_loss = model.full_loss(val_decomp.as_ref(), val_flat.as_ref())?;
        val_curve.push(val_loss);
        match monitor.update(epoch, val_loss)? {
            MonitorDecision::Improved => best_snapshot = model.snapshot(),
            MonitorDecision::Continue => {}
            MonitorDecision::Stop => break,
        }
    }

    model.restore(&best_snapshot);
    let model = match model {
        Trainable::Decomp(heads) => Model::Decomp {
            kernel: hyper.kernel,
            heads,
        },
        Trainable::Mlp(mlp) => Model::Mlp(mlp),
    };
    let structural = match kind {
        SocketKind::LinearDecomp => hyper.kernel,
        SocketKind::Mlp => hyper.hidden,
        SocketKind::External => 0,
    };
    let digest = socket_digest(kind, n, t, s, structural, &model);
    Ok((
        FrozenSocket {
            kind,
            n,
            t,
            s,
            fingerprint: data.fingerprint.clone(),
            digest,
            model,
        },
        SocketTrainReport {
            epochs_run,
            best_epoch: monitor.best_epoch(),
            best_val: monitor.best_val(),
            train_curve,
            val_curve,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, prepare, SynthSpec};

    fn small_data() -> PreparedData {
        let spec = SynthSpec {
            n: 2,
            length: 400,
            periods: vec![24, 32],
            noise_std: vec![0.05, 0.1],
            slopes: vec![0.0, 0.001],
            rho: 0.2,
            seed: 11,
        };
        let series = generate_synthetic(&spec).unwrap();
        prepare(&series, 24, 6, 1, None).unwrap()
    }

    fn quick_hyper() -> SocketHyper {
        SocketHyper {
            hidden: 16,
            kernel: 7,
            lr: 1e-3,
            batch_size: 32,
            max_epochs: 4,
            patience: 2,
        }
    }

    #[test]
    fn decomp_socket_learns_and_is_deterministic() {
        let data = small_data();
        let (sock1, rep1) = train_socket(SocketKind::LinearDecomp, &data, &quick_hyper(), 5).unwrap();
        let (sock2, rep2) = train_socket(SocketKind::LinearDecomp, &data, &quick_hyper(), 5).unwrap();
        assert_eq!(sock1.digest, sock2.digest, "same seed, same socket");
        assert_eq!(rep1.val_curve, rep2.val_curve);
        // a sine-dominated series should be learnable: loss clearly drops
        assert!(
            rep1.val_curve.last().unwrap() < &rep1.val_curve[0],
            "{:?}",
            rep1.val_curve
        );
        let (sock3, _) = train_socket(SocketKind::LinearDecomp, &data, &quick_hyper(), 6).unwrap();
        assert_ne!(sock1.digest, sock3.digest, "different seed, different socket");
    }

    #[test]
    fn mlp_socket_trains_and_predict_shapes_hold() {
        let data = small_data();
        let (sock, rep) = train_socket(SocketKind::Mlp, &data, &quick_hyper(), 7).unwrap();
        assert!(rep.epochs_run >= 1);
        let out = sock.predict(&data.test.samples[0].x).unwrap();
        assert_eq!(out.shape(), &[2, 6]);
        let err = sock
            .predict(&crate::Tensor32::zeros(vec![2, 25]))
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err:?}");
    }

    #[test]
    fn restored_snapshot_is_the_best_val_epoch() {
        let data = small_data();
        let hyper = SocketHyper {
            max_epochs: 12,
            patience: 3,
            ..quick_hyper()
        };
        let (sock, rep) = train_socket(SocketKind::LinearDecomp, &data, &hyper, 5).unwrap();
        let best = rep
            .val_curve
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(rep.best_val, best);
        assert_eq!(
            rep.val_curve[rep.best_epoch - 1], best,
            "best_epoch indexes the minimum"
        );
        // and the frozen params reproduce exactly that loss
        let val = decomp_data(&data, Split::Val, hyper.kernel);
        let heads = match &sock.model {
            Model::Decomp { heads, .. } => heads.clone(),
            _ => unreachable!(),
        };
        let frozen_loss = Trainable::Decomp(heads)
            .full_loss(Some(&val), None)
            .unwrap();
        assert_eq!(frozen_loss, best);
    }

    #[test]
    fn external_kind_cannot_be_trained() {
        let data = small_data();
        let err = train_socket(SocketKind::External, &data, &quick_hyper(), 1).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err:?}");
    }
}
