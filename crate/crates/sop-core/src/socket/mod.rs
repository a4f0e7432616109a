//! Sockets: the frozen forecasters whose predictions get calibrated.
//!
//! Two trainable baselines are built in — a per-variable linear model on a
//! moving-average decomposition, and a single flattened MLP — plus an
//! *external* kind that carries no forward function at all, only prediction
//! files exported by some other system. Downstream calibration consumes
//! nothing but `PredictionCache`s, so anything that can produce a
//! (prediction, target) pair per window is a valid socket.

mod train;

pub use train::{train_socket, SocketHyper, SocketTrainReport};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_tensor, tensor_bytes, write_tensor, Split, WindowSet};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::numerics::{DenseParams, Mlp};
use crate::Tensor32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocketKind {
    /// Moving-average trend/seasonal decomposition with one linear map per
    /// component per variable.
    LinearDecomp,
    /// Flatten(n·t) → hidden → GELU → n·s.
    Mlp,
    /// Prediction files only; cannot be trained or queried for a forward.
    External,
}

impl SocketKind {
    pub fn name(self) -> &'static str {
        match self {
            SocketKind::LinearDecomp => "linear_decomp",
            SocketKind::Mlp => "mlp",
            SocketKind::External => "external",
        }
    }
}

/// Seasonal + trend linear maps (each s × t) for one variable.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompHead {
    pub seasonal: DenseParams<f32>,
    pub trend: DenseParams<f32>,
}

#[derive(Debug, Clone)]
pub(crate) enum Model {
    Decomp { kernel: usize, heads: Vec<DecompHead> },
    Mlp(Mlp<f32>),
    External(Vec<PredictionCache>),
}

/// A trained, immutable socket. There is deliberately no way to get a
/// mutable handle on the parameters: calibration trains plugs, never the
/// socket, and the digest pins that down.
#[derive(Debug, Clone)]
pub struct FrozenSocket {
    pub kind: SocketKind,
    pub n: usize,
    pub t: usize,
    pub s: usize,
    /// Fingerprint of the dataset the socket was trained on (or the
    /// external predictions were exported for).
    pub fingerprint: String,
    /// SHA-256 over kind, dims and all parameter tensors.
    pub digest: String,
    pub(crate) model: Model,
}

/// Socket predictions and aligned targets for one split, both (w, n, s).
/// This is the only thing calibration ever reads, which is what makes
/// built-in and external sockets interchangeable.
#[derive(Debug, Clone)]
pub struct PredictionCache {
    pub split: Split,
    pub yhat: Tensor32,
    pub y: Tensor32,
    pub fingerprint: String,
    pub socket_digest: String,
}

impl PredictionCache {
    pub fn new(
        split: Split,
        yhat: Tensor32,
        y: Tensor32,
        fingerprint: String,
        socket_digest: String,
    ) -> Result<Self> {
        if yhat.shape() != y.shape() || yhat.shape().len() != 3 {
            return Err(Error::Shape(format!(
                "prediction cache wants matching rank-3 tensors, got ŷ {:?} vs y {:?}",
                yhat.shape(),
                y.shape()
            )));
        }
        Ok(Self {
            split,
            yhat,
            y,
            fingerprint,
            socket_digest,
        })
    }

    pub fn windows(&self) -> usize {
        self.yhat.shape()[0]
    }

    pub fn n(&self) -> usize {
        self.yhat.shape()[1]
    }

    pub fn s(&self) -> usize {
        self.yhat.shape()[2]
    }

    /// Bounds-checked per-window view of the predictions.
    pub fn window_yhat(&self, index: usize) -> Result<&[f32]> {
        let (w, n, s) = (self.windows(), self.n(), self.s());
        if index >= w {
            return Err(Error::CacheMiss(format!(
                "window {index} not in {} cache of {w} windows",
                self.split.name()
            )));
        }
        Ok(&self.yhat.data()[index * n * s..(index + 1) * n * s])
    }
}

/// Replicate-padded moving average (the trend component); `seasonal` gets
/// the residual. `kernel` may be any length ≥ 1; even kernels pad one more
/// at the back.
pub fn decompose(x: &[f32], kernel: usize, seasonal: &mut [f32], trend: &mut [f32]) {
    let t = x.len();
    debug_assert!(kernel >= 1);
    debug_assert_eq!(seasonal.len(), t);
    debug_assert_eq!(trend.len(), t);
    let front = (kernel - 1) / 2;
    let k = kernel as f64;
    for j in 0..t {
        let mut acc = 0.0f64;
        for i in 0..kernel {
            // index into the padded series, clamped to [0, t)
            let idx = (j + i).saturating_sub(front).min(t - 1);
            acc += x[idx] as f64;
        }
        trend[j] = (acc / k) as f32;
        seasonal[j] = x[j] - trend[j];
    }
}

impl DecompHead {
    /// ŷ = Wₛ·seasonal + bₛ + Wₜ·trend + bₜ for one variable's look-back.
    pub fn apply(&self, seasonal: &Tensor32, trend: &Tensor32) -> Result<Tensor32> {
        let mut out = self.seasonal.apply(seasonal)?;
        let tr = self.trend.apply(trend)?;
        for (o, &v) in out.data_mut().iter_mut().zip(tr.data()) {
            *o += v;
        }
        Ok(out)
    }
}

impl FrozenSocket {
    /// Forward one window (n × t) → (n × s). External sockets have no
    /// forward function, by construction.
    pub fn predict(&self, x: &Tensor32) -> Result<Tensor32> {
        if x.shape() != [self.n, self.t] {
            return Err(Error::Shape(format!(
                "socket expects ({}, {}) input, got {:?}",
                self.n,
                self.t,
                x.shape()
            )));
        }
        match &self.model {
            Model::Decomp { kernel, heads } => {
                let mut out = vec![0.0f32; self.n * self.s];
                let mut xs = vec![0.0f32; self.t];
                let mut xt = vec![0.0f32; self.t];
                for v in 0..self.n {
                    decompose(x.row(v), *kernel, &mut xs, &mut xt);
                    let pred = heads[v].apply(
                        &Tensor32::raw(vec![1, self.t], xs.clone()),
                        &Tensor32::raw(vec![1, self.t], xt.clone()),
                    )?;
                    out[v * self.s..(v + 1) * self.s].copy_from_slice(pred.data());
                }
                Ok(Tensor32::raw(vec![self.n, self.s], out))
            }
            Model::Mlp(mlp) => {
                let flat = Tensor32::raw(vec![1, self.n * self.t], x.data().to_vec());
                let out = mlp.forward(&flat)?;
                Ok(Tensor32::raw(vec![self.n, self.s], out.data().to_vec()))
            }
            Model::External(_) => Err(Error::State(
                "external socket has no forward pass; use its prediction caches".into(),
            )),
        }
    }

    /// The preloaded cache of an external socket.
    pub fn external_cache(&self, split: Split) -> Result<&PredictionCache> {
        match &self.model {
            Model::External(caches) => caches
                .iter()
                .find(|c| c.split == split)
                .ok_or_else(|| {
                    Error::CacheMiss(format!(
                        "external socket has no {} predictions",
                        split.name()
                    ))
                }),
            _ => Err(Error::State(format!(
                "{} socket does not carry preloaded caches",
                self.kind.name()
            ))),
        }
    }

    pub(crate) fn canonical_tensors(&self) -> Vec<(String, &Tensor32)> {
        match &self.model {
            Model::Decomp { heads, .. } => {
                let mut out = Vec::with_capacity(heads.len() * 4);
                for (v, h) in heads.iter().enumerate() {
                    out.push((format!("var{v:03}_seasonal_w"), &h.seasonal.w));
                    out.push((format!("var{v:03}_seasonal_b"), &h.seasonal.b));
                    out.push((format!("var{v:03}_trend_w"), &h.trend.w));
                    out.push((format!("var{v:03}_trend_b"), &h.trend.b));
                }
                out
            }
            Model::Mlp(mlp) => {
                let mut out = Vec::new();
                for (i, (layer, _)) in mlp.layers.iter().enumerate() {
                    out.push((format!("layer{i}_w"), &layer.w));
                    out.push((format!("layer{i}_b"), &layer.b));
                }
                out
            }
            Model::External(_) => Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.canonical_tensors()
            .iter()
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// The architecture knob the digest covers besides dims: the moving-
    /// average kernel (decomp) or hidden width (mlp).
    pub(crate) fn structural(&self) -> usize {
        match &self.model {
            Model::Decomp { kernel, .. } => *kernel,
            Model::Mlp(mlp) => mlp.layers[0].0.out_dim(),
            Model::External(_) => 0,
        }
    }

    /// Recomputes the parameter digest from the in-memory model. Always
    /// equals [`FrozenSocket::digest`]; re-checking it after calibration
    /// is how the suite proves calibration never wrote into the socket.
    pub fn recompute_digest(&self) -> String {
        socket_digest(self.kind, self.n, self.t, self.s, self.structural(), &self.model)
    }
}

/// SHA-256 over kind, dims, structural knobs, and parameter tensors in
/// canonical order (external sockets hash their prediction tensors
/// instead). If two sockets agree here they are bitwise the same model.
pub(crate) fn socket_digest(
    kind: SocketKind,
    n: usize,
    t: usize,
    s: usize,
    structural: usize,
    model: &Model,
) -> String {
    let mut head = Vec::new();
    head.extend_from_slice(kind.name().as_bytes());
    for v in [n, t, s, structural] {
        head.extend_from_slice(&(v as u64).to_le_bytes());
    }
    let mut parts: Vec<Vec<u8>> = vec![head];
    match model {
        Model::Decomp { heads, .. } => {
            for h in heads {
                parts.push(tensor_bytes(&h.seasonal.w));
                parts.push(tensor_bytes(&h.seasonal.b));
                parts.push(tensor_bytes(&h.trend.w));
                parts.push(tensor_bytes(&h.trend.b));
            }
        }
        Model::Mlp(mlp) => {
            for (layer, _) in &mlp.layers {
                parts.push(tensor_bytes(&layer.w));
                parts.push(tensor_bytes(&layer.b));
            }
        }
        Model::External(caches) => {
            for c in caches {
                parts.push(c.split.name().as_bytes().to_vec());
                parts.push(tensor_bytes(&c.yhat));
                parts.push(tensor_bytes(&c.y));
            }
        }
    }
    sha256_hex(parts.iter().map(|p| p.as_slice()))
}

/// Runs the socket over every window of a split and stacks predictions and
/// targets into one cache. Prediction order is window order; nothing here
/// depends on batch size or timing.
pub fn cache_predictions(
    socket: &FrozenSocket,
    windows: &WindowSet,
    split: Split,
    fingerprint: &str,
) -> Result<PredictionCache> {
    if socket.kind == SocketKind::External {
        let cache = socket.external_cache(split)?;
        if cache.fingerprint != fingerprint {
            return Err(Error::Config(format!(
                "external predictions were exported for fingerprint {}, dataset has {}",
                cache.fingerprint, fingerprint
            )));
        }
        return Ok(cache.clone());
    }
    if windows.n != socket.n || windows.t != socket.t || windows.s != socket.s {
        return Err(Error::Shape(format!(
            "socket (n={}, t={}, s={}) vs windows (n={}, t={}, s={})",
            socket.n, socket.t, socket.s, windows.n, windows.t, windows.s
        )));
    }
    let w = windows.len();
    let (n, s) = (socket.n, socket.s);
    let mut yhat = vec![0.0f32; w * n * s];
    let mut y = vec![0.0f32; w * n * s];
    for (i, sample) in windows.samples.iter().enumerate() {
        let pred = socket.predict(&sample.x)?;
        yhat[i * n * s..(i + 1) * n * s].copy_from_slice(pred.data());
        y[i * n * s..(i + 1) * n * s].copy_from_slice(sample.y.data());
    }
    PredictionCache::new(
        split,
        Tensor32::new(vec![w, n, s], yhat)?,
        Tensor32::new(vec![w, n, s], y)?,
        fingerprint.to_string(),
        socket.digest.clone(),
    )
}

// ─── persistence ─────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct SocketManifest {
    kind: SocketKind,
    n: usize,
    t: usize,
    s: usize,
    /// kernel for linear_decomp, hidden width for mlp, 0 for external
    structural: usize,
    fingerprint: String,
    digest: String,
    tensors: Vec<String>,
}

/// Writes `socket.json` plus one tensor file per parameter into `dir`.
pub fn save_socket(dir: &Path, socket: &FrozenSocket) -> Result<()> {
    if socket.kind == SocketKind::External {
        return Err(Error::Config(
            "external sockets are prediction files already; nothing to save".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = socket.canonical_tensors();
    for (name, t) in &tensors {
        write_tensor(&dir.join(format!("{name}.sopt")), t)?;
    }
    let manifest = SocketManifest {
        kind: socket.kind,
        n: socket.n,
        t: socket.t,
        s: socket.s,
        structural: socket.structural(),
        fingerprint: socket.fingerprint.clone(),
        digest: socket.digest.clone(),
        tensors: tensors.into_iter().map(|(n, _)| n).collect(),
    };
    let path = dir.join("socket.json");
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Loads a socket directory and verifies the stored digest against the
/// recomputed one, so silent tensor corruption cannot masquerade as the
/// original model.
pub fn load_socket(dir: &Path) -> Result<FrozenSocket> {
    let manifest_path = dir.join("socket.json");
    let body = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: SocketManifest =
        serde_json::from_str(&body).map_err(|e| Error::json(&manifest_path, e))?;
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for name in &manifest.tensors {
        tensors.push(read_tensor(&dir.join(format!("{name}.sopt")))?);
    }
    let model = match manifest.kind {
        SocketKind::LinearDecomp => {
            if tensors.len() != manifest.n * 4 {
                return Err(Error::Format(format!(
                    "linear_decomp socket wants {} tensors, manifest lists {}",
                    manifest.n * 4,
                    tensors.len()
                )));
            }
            let mut heads = Vec::with_capacity(manifest.n);
            let mut it = tensors.into_iter();
            for _ in 0..manifest.n {
                heads.push(DecompHead {
                    seasonal: DenseParams {
                        w: it.next().unwrap(),
                        b: it.next().unwrap(),
                    },
                    trend: DenseParams {
                        w: it.next().unwrap(),
                        b: it.next().unwrap(),
                    },
                });
            }
            Model::Decomp {
                kernel: manifest.structural,
                heads,
            }
        }
        SocketKind::Mlp => {
            if tensors.len() != 4 {
                return Err(Error::Format(format!(
                    "mlp socket wants 4 tensors, manifest lists {}",
                    tensors.len()
                )));
            }
            let mut it = tensors.into_iter();
            let l0 = DenseParams {
                w: it.next().unwrap(),
                b: it.next().unwrap(),
            };
            let l1 = DenseParams {
                w: it.next().unwrap(),
                b: it.next().unwrap(),
            };
            Model::Mlp(Mlp {
                layers: vec![
                    (l0, crate::numerics::Activation::Gelu),
                    (l1, crate::numerics::Activation::Identity),
                ],
            })
        }
        SocketKind::External => {
            return Err(Error::Format(
                "socket.json declares kind external; load it via load_external_predictions".into(),
            ))
        }
    };
    let digest = socket_digest(
        manifest.kind,
        manifest.n,
        manifest.t,
        manifest.s,
        manifest.structural,
        &model,
    );
    if digest != manifest.digest {
        return Err(Error::Format(format!(
            "socket digest mismatch in {}: manifest {}, recomputed {digest}",
            dir.display(),
            manifest.digest
        )));
    }
    Ok(FrozenSocket {
        kind: manifest.kind,
        n: manifest.n,
        t: manifest.t,
        s: manifest.s,
        fingerprint: manifest.fingerprint,
        digest,
        model,
    })
}

// ─── external prediction files ───────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct PredictionSplitEntry {
    split: Split,
    yhat: String,
    y: String,
    windows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct PredictionManifest {
    n: usize,
    t: usize,
    s: usize,
    fingerprint: String,
    socket_digest: String,
    splits: Vec<PredictionSplitEntry>,
}

/// Exports caches as tensor files plus `predictions.json`, the interchange
/// format any external forecaster can produce.
pub fn export_predictions(
    dir: &Path,
    socket: &FrozenSocket,
    caches: &[PredictionCache],
) -> Result<()> {
    if caches.is_empty() {
        return Err(Error::Config("export with zero caches".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut splits = Vec::with_capacity(caches.len());
    for c in caches {
        let yhat_name = format!("{}_yhat.sopt", c.split.name());
        let y_name = format!("{}_y.sopt", c.split.name());
        write_tensor(&dir.join(&yhat_name), &c.yhat)?;
        write_tensor(&dir.join(&y_name), &c.y)?;
        splits.push(PredictionSplitEntry {
            split: c.split,
            yhat: yhat_name,
            y: y_name,
            windows: c.windows(),
        });
    }
    let manifest = PredictionManifest {
        n: socket.n,
        t: socket.t,
        s: socket.s,
        fingerprint: socket.fingerprint.clone(),
        socket_digest: socket.digest.clone(),
        splits,
    };
    let path = dir.join("predictions.json");
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Loads exported predictions as an external socket. Shape and count
/// mismatches between manifest and tensor files are format errors.
pub fn load_external_predictions(dir: &Path) -> Result<FrozenSocket> {
    let manifest_path = dir.join("predictions.json");
    let body = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: PredictionManifest =
        serde_json::from_str(&body).map_err(|e| Error::json(&manifest_path, e))?;
    let mut caches = Vec::with_capacity(manifest.splits.len());
    for entry in &manifest.splits {
        let yhat = read_tensor(&dir.join(&entry.yhat))?;
        let y = read_tensor(&dir.join(&entry.y))?;
        let want = [entry.windows, manifest.n, manifest.s];
        if yhat.shape() != want || y.shape() != want {
            return Err(Error::Format(format!(
                "{} split: manifest promises {:?}, files hold ŷ {:?} / y {:?}",
                entry.split.name(),
                want,
                yhat.shape(),
                y.shape()
            )));
        }
        caches.push(PredictionCache::new(
            entry.split,
            yhat,
            y,
            manifest.fingerprint.clone(),
            manifest.socket_digest.clone(),
        )?);
    }
    Ok(FrozenSocket {
        kind: SocketKind::External,
        n: manifest.n,
        t: manifest.t,
        s: manifest.s,
        fingerprint: manifest.fingerprint,
        digest: manifest.socket_digest,
        model: Model::External(caches),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decompose_constant_series_has_zero_seasonal() {
        let x = [3.0f32; 10];
        let mut seasonal = [9.0f32; 10];
        let mut trend = [0.0f32; 10];
        decompose(&x, 5, &mut seasonal, &mut trend);
        assert!(trend.iter().all(|&v| v == 3.0));
        assert!(seasonal.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decompose_matches_hand_computation() {
        // x = [0,1,2,3,4], kernel 3, replicate pad → padded [0,0,1,2,3,4,4]
        // trend = [(0+0+1)/3, (0+1+2)/3, (1+2+3)/3, (2+3+4)/3, (3+4+4)/3]
        let x = [0.0f32, 1.0, 2.0, 3.0, 4.0];
        let mut seasonal = [0.0f32; 5];
        let mut trend = [0.0f32; 5];
        decompose(&x, 3, &mut seasonal, &mut trend);
        let want_trend = [1.0 / 3.0, 1.0, 2.0, 3.0, 11.0 / 3.0];
        for (got, want) in trend.iter().zip(want_trend) {
            assert!((got - want).abs() < 1e-6, "{trend:?}");
        }
        for j in 0..5 {
            assert_eq!(seasonal[j], x[j] - trend[j]);
        }
    }

    #[test]
    fn decompose_kernel_one_is_identity_trend() {
        let x = [1.0f32, -2.0, 0.5];
        let mut seasonal = [9.0f32; 3];
        let mut trend = [0.0f32; 3];
        decompose(&x, 1, &mut seasonal, &mut trend);
        assert_eq!(trend, x);
        assert!(seasonal.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cache_window_accessor_misses_cleanly() {
        let yhat = Tensor32::zeros(vec![2, 1, 3]);
        let y = Tensor32::zeros(vec![2, 1, 3]);
        let c = PredictionCache::new(Split::Val, yhat, y, "fp".into(), "dg".into()).unwrap();
        assert!(c.window_yhat(1).is_ok());
        let err = c.window_yhat(2).unwrap_err();
        assert!(matches!(err, Error::CacheMiss(_)), "{err:?}");
    }

    #[test]
    fn cache_rejects_mismatched_tensors() {
        let yhat = Tensor32::zeros(vec![2, 1, 3]);
        let y = Tensor32::zeros(vec![2, 1, 4]);
        assert!(PredictionCache::new(Split::Val, yhat, y, "f".into(), "d".into()).is_err());
    }
}
