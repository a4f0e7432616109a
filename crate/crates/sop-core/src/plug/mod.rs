//! Plugs: small calibrator MLPs, one per target group.
//!
//! A plug sees only the socket's raw prediction slice ŷ for its group. It
//! computes `mlp(ŷ) ⊙ layer_norm(ŷ)` — the MLP reads the raw slice, the
//! gate is the normalized slice — and that product *is* the calibrated
//! forecast for the group. Groups partition either the variable axis or
//! the horizon (step) axis; one group covering everything is the
//! collective baseline.

use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{read_tensor, tensor_bytes, write_tensor};
use crate::error::{Error, Result};
use crate::hash::sha256_hex;
use crate::numerics::{ops, Activation, Mlp, NodeId, Rng, Scalar, Tape, Tensor};
use crate::Tensor32;

pub const DEFAULT_LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// One group = a contiguous run of variables (all their horizon steps).
    Variable,
    /// One group = a contiguous run of horizon steps (all variables).
    Step,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Variable => "variable",
            Axis::Step => "step",
        }
    }
}

/// A partition of the (n × s) target space into contiguous groups along
/// one axis. Groups are disjoint, cover the axis, and are front-loaded:
/// when the axis does not divide evenly, earlier groups take one extra.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlugSpec {
    pub axis: Axis,
    pub n: usize,
    pub s: usize,
    pub groups: Vec<Range<usize>>,
}

impl PlugSpec {
    pub fn plug_count(&self) -> usize {
        self.groups.len()
    }

    pub fn axis_len(&self) -> usize {
        match self.axis {
            Axis::Variable => self.n,
            Axis::Step => self.s,
        }
    }

    /// Flattened input/output width of group `gi`'s plug.
    pub fn group_io(&self, gi: usize) -> usize {
        let g = &self.groups[gi];
        match self.axis {
            Axis::Variable => (g.end - g.start) * self.s,
            Axis::Step => self.n * (g.end - g.start),
        }
    }

    /// True when this is the collective setting: one plug for everything.
    pub fn is_collective(&self) -> bool {
        self.groups.len() == 1
    }
}

/// Splits an axis of length n (variables) or s (steps) into `count`
/// contiguous groups. `count` must lie in [1, axis length]; the error
/// names the violated bound.
pub fn partition(axis: Axis, n: usize, s: usize, count: usize) -> Result<PlugSpec> {
    if n == 0 || s == 0 {
        return Err(Error::Config(format!("partition over empty target space {n}×{s}")));
    }
    let len = match axis {
        Axis::Variable => n,
        Axis::Step => s,
    };
    if count == 0 {
        return Err(Error::Config("plug_count must be ≥ 1".into()));
    }
    if count > len {
        return Err(Error::Config(format!(
            "plug_count {count} exceeds {} axis length {len}",
            axis.name()
        )));
    }
    let base = len / count;
    let extra = len % count;
    let mut groups = Vec::with_capacity(count);
    let mut start = 0;
    for i in 0..count {
        let size = base + usize::from(i < extra);
        groups.push(start..start + size);
        start += size;
    }
    debug_assert_eq!(start, len);
    Ok(PlugSpec { axis, n, s, groups })
}

/// Copies group `gi`'s slice out of a (w × n × s) stack into (w × io).
/// Layout inside a row is variable-major (all steps of a variable before
/// the next variable), matching how plugs were trained.
pub fn extract_group(stack: &Tensor32, spec: &PlugSpec, gi: usize) -> Result<Tensor32> {
    check_stack(stack, spec)?;
    let (w, n, s) = (stack.shape()[0], spec.n, spec.s);
    let io = spec.group_io(gi);
    let g = &spec.groups[gi];
    let mut out = vec![0.0f32; w * io];
    match spec.axis {
        Axis::Variable => {
            let (a, b) = (g.start * s, g.end * s);
            for row in 0..w {
                let src = &stack.data()[row * n * s..(row + 1) * n * s];
                out[row * io..(row + 1) * io].copy_from_slice(&src[a..b]);
            }
        }
        Axis::Step => {
            let glen = g.end - g.start;
            for row in 0..w {
                let src = &stack.data()[row * n * s..(row + 1) * n * s];
                let dst = &mut out[row * io..(row + 1) * io];
                for v in 0..n {
                    dst[v * glen..(v + 1) * glen]
                        .copy_from_slice(&src[v * s + g.start..v * s + g.end]);
                }
            }
        }
    }
    Ok(Tensor32::raw(vec![w, io], out))
}

/// Writes a (w × io) group matrix back into its slice of a (w × n × s)
/// stack — the inverse of `extract_group`.
pub fn scatter_group(
    stack: &mut Tensor32,
    spec: &PlugSpec,
    gi: usize,
    values: &Tensor32,
) -> Result<()> {
    check_stack(stack, spec)?;
    let (w, n, s) = (stack.shape()[0], spec.n, spec.s);
    let io = spec.group_io(gi);
    if values.shape() != [w, io] {
        return Err(Error::Shape(format!(
            "scatter_group: values {:?}, want [{w}, {io}]",
            values.shape()
        )));
    }
    let g = &spec.groups[gi];
    match spec.axis {
        Axis::Variable => {
            let (a, b) = (g.start * s, g.end * s);
            for row in 0..w {
                let dst = &mut stack.data_mut()[row * n * s..(row + 1) * n * s];
                dst[a..b].copy_from_slice(values.row(row));
            }
        }
        Axis::Step => {
            let glen = g.end - g.start;
            for row in 0..w {
                let src = values.row(row);
                let dst = &mut stack.data_mut()[row * n * s..(row + 1) * n * s];
                for v in 0..n {
                    dst[v * s + g.start..v * s + g.end]
                        .copy_from_slice(&src[v * glen..(v + 1) * glen]);
                }
            }
        }
    }
    Ok(())
}

fn check_stack(stack: &Tensor32, spec: &PlugSpec) -> Result<()> {
    let sh = stack.shape();
    if sh.len() != 3 || sh[1] != spec.n || sh[2] != spec.s {
        return Err(Error::Shape(format!(
            "stack {:?} does not match partition over {}×{}",
            sh, spec.n, spec.s
        )));
    }
    Ok(())
}

// ─── the calibrator itself ───────────────────────────────────────────────

/// One calibrator: three affine layers (io→d→d→io, GELU after the first
/// two) gated elementwise by the layer-normalized input.
#[derive(Debug, Clone, PartialEq)]
pub struct Plug<F: Scalar> {
    pub mlp: Mlp<F>,
    pub io: usize,
    pub d: usize,
    pub eps: f64,
}

impl<F: Scalar> Plug<F> {
    pub fn init(io: usize, d: usize, eps: f64, rng: &mut Rng) -> Result<Self> {
        if io == 0 || d == 0 {
            return Err(Error::Config(format!("plug dims must be ≥ 1, got io={io} d={d}")));
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Config(format!("plug layer-norm eps must be > 0, got {eps}")));
        }
        Ok(Self {
            mlp: Mlp::init(
                &[io, d, d, io],
                &[Activation::Gelu, Activation::Gelu, Activation::Identity],
                rng,
            )?,
            io,
            d,
            eps,
        })
    }

    /// Calibrated output for a batch of prediction slices (rows × io):
    /// `mlp(x) ⊙ layer_norm(x)`. A constant row normalizes to zeros, so
    /// its calibrated output is exactly zero.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        if x.row_width() != self.io {
            return Err(Error::Shape(format!(
                "plug expects io {}, got rows of width {}",
                self.io,
                x.row_width()
            )));
        }
        let mut out = self.mlp.forward(x)?;
        let mut gate = vec![F::zero(); x.numel()];
        ops::layer_norm_rows(x.data(), x.rows(), self.io, self.eps, &mut gate);
        for (o, &v) in out.data_mut().iter_mut().zip(&gate) {
            *o *= v;
        }
        Ok(out)
    }

    /// Tape-recorded forward; same math as `forward`, same kernels.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<F>,
        x: NodeId,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        let (mlp_out, param_ids) = self.mlp.forward_on_tape(tape, x)?;
        let gate = tape.layer_norm_rows(x, self.eps)?;
        let out = tape.mul(mlp_out, gate)?;
        Ok((out, param_ids))
    }

    pub fn param_count(&self) -> usize {
        self.mlp.param_count()
    }

    pub fn cast<G: Scalar>(&self) -> Plug<G> {
        Plug {
            mlp: self.mlp.cast(),
            io: self.io,
            d: self.d,
            eps: self.eps,
        }
    }
}

impl Plug<f32> {
    /// SHA-256 over dims, eps and parameters; bitwise identity check.
    pub fn digest(&self) -> String {
        let mut head = Vec::new();
        head.extend_from_slice(b"plug");
        head.extend_from_slice(&(self.io as u64).to_le_bytes());
        head.extend_from_slice(&(self.d as u64).to_le_bytes());
        head.extend_from_slice(&self.eps.to_le_bytes());
        let tensors: Vec<Vec<u8>> = self
            .mlp
            .params()
            .into_iter()
            .map(tensor_bytes)
            .collect();
        let mut parts = vec![head.as_slice()];
        parts.extend(tensors.iter().map(|t| t.as_slice()));
        sha256_hex(parts)
    }
}

/// Exact parameter count of a plug with width `d` on `io` targets
/// (all three layers, biases included).
pub fn plug_param_count(io: usize, d: usize) -> usize {
    (io * d + d) + (d * d + d) + (d * io + io)
}

/// Hidden width for a single collective plug that matches the total
/// parameter budget of `count` per-group plugs of width `d` on
/// `per_plug_io` targets each: the positive root of
/// 2·g·h + h² = count·(2·per_plug_io·d + d²), rounded to nearest.
pub fn parity_width(collective_io: usize, per_plug_io: usize, d: usize, count: usize) -> usize {
    let g = collective_io as f64;
    let budget = count as f64 * (2.0 * per_plug_io as f64 * d as f64 + (d * d) as f64);
    let h = -g + (g * g + budget).sqrt();
    (h.round() as usize).max(1)
}

// ─── plug banks ──────────────────────────────────────────────────────────

/// The full set of plugs for one partition. All plugs share the structural
/// hyper-parameters (d, eps) but own their parameters, and — during
/// calibration — their optimizers and monitors.
#[derive(Debug, Clone)]
pub struct PlugBank<F: Scalar> {
    pub spec: PlugSpec,
    pub d: usize,
    pub eps: f64,
    pub plugs: Vec<Plug<F>>,
}

impl<F: Scalar> PlugBank<F> {
    /// Initializes one plug per group. Plug `i` draws from the stream
    /// derived by ("plug-init", i), so its initial parameters do not
    /// depend on how many other plugs exist or in what order banks are
    /// built — a precondition for sequential ≡ parallel calibration.
    pub fn init(spec: PlugSpec, d: usize, eps: f64, seed: u64) -> Result<Self> {
        let init_root = Rng::new(seed).derive("plug-init");
        let mut plugs = Vec::with_capacity(spec.plug_count());
        for gi in 0..spec.plug_count() {
            let mut rng = init_root.derive_u64(gi as u64);
            plugs.push(Plug::init(spec.group_io(gi), d, eps, &mut rng)?);
        }
        Ok(Self { spec, d, eps, plugs })
    }

    pub fn plug_count(&self) -> usize {
        self.plugs.len()
    }

    pub fn param_count(&self) -> usize {
        self.plugs.iter().map(|p| p.param_count()).sum()
    }
}

impl PlugBank<f32> {
    /// Calibrates a whole prediction stack (w × n × s): every plug forwards
    /// its slice, outputs are scattered back into place. Row chunks bound
    /// peak memory; chunk size cannot affect results because the forward is
    /// row-independent.
    pub fn apply(&self, yhat: &Tensor32) -> Result<Tensor32> {
        check_stack(yhat, &self.spec)?;
        let mut out = Tensor32::zeros(yhat.shape().to_vec());
        for (gi, plug) in self.plugs.iter().enumerate() {
            let x = extract_group(yhat, &self.spec, gi)?;
            let w = x.rows();
            let io = x.row_width();
            let mut cal = vec![0.0f32; w * io];
            let chunk = 512;
            let mut r0 = 0;
            while r0 < w {
                let r1 = (r0 + chunk).min(w);
                let sub = Tensor32::raw(
                    vec![r1 - r0, io],
                    x.data()[r0 * io..r1 * io].to_vec(),
                );
                let res = plug.forward(&sub)?;
                cal[r0 * io..r1 * io].copy_from_slice(res.data());
                r0 = r1;
            }
            scatter_group(&mut out, &self.spec, gi, &Tensor32::raw(vec![w, io], cal))?;
        }
        Ok(out)
    }

    pub fn digests(&self) -> Vec<String> {
        self.plugs.iter().map(|p| p.digest()).collect()
    }
}

// ─── persistence ─────────────────────────────────────────────────────────

#[derive(Debug, Serialize, Deserialize)]
struct BankManifest {
    spec: PlugSpec,
    d: usize,
    eps: f64,
    digests: Vec<String>,
}

/// Saves a bank as `bank.json` plus one directory of tensor files per plug.
pub fn save_bank(dir: &Path, bank: &PlugBank<f32>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, plug) in bank.plugs.iter().enumerate() {
        let pdir = dir.join(format!("plug_{i:03}"));
        fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
        for (j, t) in plug.mlp.params().into_iter().enumerate() {
            let name = format!("{}{}.sopt", if j % 2 == 0 { "w" } else { "b" }, j / 2);
            write_tensor(&pdir.join(name), t)?;
        }
    }
    let manifest = BankManifest {
        spec: bank.spec.clone(),
        d: bank.d,
        eps: bank.eps,
        digests: bank.digests(),
    };
    let path = dir.join("bank.json");
    let body = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, body).map_err(|e| Error::io(&path, e))
}

/// Loads a bank and verifies every plug's digest against the manifest.
pub fn load_bank(dir: &Path) -> Result<PlugBank<f32>> {
    let manifest_path = dir.join("bank.json");
    let body = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: BankManifest =
        serde_json::from_str(&body).map_err(|e| Error::json(&manifest_path, e))?;
    if manifest.digests.len() != manifest.spec.plug_count() {
        return Err(Error::Format(format!(
            "bank manifest lists {} digests for {} groups",
            manifest.digests.len(),
            manifest.spec.plug_count()
        )));
    }
    let mut plugs = Vec::with_capacity(manifest.spec.plug_count());
    for gi in 0..manifest.spec.plug_count() {
        let pdir = dir.join(format!("plug_{gi:03}"));
        let io = manifest.spec.group_io(gi);
        let mut layers = Vec::with_capacity(3);
        let acts = [Activation::Gelu, Activation::Gelu, Activation::Identity];
        for (j, act) in acts.iter().enumerate() {
            let w = read_tensor(&pdir.join(format!("w{j}.sopt")))?;
            let b = read_tensor(&pdir.join(format!("b{j}.sopt")))?;
            layers.push((crate::numerics::DenseParams { w, b }, *act));
        }
        let plug = Plug {
            mlp: Mlp { layers },
            io,
            d: manifest.d,
            eps: manifest.eps,
        };
        if plug.mlp.in_dim() != io || plug.mlp.out_dim() != io {
            return Err(Error::Format(format!(
                "plug {gi}: tensors describe {}→{}, group io is {io}",
                plug.mlp.in_dim(),
                plug.mlp.out_dim()
            )));
        }
        if plug.digest() != manifest.digests[gi] {
            return Err(Error::Format(format!(
                "plug {gi} digest mismatch in {}",
                dir.display()
            )));
        }
        plugs.push(plug);
    }
    Ok(PlugBank {
        spec: manifest.spec,
        d: manifest.d,
        eps: manifest.eps,
        plugs,
    })
}
