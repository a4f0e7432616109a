//! Define-by-run reverse-mode differentiation over 2-d batches.
//!
//! A `Tape` is an append-only list of nodes; every operation records its
//! inputs by id and its output value. Because inputs always precede their
//! consumers, a single reverse sweep from the loss node is a valid
//! topological traversal. Tapes are built fresh for each training step and
//! `backward` borrows immutably, so a tape can be differentiated any number
//! of times with identical results.

use super::ops;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<F: Scalar> {
    Leaf,
    /// y = x · wᵀ + b, with x (R×I), w (O×I), b (O)
    Dense { x: NodeId, w: NodeId, b: NodeId },
    Gelu { x: NodeId },
    LayerNorm {
        x: NodeId,
        cache: ops::LayerNormCache<F>,
    },
    Mul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// Scalar MSE against a constant target (targets never need gradients).
    Mse { pred: NodeId, target: Tensor<F> },
    /// Scalar mean of scalar nodes — the multi-head loss combiner.
    MeanScalars { parts: Vec<NodeId> },
}

#[derive(Debug)]
struct Node<F: Scalar> {
    value: Tensor<F>,
    op: Op<F>,
}

#[derive(Debug, Default)]
pub struct Tape<F: Scalar> {
    nodes: Vec<Node<F>>,
}

/// Gradients of one backward sweep, keyed by node id. Nodes the loss never
/// reached have no entry; `take_or_zeros` materializes the exact-zero
/// gradient such a parameter is owed.
#[derive(Debug)]
pub struct Gradients<F: Scalar> {
    grads: Vec<Option<Tensor<F>>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<F>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take_or_zeros(&mut self, id: NodeId, shape: &[usize]) -> Tensor<F> {
        match self.grads.get_mut(id.0).and_then(|g| g.take()) {
            Some(g) => g,
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<F>, op: Op<F>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId, role: &str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::State(format!(
                "{role}: node id {} does not belong to this tape (len {})",
                id.0,
                self.nodes.len()
            )));
        }
        Ok(())
    }

    /// Records an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor<F>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(x, "dense x")?;
        self.check(w, "dense w")?;
        self.check(b, "dense b")?;
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (rows, in_dim) = (xv.rows(), xv.row_width());
        let (out_dim, w_in) = (wv.rows(), wv.row_width());
        if w_in != in_dim || bv.numel() != out_dim {
            return Err(Error::Shape(format!(
                "dense: x {:?}, w {:?}, b {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let mut out = vec![F::zero(); rows * out_dim];
        ops::dense_forward(xv.data(), rows, in_dim, wv.data(), out_dim, bv.data(), &mut out);
        Ok(self.push(
            Tensor::raw(vec![rows, out_dim], out),
            Op::Dense { x, w, b },
        ))
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        self.check(x, "gelu")?;
        let xv = self.value(x);
        let mut out = vec![F::zero(); xv.numel()];
        ops::gelu_slice(xv.data(), &mut out);
        Ok(self.push(Tensor::raw(xv.shape().to_vec(), out), Op::Gelu { x }))
    }

    pub fn layer_norm_rows(&mut self, x: NodeId, eps: f64) -> Result<NodeId> {
        self.check(x, "layer_norm")?;
        if eps.is_nan() || eps <= 0.0 {
            return Err(Error::Numeric(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let xv = self.value(x);
        let (rows, width) = (xv.rows(), xv.row_width());
        if width == 0 {
            return Err(Error::Shape("layer_norm over empty rows".into()));
        }
        let mut out = vec![F::zero(); xv.numel()];
        let cache = ops::layer_norm_rows(xv.data(), rows, width, eps, &mut out);
        Ok(self.push(
            Tensor::raw(xv.shape().to_vec(), out),
            Op::LayerNorm { x, cache },
        ))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "mul a")?;
        self.check(b, "mul b")?;
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Shape(format!(
                "mul: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out: Vec<F> = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        Ok(self.push(Tensor::raw(av.shape().to_vec(), out), Op::Mul { a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a, "add a")?;
        self.check(b, "add b")?;
        let (av, bv) = (self.value(a), self.value(b));
        if !av.same_shape(bv) {
            return Err(Error::Shape(format!(
                "add: {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let out: Vec<F> = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        Ok(self.push(Tensor::raw(av.shape().to_vec(), out), Op::Add { a, b }))
    }

    /// MSE against a constant target; accumulates in f64, yields a scalar
    /// node.
    pub fn mse(&mut self, pred: NodeId, target: &Tensor<F>) -> Result<NodeId> {
        self.check(pred, "mse")?;
        let pv = self.value(pred);
        if !pv.same_shape(target) {
            return Err(Error::Shape(format!(
                "mse: prediction {:?} vs target {:?}",
                pv.shape(),
                target.shape()
            )));
        }
        if pv.numel() == 0 {
            return Err(Error::Shape("mse over zero elements".into()));
        }
        let mut acc = 0.0f64;
        for (&p, &t) in pv.data().iter().zip(target.data()) {
            let d = p.to_f64_() - t.to_f64_();
            acc += d * d;
        }
        let value = Tensor::raw(vec![1], vec![F::from_f64_(acc / pv.numel() as f64)]);
        Ok(self.push(
            value,
            Op::Mse {
                pred,
                target: target.clone(),
            },
        ))
    }

    pub fn mean_scalars(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Shape("mean_scalars of zero nodes".into()));
        }
        let mut acc = 0.0f64;
        for &p in parts {
            self.check(p, "mean_scalars part")?;
            let v = self.value(p);
            if v.numel() != 1 {
                return Err(Error::Shape(format!(
                    "mean_scalars: node has shape {:?}, want scalar",
                    v.shape()
                )));
            }
            acc += v.data()[0].to_f64_();
        }
        let value = Tensor::raw(vec![1], vec![F::from_f64_(acc / parts.len() as f64)]);
        Ok(self.push(
            value,
            Op::MeanScalars {
                parts: parts.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss node. Returns per-node gradients;
    /// parameters the loss cannot reach simply have none (their gradient is
    /// exactly zero).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<F>> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward on an empty tape".into()));
        }
        self.check(loss, "backward loss")?;
        if self.value(loss).numel() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar node of shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<F>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::raw(vec![1], vec![F::one()]));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Dense { x, w, b } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let (rows, in_dim) = (xv.rows(), xv.row_width());
                    let out_dim = wv.rows();
                    {
                        let dx = self.grad_slot(&mut grads, *x);
                        ops::dense_backward_input(
                            g.data(), rows, out_dim, wv.data(), in_dim, dx.data_mut(),
                        );
                    }
                    // dw and db share one pass over the batch
                    let mut dw = grads[w.0]
                        .take()
                        .unwrap_or_else(|| Tensor::zeros(wv.shape().to_vec()));
                    let mut db = grads[b.0]
                        .take()
                        .unwrap_or_else(|| Tensor::zeros(self.value(*b).shape().to_vec()));
                    ops::dense_backward_params(
                        g.data(), rows, out_dim, xv.data(), in_dim,
                        dw.data_mut(), db.data_mut(),
                    );
                    grads[w.0] = Some(dw);
                    grads[b.0] = Some(db);
                }
                Op::Gelu { x } => {
                    let xv = self.value(*x);
                    let dx = self.grad_slot(&mut grads, *x);
                    for ((d, &gi), &xi) in dx.data_mut().iter_mut().zip(g.data()).zip(xv.data()) {
                        *d += gi * ops::gelu_grad(xi);
                    }
                }
                Op::LayerNorm { x, cache } => {
                    let y = &node.value;
                    let (rows, width) = (y.rows(), y.row_width());
                    let dx = self.grad_slot(&mut grads, *x);
                    ops::layer_norm_backward(g.data(), y.data(), cache, rows, width, dx.data_mut());
                }
                Op::Mul { a, b } => {
                    let bv = self.value(*b).data().to_vec();
                    {
                        let da = self.grad_slot(&mut grads, *a);
                        for ((d, &gi), &bi) in da.data_mut().iter_mut().zip(g.data()).zip(&bv) {
                            *d += gi * bi;
                        }
                    }
                    let av = self.value(*a).data();
                    let db = self.grad_slot(&mut grads, *b);
                    for ((d, &gi), &ai) in db.data_mut().iter_mut().zip(g.data()).zip(av) {
                        *d += gi * ai;
                    }
                }
                Op::Add { a, b } => {
                    {
                        let da = self.grad_slot(&mut grads, *a);
                        for (d, &gi) in da.data_mut().iter_mut().zip(g.data()) {
                            *d += gi;
                        }
                    }
                    let db = self.grad_slot(&mut grads, *b);
                    for (d, &gi) in db.data_mut().iter_mut().zip(g.data()) {
                        *d += gi;
                    }
                }
                Op::Mse { pred, target } => {
                    let gs = g.data()[0];
                    let pv = self.value(*pred);
                    let coeff = F::from_f64_(2.0 / pv.numel() as f64) * gs;
                    let pv_data = pv.data().to_vec();
                    let dp = self.grad_slot(&mut grads, *pred);
                    for ((d, &p), &t) in dp.data_mut().iter_mut().zip(&pv_data).zip(target.data())
                    {
                        *d += coeff * (p - t);
                    }
                }
                Op::MeanScalars { parts } => {
                    let share = g.data()[0] * F::from_f64_(1.0 / parts.len() as f64);
                    for &p in parts {
                        let dp = self.grad_slot(&mut grads, p);
                        dp.data_mut()[0] += share;
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn grad_slot<'a>(
        &self,
        grads: &'a mut [Option<Tensor<F>>],
        id: NodeId,
    ) -> &'a mut Tensor<F> {
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.nodes[id.0].value.shape().to_vec()));
        }
        slot.as_mut().unwrap()
    }
}
