use super::ops;
use super::rng::Rng;
use super::scalar::Scalar;
use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Gelu,
}

/// One affine layer, weights stored out_dim × in_dim.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<F: Scalar> {
    pub w: Tensor<F>,
    pub b: Tensor<F>,
}

impl<F: Scalar> DenseParams<F> {
    /// Fan-in uniform init: w ~ U(-1/√in, 1/√in) drawn row-major from the
    /// given stream, bias zero. Draw order is part of the determinism
    /// contract — reordering it would silently change every experiment.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape(format!(
                "dense layer dims must be positive, got {in_dim}→{out_dim}"
            )));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let data: Vec<F> = (0..in_dim * out_dim)
            .map(|_| F::from_f64_(rng.uniform(-bound, bound)))
            .collect();
        Ok(Self {
            w: Tensor::new(vec![out_dim, in_dim], data)?,
            b: Tensor::zeros(vec![out_dim]),
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.row_width()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    /// Plain inference application (same kernels the tape uses).
    pub fn apply(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let (rows, in_dim) = (x.rows(), x.row_width());
        if in_dim != self.in_dim() {
            return Err(Error::Shape(format!(
                "dense apply: input width {in_dim}, layer expects {}",
                self.in_dim()
            )));
        }
        let mut out = vec![F::zero(); rows * self.out_dim()];
        ops::dense_forward(
            x.data(),
            rows,
            in_dim,
            self.w.data(),
            self.out_dim(),
            self.b.data(),
            &mut out,
        );
        Ok(Tensor::raw(vec![rows, self.out_dim()], out))
    }

    pub fn cast<G: Scalar>(&self) -> DenseParams<G> {
        DenseParams {
            w: self.w.cast(),
            b: self.b.cast(),
        }
    }
}

/// A plain feed-forward stack: affine layers with an activation after each
/// (Identity for "none"). Used both as the socket's MLP head and as the
/// body of every plug.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F: Scalar> {
    pub layers: Vec<(DenseParams<F>, Activation)>,
}

impl<F: Scalar> Mlp<F> {
    /// `dims = [in, h1, ..., out]`, `acts` one per layer.
    pub fn init(dims: &[usize], acts: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape(format!(
                "mlp needs at least one layer, got dims {dims:?}"
            )));
        }
        if acts.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "mlp: {} layers but {} activations",
                dims.len() - 1,
                acts.len()
            )));
        }
        let mut layers = Vec::with_capacity(acts.len());
        for (i, &act) in acts.iter().enumerate() {
            layers.push((DenseParams::init(dims[i], dims[i + 1], rng)?, act));
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].0.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().0.out_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|(l, _)| l.w.numel() + l.b.numel())
            .sum()
    }

    /// Parameter tensors in canonical order (w0, b0, w1, b1, ...). The
    /// optimizer, the snapshots and the digests all follow this order.
    pub fn params(&self) -> Vec<&Tensor<F>> {
        self.layers
            .iter()
            .flat_map(|(l, _)| [&l.w, &l.b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        self.layers
            .iter_mut()
            .flat_map(|(l, _)| [&mut l.w, &mut l.b])
            .collect()
    }

    /// Plain inference forward.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut cur = self.layers[0].0.apply(x)?;
        Self::activate(&mut cur, self.layers[0].1);
        for (layer, act) in &self.layers[1..] {
            cur = layer.apply(&cur)?;
            Self::activate(&mut cur, *act);
        }
        Ok(cur)
    }

    fn activate(t: &mut Tensor<F>, act: Activation) {
        if act == Activation::Gelu {
            for v in t.data_mut().iter_mut() {
                *v = ops::gelu(*v);
            }
        }
    }

    /// Records the forward pass on a tape. Returns the output node and the
    /// parameter leaf ids in canonical order, for pairing with
    /// `Gradients::take_or_zeros` after backward.
    pub fn forward_on_tape(&self, tape: &mut Tape<F>, x: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        let mut param_ids = Vec::with_capacity(self.layers.len() * 2);
        let mut cur = x;
        for (layer, act) in &self.layers {
            let w = tape.leaf(layer.w.clone());
            let b = tape.leaf(layer.b.clone());
            param_ids.push(w);
            param_ids.push(b);
            cur = tape.dense(cur, w, b)?;
            if *act == Activation::Gelu {
                cur = tape.gelu(cur)?;
            }
        }
        Ok((cur, param_ids))
    }

    pub fn cast<G: Scalar>(&self) -> Mlp<G> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|(l, a)| (l.cast(), *a))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_bounds_std_and_zero_bias() {
        // U(-1/√100, 1/√100): bound 0.1, std 1/√300 ≈ 0.057735
        let mut rng = Rng::new(5);
        let layer = DenseParams::<f64>::init(100, 200, &mut rng).unwrap();
        let data = layer.w.data();
        assert!(data.iter().all(|&v| v.abs() <= 0.1));
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        let std: f64 =
            (data.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / data.len() as f64).sqrt();
        let want = 0.05773502691896258;
        assert!((std - want).abs() / want < 0.05, "std {std}, want ~{want}");
        assert!(layer.b.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_is_deterministic_per_stream() {
        let a = Mlp::<f32>::init(
            &[4, 8, 2],
            &[Activation::Gelu, Activation::Identity],
            &mut Rng::new(33),
        )
        .unwrap();
        let b = Mlp::<f32>::init(
            &[4, 8, 2],
            &[Activation::Gelu, Activation::Identity],
            &mut Rng::new(33),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_matches_tape_forward() {
        let mut rng = Rng::new(12);
        let mlp = Mlp::<f32>::init(
            &[6, 5, 3],
            &[Activation::Gelu, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::new(
            vec![4, 6],
            (0..24).map(|i| (i as f32) * 0.1 - 1.0).collect(),
        )
        .unwrap();
        let plain = mlp.forward(&x).unwrap();
        let mut tape = Tape::new();
        let xid = tape.leaf(x);
        let (out, _) = mlp.forward_on_tape(&mut tape, xid).unwrap();
        // Bit-identical: both paths run the same kernels in the same order.
        assert_eq!(plain.data(), tape.value(out).data());
    }

    #[test]
    fn forward_matches_hand_oracle() {
        // 2→1→2 with fixed weights; expected values derived independently.
        let mut mlp = Mlp::<f64>::init(
            &[2, 1, 2],
            &[Activation::Gelu, Activation::Identity],
            &mut Rng::new(0),
        )
        .unwrap();
        mlp.layers[0].0.w = Tensor::new(vec![1, 2], vec![0.5, -0.25]).unwrap();
        mlp.layers[0].0.b = Tensor::new(vec![1], vec![0.1]).unwrap();
        mlp.layers[1].0.w = Tensor::new(vec![2, 1], vec![2.0, -1.0]).unwrap();
        mlp.layers[1].0.b = Tensor::new(vec![2], vec![0.3, -0.2]).unwrap();
        let out = mlp
            .forward(&Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap())
            .unwrap();
        assert!((out.data()[0] - 0.4079655674554058).abs() < 1e-15);
        assert!((out.data()[1] + 0.2539827837277029).abs() < 1e-15);
    }

    #[test]
    fn shape_errors_are_reported() {
        let mlp = Mlp::<f32>::init(&[3, 2], &[Activation::Identity], &mut Rng::new(1)).unwrap();
        let bad = Tensor::<f32>::zeros(vec![2, 4]);
        assert!(matches!(mlp.forward(&bad), Err(Error::Shape(_))));
        assert!(Mlp::<f32>::init(&[3], &[], &mut Rng::new(1)).is_err());
        assert!(Mlp::<f32>::init(&[3, 2], &[], &mut Rng::new(1)).is_err());
        assert!(DenseParams::<f32>::init(0, 3, &mut Rng::new(1)).is_err());
    }
}
