use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Dense row-major tensor. Rank is dynamic but in practice everything here
/// is rank 1, 2 or 3; the last axis is always the contiguous one.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, rejecting shape/length mismatches and non-finite
    /// elements. Zero-sized axes are legal; the data is then empty.
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite element {} at flat index {} in tensor of shape {:?}",
                data[pos], pos, shape
            )));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor that skips the finiteness scan. Tape
    /// intermediates may legitimately overflow; divergence is caught once,
    /// at the loss, by the training loop.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<F>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self {
            shape,
            data: vec![F::zero(); numel],
        }
    }

    pub fn full(shape: Vec<usize>, value: F) -> Result<Self> {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel])
    }

    /// 1-element scalar wrapper, used for loss nodes.
    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// Number of rows / row width when viewed as a 2-d matrix. Rank-1
    /// tensors count as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 | 1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn row_width(&self) -> usize {
        self.shape.last().copied().unwrap_or(0)
    }

    pub fn row(&self, r: usize) -> &[F] {
        let w = self.row_width();
        &self.data[r * w..(r + 1) * w]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        let w = self.row_width();
        &mut self.data[r * w..(r + 1) * w]
    }

    /// Flat get for tests and small call sites; hot paths use slices.
    pub fn at(&self, idx: &[usize]) -> F {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut flat = 0;
        for (i, &ix) in idx.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            flat = flat * self.shape[i] + ix;
        }
        self.data[flat]
    }

    /// Checks every element is finite; training loops call this on
    /// freshly computed losses/gradients.
    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if let Some(pos) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "{what}: non-finite element at flat index {pos}"
            )));
        }
        Ok(())
    }

    /// Elementwise widening copy (used to replay f32 networks in f64).
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| G::from_f64_(v.to_f64_()))
                .collect(),
        }
    }

    pub(crate) fn same_shape(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_length() {
        let err = Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "got {err:?}");
    }

    #[test]
    fn new_rejects_non_finite() {
        let err = Tensor::<f32>::new(vec![3], vec![1.0, f32::NAN, 2.0]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
        let err = Tensor::<f64>::new(vec![1], vec![f64::INFINITY]).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)), "got {err:?}");
    }

    #[test]
    fn zero_sized_axes_are_legal() {
        let t = Tensor::<f32>::new(vec![0, 4], vec![]).unwrap();
        assert_eq!(t.numel(), 0);
        assert_eq!(t.rows(), 0);
        assert_eq!(t.row_width(), 4);
    }

    #[test]
    fn row_views() {
        let t = Tensor::<f32>::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(t.row(0), &[1., 2., 3.]);
        assert_eq!(t.row(1), &[4., 5., 6.]);
        assert_eq!(t.at(&[1, 2]), 6.0);
    }

    #[test]
    fn rank3_rows_flatten_leading_axes() {
        let t = Tensor::<f32>::zeros(vec![4, 2, 5]);
        assert_eq!(t.rows(), 8);
        assert_eq!(t.row_width(), 5);
    }

    #[test]
    fn cast_round_trips_f32_values() {
        let t = Tensor::<f32>::new(vec![2], vec![0.1, -3.5]).unwrap();
        let up: Tensor<f64> = t.cast();
        let back: Tensor<f32> = up.cast();
        assert_eq!(t, back);
    }
}
