use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point element type for tensors, tapes and optimizers.
///
/// Everything numeric in this crate is written once, generically, and
/// instantiated at `f32` (the pipeline/file-format type) and `f64` (used by
/// gradient checks and anywhere a high-precision oracle is wanted). The
/// blanket bound set is what the kernels actually need; the two inherent
/// conversions exist because losses and statistics always accumulate in
/// `f64` no matter what `Self` is.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossless widening (both supported types embed in `f64`).
    fn to_f64_(self) -> f64;

    /// Narrowing conversion; rounds to nearest for `f32`.
    fn from_f64_(v: f64) -> Self;

    /// Gaussian error function, evaluated in `f64` and narrowed.
    fn erf_(self) -> Self {
        Self::from_f64_(libm::erf(self.to_f64_()))
    }
}

impl Scalar for f32 {
    #[inline(always)]
    fn to_f64_(self) -> f64 {
        self as f64
    }

    #[inline(always)]
    fn from_f64_(v: f64) -> Self {
        v as f32
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn to_f64_(self) -> f64 {
        self
    }

    #[inline(always)]
    fn from_f64_(v: f64) -> Self {
        v
    }
}
