//! Dense 4-D tensor in batch-channel-height-width order, plus the convolution
//! descriptor shared by every conv kernel.
//!
//! Element math runs through `f64` (see [`Scalar`]) so that the `f32` and `f64`
//! instantiations of every kernel compute the identical formula; reductions
//! accumulate in `f64` regardless of the element type.

use crate::error::{Error, Result};
use std::fmt;

/// Element type a tensor can hold. `f32` is the storage type used by the file
/// formats and the fusion modules; `f64` instantiations back the
/// finite-difference gradient oracle.
pub trait Scalar:
    Copy + Clone + PartialEq + PartialOrd + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn to_bits_u64(self) -> u64;
    fn is_finite(self) -> bool;
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Dense row-major 4-D array with extents `[batch, channels, height, width]`.
///
/// Invariants: every extent is at least 1 and the buffer length equals the
/// product of the extents.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from extents and a row-major buffer.
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!("zero extent in {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "buffer length {} does not match extents {dims:?} (need {numel})",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        let numel = dims.iter().product();
        Tensor { dims, data: vec![T::ZERO; numel] }
    }

    pub fn full(dims: [usize; 4], value: T) -> Self {
        let numel = dims.iter().product();
        Tensor { dims, data: vec![value; numel] }
    }

    /// Fills element (n, c, h, w) from a function over its coordinates.
    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut out = Tensor::zeros(dims);
        let [bn, c, h, w] = dims;
        let mut i = 0;
        for n in 0..bn {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out.data[i] = f(n, ch, y, x);
                        i += 1;
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.dims[2]
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.dims[3]
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Flat index of (n, c, h, w).
    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + h) * self.dims[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.idx(n, c, h, w);
        self.data[i] = v;
    }

    /// Same buffer under new extents; the element count must match.
    pub fn reshaped(&self, dims: [usize; 4]) -> Result<Self> {
        Tensor::new(dims, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Re-types the elements, e.g. widening `f32` values to `f64` for the
    /// gradient oracle.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Exact bit-level equality (distinguishes -0.0 from 0.0, unlike `==`).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }

    /// Largest relative elementwise difference: |a-b| / max(|a|, |b|), with
    /// exactly-equal elements contributing zero.
    pub fn max_rel_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims, "max_rel_diff on mismatched shapes");
        let mut worst = 0.0f64;
        for (a, b) in self.data.iter().zip(other.data.iter()) {
            let (a, b) = (a.to_f64(), b.to_f64());
            let diff = (a - b).abs();
            if diff == 0.0 {
                continue;
            }
            let denom = a.abs().max(b.abs());
            worst = worst.max(diff / denom);
        }
        worst
    }
}

/// Pool aggregation mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

/// Channel-axis reduction mode (per spatial position).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceMode {
    Mean,
    Max,
}

/// Elementwise binary operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

/// Pointwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Gelu,
    Silu,
    Hardswish,
}

/// Batch-norm statistics source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Shape and grouping descriptor for 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        has_bias: bool,
    ) -> Result<Self> {
        let spec = ConvSpec {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            stride,
            padding,
            groups,
            has_bias,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 1x1 convolution mixing `in_channels` into `out_channels`.
    pub fn pointwise(in_channels: usize, out_channels: usize, has_bias: bool) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h: 1,
            kernel_w: 1,
            stride: 1,
            padding: 0,
            groups: 1,
            has_bias,
        }
    }

    /// 3x3 depthwise convolution (groups == channels), padding 1.
    pub fn depthwise3x3(channels: usize, has_bias: bool) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
            groups: channels,
            has_bias,
        }
    }

    /// Dense 3x3 convolution, padding 1.
    pub fn conv3x3(in_channels: usize, out_channels: usize, has_bias: bool) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_h: 3,
            kernel_w: 3,
            stride: 1,
            padding: 1,
            groups: 1,
            has_bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0
            || self.out_channels == 0
            || self.kernel_h == 0
            || self.kernel_w == 0
            || self.stride == 0
            || self.groups == 0
        {
            return Err(Error::Config(format!("conv extents must be positive: {self:?}")));
        }
        if self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return Err(Error::Config(format!(
                "channels ({} -> {}) not divisible by groups {}",
                self.in_channels, self.out_channels, self.groups
            )));
        }
        Ok(())
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.in_channels == self.out_channels
    }

    /// Expected weight extents: (out, in/groups, kh, kw).
    pub fn weight_dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels / self.groups, self.kernel_h, self.kernel_w]
    }

    /// Bias is stored as a (1, out, 1, 1) tensor.
    pub fn bias_dims(&self) -> [usize; 4] {
        [1, self.out_channels, 1, 1]
    }

    /// Output spatial extent for one axis under the padded-stride formula.
    pub fn out_extent(&self, input: usize, kernel: usize) -> Result<usize> {
        let padded = input + 2 * self.padding;
        if padded < kernel {
            return Err(Error::Shape(format!(
                "kernel {kernel} exceeds padded input extent {padded}"
            )));
        }
        let out = (padded - kernel) / self.stride + 1;
        if out == 0 {
            return Err(Error::Shape("convolution output extent would be < 1".into()));
        }
        Ok(out)
    }
}
