//! Forward implementations of every primitive the fusion modules compose.
//!
//! All kernels are pure functions over immutable tensors and run on the
//! sequential reference path: a fixed loop order with `f64` accumulation, so
//! identical inputs produce bit-identical outputs across runs.

use crate::error::{Error, Result};
use crate::tensor::{Activation, BinaryOp, ConvSpec, PoolMode, ReduceMode, Scalar, Tensor};

/// Cross-correlation 2-D convolution (no kernel flip), grouped channels.
///
/// Weight extents are (out, in/groups, kh, kw); bias, when present, is a
/// (1, out, 1, 1) vector.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    spec: &ConvSpec,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let [n, c, h, w] = input.dims();
    if c != spec.in_channels {
        return Err(Error::Config(format!(
            "input has {c} channels, conv expects {}",
            spec.in_channels
        )));
    }
    if weight.dims() != spec.weight_dims() {
        return Err(Error::Config(format!(
            "weight dims {:?} do not match spec {:?}",
            weight.dims(),
            spec.weight_dims()
        )));
    }
    if let Some(b) = bias {
        if b.numel() != spec.out_channels {
            return Err(Error::Config(format!(
                "bias length {} does not match out_channels {}",
                b.numel(),
                spec.out_channels
            )));
        }
    }
    let oh = spec.out_extent(h, spec.kernel_h)?;
    let ow = spec.out_extent(w, spec.kernel_w)?;
    let icg = spec.in_channels / spec.groups;
    let ocg = spec.out_channels / spec.groups;

    let mut out = Tensor::zeros([n, spec.out_channels, oh, ow]);
    for ni in 0..n {
        for g in 0..spec.groups {
            for ocl in 0..ocg {
                let oc = g * ocg + ocl;
                let b = bias.map_or(0.0, |b| b.data()[oc].to_f64());
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b;
                        for icl in 0..icg {
                            let ic = g * icg + icl;
                            for ky in 0..spec.kernel_h {
                                let iy = (oy * spec.stride + ky) as isize - spec.padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..spec.kernel_w {
                                    let ix =
                                        (ox * spec.stride + kx) as isize - spec.padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    let xv = input.at(ni, ic, iy as usize, ix as usize).to_f64();
                                    let wv = weight.at(oc, icl, ky, kx).to_f64();
                                    acc += xv * wv;
                                }
                            }
                        }
                        out.set(ni, oc, oy, ox, T::from_f64(acc));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// 1-D convolution across the channel-descriptor axis with same-length
/// padding. Input is shaped (N, 1, C, 1); the weight is a (1, 1, 1, k) tap
/// vector with k odd; bias is a single value.
pub fn conv1d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let [n, one, len, tail] = input.dims();
    if one != 1 || tail != 1 {
        return Err(Error::Shape(format!(
            "conv1d expects a (N, 1, C, 1) descriptor, got {:?}",
            input.dims()
        )));
    }
    let k = weight.numel();
    if weight.dims()[0] != 1 || weight.dims()[1] != 1 || weight.dims()[2] != 1 {
        return Err(Error::Config(format!(
            "conv1d weight must be (1, 1, 1, k), got {:?}",
            weight.dims()
        )));
    }
    if k % 2 == 0 {
        return Err(Error::Config(format!("conv1d kernel size {k} must be odd")));
    }
    if let Some(b) = bias {
        if b.numel() != 1 {
            return Err(Error::Config("conv1d bias must hold a single value".into()));
        }
    }
    let half = (k - 1) / 2;
    let b = bias.map_or(0.0, |b| b.data()[0].to_f64());
    let mut out = Tensor::zeros(input.dims());
    for ni in 0..n {
        for p in 0..len {
            let mut acc = b;
            for j in 0..k {
                let q = p as isize + j as isize - half as isize;
                if q < 0 || q >= len as isize {
                    continue;
                }
                acc += input.at(ni, 0, q as usize, 0).to_f64() * weight.data()[j].to_f64();
            }
            out.set(ni, 0, p, 0, T::from_f64(acc));
        }
    }
    Ok(out)
}

/// Bin edges for adaptive pooling: bin i covers [floor(i*in/out), ceil((i+1)*in/out)).
#[inline]
pub fn pool_bin(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = (i * input) / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

/// Adaptive average/max pooling to an (out_h, out_w) grid.
pub fn adaptive_pool<T: Scalar>(
    input: &Tensor<T>,
    out_h: usize,
    out_w: usize,
    mode: PoolMode,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims();
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("pool output extents must be positive".into()));
    }
    if out_h > h || out_w > w {
        return Err(Error::Shape(format!(
            "pool output ({out_h}, {out_w}) exceeds input ({h}, {w})"
        )));
    }
    let mut out = Tensor::zeros([n, c, out_h, out_w]);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..out_h {
                let (y0, y1) = pool_bin(oy, h, out_h);
                for ox in 0..out_w {
                    let (x0, x1) = pool_bin(ox, w, out_w);
                    let v = match mode {
                        PoolMode::Avg => {
                            let mut acc = 0.0f64;
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    acc += input.at(ni, ci, y, x).to_f64();
                                }
                            }
                            acc / ((y1 - y0) * (x1 - x0)) as f64
                        }
                        PoolMode::Max => {
                            let mut best = f64::NEG_INFINITY;
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    let v = input.at(ni, ci, y, x).to_f64();
                                    if v > best {
                                        best = v;
                                    }
                                }
                            }
                            best
                        }
                    };
                    out.set(ni, ci, oy, ox, T::from_f64(v));
                }
            }
        }
    }
    Ok(out)
}

/// Per-position reduction across the channel axis, producing (N, 1, H, W).
pub fn channel_reduce<T: Scalar>(input: &Tensor<T>, mode: ReduceMode) -> Tensor<T> {
    let [n, c, h, w] = input.dims();
    let mut out = Tensor::zeros([n, 1, h, w]);
    for ni in 0..n {
        for y in 0..h {
            for x in 0..w {
                let v = match mode {
                    ReduceMode::Mean => {
                        let mut acc = 0.0f64;
                        for ci in 0..c {
                            acc += input.at(ni, ci, y, x).to_f64();
                        }
                        acc / c as f64
                    }
                    ReduceMode::Max => {
                        let mut best = f64::NEG_INFINITY;
                        for ci in 0..c {
                            best = best.max(input.at(ni, ci, y, x).to_f64());
                        }
                        best
                    }
                };
                out.set(ni, 0, y, x, T::from_f64(v));
            }
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid_f64(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standard Gaussian CDF; the exact (erf-based) GELU building block.
#[inline]
pub(crate) fn gauss_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Standard Gaussian density.
#[inline]
pub(crate) fn gauss_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[inline]
pub(crate) fn activation_f64(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Sigmoid => sigmoid_f64(x),
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Gelu => x * gauss_cdf(x),
        Activation::Silu => x * sigmoid_f64(x),
        Activation::Hardswish => x * (x + 3.0).clamp(0.0, 6.0) / 6.0,
    }
}

#[inline]
pub(crate) fn activation_grad_f64(kind: Activation, x: f64, y: f64) -> f64 {
    match kind {
        Activation::Sigmoid => y * (1.0 - y),
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Gelu => gauss_cdf(x) + x * gauss_pdf(x),
        Activation::Silu => {
            let s = sigmoid_f64(x);
            s * (1.0 + x * (1.0 - s))
        }
        Activation::Hardswish => {
            if x <= -3.0 {
                0.0
            } else if x >= 3.0 {
                1.0
            } else {
                (2.0 * x + 3.0) / 6.0
            }
        }
    }
}

/// Elementwise nonlinearity. GELU uses the exact Gaussian-CDF form.
pub fn activation<T: Scalar>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    input.map(|v| T::from_f64(activation_f64(kind, v.to_f64())))
}

/// Per-channel batch statistics over (N, H, W): population mean and variance,
/// each as a (1, C, 1, 1) tensor.
pub fn batch_stats<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = input.dims();
    let m = (n * h * w) as f64;
    let mut mean = Tensor::zeros([1, c, 1, 1]);
    let mut var = Tensor::zeros([1, c, 1, 1]);
    for ci in 0..c {
        let mut acc = 0.0f64;
        for ni in 0..n {
            for y in 0..h {
                for x in 0..w {
                    acc += input.at(ni, ci, y, x).to_f64();
                }
            }
        }
        let mu = acc / m;
        let mut sq = 0.0f64;
        for ni in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let d = input.at(ni, ci, y, x).to_f64() - mu;
                    sq += d * d;
                }
            }
        }
        mean.data_mut()[ci] = T::from_f64(mu);
        var.data_mut()[ci] = T::from_f64(sq / m);
    }
    (mean, var)
}

/// Normalizes with the given per-channel statistics: gamma * (x - mean) /
/// sqrt(var + eps) + beta. All parameter vectors are (1, C, 1, 1).
pub fn batch_norm_apply<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mean: &Tensor<T>,
    var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims();
    for (name, t) in [("gamma", gamma), ("beta", beta), ("mean", mean), ("var", var)] {
        if t.numel() != c {
            return Err(Error::Config(format!(
                "batch-norm {name} has {} values, expected {c}",
                t.numel()
            )));
        }
    }
    if var.data().iter().any(|v| v.to_f64() < 0.0) {
        return Err(Error::Data("negative running variance".into()));
    }
    let mut out = Tensor::zeros(input.dims());
    for ni in 0..n {
        for ci in 0..c {
            let mu = mean.data()[ci].to_f64();
            let inv = 1.0 / (var.data()[ci].to_f64() + eps).sqrt();
            let g = gamma.data()[ci].to_f64();
            let b = beta.data()[ci].to_f64();
            for y in 0..h {
                for x in 0..w {
                    let v = (input.at(ni, ci, y, x).to_f64() - mu) * inv * g + b;
                    out.set(ni, ci, y, x, T::from_f64(v));
                }
            }
        }
    }
    Ok(out)
}

/// Batch normalization: infer mode normalizes with
/// the running statistics; train mode normalizes with batch statistics and
/// folds them into the running statistics with the given momentum.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    mode: crate::tensor::BnMode,
    eps: f64,
    momentum: f64,
) -> Result<Tensor<T>> {
    match mode {
        crate::tensor::BnMode::Infer => {
            batch_norm_apply(input, gamma, beta, running_mean, running_var, eps)
        }
        crate::tensor::BnMode::Train => {
            let (mean, var) = batch_stats(input);
            let out = batch_norm_apply(input, gamma, beta, &mean, &var, eps)?;
            for i in 0..running_mean.numel() {
                let rm = running_mean.data()[i].to_f64();
                let rv = running_var.data()[i].to_f64();
                running_mean.data_mut()[i] =
                    T::from_f64((1.0 - momentum) * rm + momentum * mean.data()[i].to_f64());
                running_var.data_mut()[i] =
                    T::from_f64((1.0 - momentum) * rv + momentum * var.data()[i].to_f64());
            }
            Ok(out)
        }
    }
}

/// Nearest-neighbour upsampling: each cell becomes a factor x factor block.
pub fn upsample_nearest<T: Scalar>(input: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    if factor == 0 {
        return Err(Error::Config("upsample factor must be >= 1".into()));
    }
    let [n, c, h, w] = input.dims();
    let mut out = Tensor::zeros([n, c, h * factor, w * factor]);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h * factor {
                for x in 0..w * factor {
                    out.set(ni, ci, y, x, input.at(ni, ci, y / factor, x / factor));
                }
            }
        }
    }
    Ok(out)
}

/// Divides each (n, h, w) channel vector by max(its L2 norm, eps).
pub fn l2_normalize_channels<T: Scalar>(input: &Tensor<T>, eps: f64) -> Tensor<T> {
    let [n, c, h, w] = input.dims();
    let mut out = Tensor::zeros(input.dims());
    for ni in 0..n {
        for y in 0..h {
            for x in 0..w {
                let mut sq = 0.0f64;
                for ci in 0..c {
                    let v = input.at(ni, ci, y, x).to_f64();
                    sq += v * v;
                }
                let denom = sq.sqrt().max(eps);
                for ci in 0..c {
                    out.set(ni, ci, y, x, T::from_f64(input.at(ni, ci, y, x).to_f64() / denom));
                }
            }
        }
    }
    out
}

/// Population variance of each channel over its H*W spatial elements,
/// returned as (N, C, 1, 1).
pub fn channel_variance<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = input.dims();
    let m = (h * w) as f64;
    let mut out = Tensor::zeros([n, c, 1, 1]);
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0f64;
            for y in 0..h {
                for x in 0..w {
                    acc += input.at(ni, ci, y, x).to_f64();
                }
            }
            let mu = acc / m;
            let mut sq = 0.0f64;
            for y in 0..h {
                for x in 0..w {
                    let d = input.at(ni, ci, y, x).to_f64() - mu;
                    sq += d * d;
                }
            }
            out.set(ni, ci, 0, 0, T::from_f64(sq / m));
        }
    }
    out
}

/// Broadcast result extents: each axis must match or be 1 on one side.
pub fn broadcast_dims(a: [usize; 4], b: [usize; 4]) -> Result<[usize; 4]> {
    let mut out = [0usize; 4];
    for i in 0..4 {
        out[i] = if a[i] == b[i] {
            a[i]
        } else if a[i] == 1 {
            b[i]
        } else if b[i] == 1 {
            a[i]
        } else {
            return Err(Error::Shape(format!("cannot broadcast {a:?} with {b:?}")));
        };
    }
    Ok(out)
}

/// Clamps a broadcast coordinate: axes of extent 1 always read index 0.
#[inline]
fn bidx(coord: usize, extent: usize) -> usize {
    if extent == 1 {
        0
    } else {
        coord
    }
}

/// Elementwise add/mul with unit-extent broadcasting on any axis.
pub fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: BinaryOp) -> Result<Tensor<T>> {
    let dims = broadcast_dims(a.dims(), b.dims())?;
    let [n, c, h, w] = dims;
    let (ad, bd) = (a.dims(), b.dims());
    let mut out = Tensor::zeros(dims);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let av = a
                        .at(bidx(ni, ad[0]), bidx(ci, ad[1]), bidx(y, ad[2]), bidx(x, ad[3]))
                        .to_f64();
                    let bv = b
                        .at(bidx(ni, bd[0]), bidx(ci, bd[1]), bidx(y, bd[2]), bidx(x, bd[3]))
                        .to_f64();
                    let v = match op {
                        BinaryOp::Add => av + bv,
                        BinaryOp::Mul => av * bv,
                    };
                    out.set(ni, ci, y, x, T::from_f64(v));
                }
            }
        }
    }
    Ok(out)
}

/// Sums a full-shape gradient down to a broadcast operand's extents.
pub fn reduce_to_shape<T: Scalar>(grad: &Tensor<T>, target: [usize; 4]) -> Tensor<T> {
    let [n, c, h, w] = grad.dims();
    let mut acc = vec![0.0f64; target.iter().product()];
    let t = Tensor::<T>::zeros(target);
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let i = t.idx(bidx(ni, target[0]), bidx(ci, target[1]), bidx(y, target[2]), bidx(x, target[3]));
                    acc[i] += grad.at(ni, ci, y, x).to_f64();
                }
            }
        }
    }
    let mut out = Tensor::zeros(target);
    for (o, v) in out.data_mut().iter_mut().zip(acc) {
        *o = T::from_f64(v);
    }
    out
}

/// Splits the channel axis into contiguous ranges with the given sizes.
pub fn channel_split<T: Scalar>(input: &Tensor<T>, sizes: &[usize]) -> Result<Vec<Tensor<T>>> {
    let [n, c, h, w] = input.dims();
    let total: usize = sizes.iter().sum();
    if total != c || sizes.iter().any(|&s| s == 0) {
        return Err(Error::Shape(format!(
            "split sizes {sizes:?} do not partition {c} channels"
        )));
    }
    let mut parts = Vec::with_capacity(sizes.len());
    let mut offset = 0;
    for &size in sizes {
        parts.push(channel_slice(input, offset, size)?);
        offset += size;
    }
    let _ = (n, h, w);
    Ok(parts)
}

/// Copies a contiguous channel range.
pub fn channel_slice<T: Scalar>(
    input: &Tensor<T>,
    offset: usize,
    len: usize,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims();
    if offset + len > c || len == 0 {
        return Err(Error::Shape(format!(
            "channel slice [{offset}, {}) out of range for {c} channels",
            offset + len
        )));
    }
    let mut out = Tensor::zeros([n, len, h, w]);
    for ni in 0..n {
        for ci in 0..len {
            for y in 0..h {
                for x in 0..w {
                    out.set(ni, ci, y, x, input.at(ni, offset + ci, y, x));
                }
            }
        }
    }
    Ok(out)
}

/// Stacks parts along the channel axis in argument order.
pub fn channel_concat<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::Shape("concat of zero parts".into()));
    }
    let [n, _, h, w] = parts[0].dims();
    for p in parts.iter() {
        let [pn, _, ph, pw] = p.dims();
        if pn != n || ph != h || pw != w {
            return Err(Error::Shape(format!(
                "concat parts disagree on batch/spatial extents: {:?} vs {:?}",
                parts[0].dims(),
                p.dims()
            )));
        }
    }
    let c: usize = parts.iter().map(|p| p.channels()).sum();
    let mut out = Tensor::zeros([n, c, h, w]);
    let mut offset = 0;
    for p in parts {
        for ni in 0..n {
            for ci in 0..p.channels() {
                for y in 0..h {
                    for x in 0..w {
                        out.set(ni, offset + ci, y, x, p.at(ni, ci, y, x));
                    }
                }
            }
        }
        offset += p.channels();
    }
    Ok(out)
}

/// Group-transpose channel permutation: with channels viewed as a (G, C/G)
/// matrix, the output enumerates its transpose, so output channel c*G + g
/// holds input channel g*(C/G) + c.
pub fn channel_shuffle<T: Scalar>(input: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = input.dims();
    if groups == 0 || c % groups != 0 {
        return Err(Error::Config(format!(
            "channels {c} not divisible by shuffle groups {groups}"
        )));
    }
    let per = c / groups;
    let mut out = Tensor::zeros(input.dims());
    for ni in 0..n {
        for cj in 0..per {
            for g in 0..groups {
                let dst = cj * groups + g;
                let src = g * per + cj;
                for y in 0..h {
                    for x in 0..w {
                        out.set(ni, dst, y, x, input.at(ni, src, y, x));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Multiplies every element by a constant.
pub fn scale<T: Scalar>(input: &Tensor<T>, factor: f64) -> Tensor<T> {
    input.map(|v| T::from_f64(v.to_f64() * factor))
}
