//! The four attention operators the fusion modules compose: channel and
//! positional attention (CAM, PAM) for the fusion unit's first stage, and
//! their lightweight counterparts (LCAM, LPAM) for the neck-side block.

use crate::error::{Error, Result};
use crate::tape::{Tape, ValueId};
use crate::tensor::{Activation, ConvSpec, PoolMode, ReduceMode, Scalar, Tensor};

/// Channel attention: a k-tap 1-D convolution over the globally pooled
/// channel descriptor, squashed to a per-channel gate.
#[derive(Clone, Debug)]
pub struct CamParams<T: Scalar = f32> {
    /// (1, 1, 1, k) tap vector, k odd.
    pub weight: Tensor<T>,
    /// Single bias value, stored (1, 1, 1, 1).
    pub bias: Tensor<T>,
}

impl<T: Scalar> CamParams<T> {
    pub fn zeros(kernel: usize) -> Self {
        CamParams {
            weight: Tensor::zeros([1, 1, 1, kernel]),
            bias: Tensor::zeros([1, 1, 1, 1]),
        }
    }

    pub fn kernel_size(&self) -> usize {
        self.weight.width()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size() % 2 == 0 {
            return Err(Error::Config(format!(
                "channel-attention kernel size {} must be odd",
                self.kernel_size()
            )));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> CamParams<U> {
        CamParams { weight: self.weight.cast(), bias: self.bias.cast() }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.weight"), &self.weight);
        f(format!("{prefix}.bias"), &self.bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.weight"), &mut self.weight);
        f(format!("{prefix}.bias"), &mut self.bias);
    }
}

/// Positional attention: separate pointwise convolutions on the
/// width-averaged and height-averaged strips.
#[derive(Clone, Debug)]
pub struct PamParams<T: Scalar = f32> {
    pub h_weight: Tensor<T>,
    pub h_bias: Tensor<T>,
    pub v_weight: Tensor<T>,
    pub v_bias: Tensor<T>,
}

impl<T: Scalar> PamParams<T> {
    pub fn zeros(channels: usize) -> Self {
        PamParams {
            h_weight: Tensor::zeros([channels, channels, 1, 1]),
            h_bias: Tensor::zeros([1, channels, 1, 1]),
            v_weight: Tensor::zeros([channels, channels, 1, 1]),
            v_bias: Tensor::zeros([1, channels, 1, 1]),
        }
    }

    pub fn cast<U: Scalar>(&self) -> PamParams<U> {
        PamParams {
            h_weight: self.h_weight.cast(),
            h_bias: self.h_bias.cast(),
            v_weight: self.v_weight.cast(),
            v_bias: self.v_bias.cast(),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}_h.weight"), &self.h_weight);
        f(format!("{prefix}_h.bias"), &self.h_bias);
        f(format!("{prefix}_v.weight"), &self.v_weight);
        f(format!("{prefix}_v.bias"), &self.v_bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}_h.weight"), &mut self.h_weight);
        f(format!("{prefix}_h.bias"), &mut self.h_bias);
        f(format!("{prefix}_v.weight"), &mut self.v_weight);
        f(format!("{prefix}_v.bias"), &mut self.v_bias);
    }
}

/// Lightweight channel attention: a two-layer bottleneck shared between the
/// average-pool and max-pool branches; the branch sigmoids are summed, so the
/// gate ranges over (0, 2).
#[derive(Clone, Debug)]
pub struct LcamParams<T: Scalar = f32> {
    pub reduce_weight: Tensor<T>,
    pub reduce_bias: Tensor<T>,
    pub expand_weight: Tensor<T>,
    pub expand_bias: Tensor<T>,
    pub ratio: usize,
}

impl<T: Scalar> LcamParams<T> {
    pub fn zeros(channels: usize, ratio: usize) -> Result<Self> {
        if ratio == 0 || channels % ratio != 0 {
            return Err(Error::Config(format!(
                "channels {channels} not divisible by bottleneck ratio {ratio}"
            )));
        }
        let mid = channels / ratio;
        Ok(LcamParams {
            reduce_weight: Tensor::zeros([mid, channels, 1, 1]),
            reduce_bias: Tensor::zeros([1, mid, 1, 1]),
            expand_weight: Tensor::zeros([channels, mid, 1, 1]),
            expand_bias: Tensor::zeros([1, channels, 1, 1]),
            ratio,
        })
    }

    pub fn cast<U: Scalar>(&self) -> LcamParams<U> {
        LcamParams {
            reduce_weight: self.reduce_weight.cast(),
            reduce_bias: self.reduce_bias.cast(),
            expand_weight: self.expand_weight.cast(),
            expand_bias: self.expand_bias.cast(),
            ratio: self.ratio,
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.reduce.weight"), &self.reduce_weight);
        f(format!("{prefix}.reduce.bias"), &self.reduce_bias);
        f(format!("{prefix}.expand.weight"), &self.expand_weight);
        f(format!("{prefix}.expand.bias"), &self.expand_bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.reduce.weight"), &mut self.reduce_weight);
        f(format!("{prefix}.reduce.bias"), &mut self.reduce_bias);
        f(format!("{prefix}.expand.weight"), &mut self.expand_weight);
        f(format!("{prefix}.expand.bias"), &mut self.expand_bias);
    }
}

/// Lightweight positional attention: channel-max and channel-mean maps pass a
/// single 3x3 conv (2 channels in, 1 out) and a sigmoid.
#[derive(Clone, Debug)]
pub struct LpamParams<T: Scalar = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LpamParams<T> {
    pub fn zeros() -> Self {
        LpamParams { weight: Tensor::zeros([1, 2, 3, 3]), bias: Tensor::zeros([1, 1, 1, 1]) }
    }

    pub fn cast<U: Scalar>(&self) -> LpamParams<U> {
        LpamParams { weight: self.weight.cast(), bias: self.bias.cast() }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.conv.weight"), &self.weight);
        f(format!("{prefix}.conv.bias"), &self.bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.conv.weight"), &mut self.weight);
        f(format!("{prefix}.conv.bias"), &mut self.bias);
    }
}

// ── Graph builders ───────────────────────────────────────────────────────

pub struct CamGraph {
    pub out: ValueId,
    /// Per-channel gate, (N, C, 1, 1).
    pub gate: ValueId,
}

/// x ⊙ sigmoid(conv1d(global average pool characteristic)).
pub fn cam_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &CamParams<T>,
    prefix: &str,
) -> Result<CamGraph> {
    p.validate()?;
    let [n, c, _, _] = tape.value(x).dims();
    let w = tape.param(&format!("{prefix}.weight"), p.weight.clone());
    let b = tape.param(&format!("{prefix}.bias"), p.bias.clone());
    let pooled = tape.pool(x, 1, 1, PoolMode::Avg)?;
    let descriptor = tape.reshape(pooled, [n, 1, c, 1])?;
    let mixed = tape.conv1d(descriptor, w, Some(b))?;
    let squashed = tape.act(mixed, Activation::Sigmoid)?;
    let gate = tape.reshape(squashed, [n, c, 1, 1])?;
    let out = tape.mul(x, gate)?;
    Ok(CamGraph { out, gate })
}

pub struct PamGraph {
    pub out: ValueId,
    /// Horizontal gate from the width-averaged strip, (N, C, H, 1).
    pub att_h: ValueId,
    /// Vertical gate from the height-averaged strip, (N, C, 1, W).
    pub att_v: ValueId,
}

/// x ⊙ Att_h(x) ⊙ Att_v(x), each gate a sigmoid of a pointwise conv over the
/// axis-averaged strip.
pub fn pam_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &PamParams<T>,
    prefix: &str,
) -> Result<PamGraph> {
    let [_, c, h, w] = tape.value(x).dims();
    let spec = ConvSpec::pointwise(c, c, true);

    let hw = tape.param(&format!("{prefix}_h.weight"), p.h_weight.clone());
    let hb = tape.param(&format!("{prefix}_h.bias"), p.h_bias.clone());
    let strip_h = tape.pool(x, h, 1, PoolMode::Avg)?;
    let conv_h = tape.conv2d(strip_h, hw, Some(hb), spec)?;
    let att_h = tape.act(conv_h, Activation::Sigmoid)?;

    let vw = tape.param(&format!("{prefix}_v.weight"), p.v_weight.clone());
    let vb = tape.param(&format!("{prefix}_v.bias"), p.v_bias.clone());
    let strip_v = tape.pool(x, 1, w, PoolMode::Avg)?;
    let conv_v = tape.conv2d(strip_v, vw, Some(vb), spec)?;
    let att_v = tape.act(conv_v, Activation::Sigmoid)?;

    let gated_h = tape.mul(x, att_h)?;
    let out = tape.mul(gated_h, att_v)?;
    Ok(PamGraph { out, att_h, att_v })
}

/// Summed sigmoid gates over the shared bottleneck applied to the average-
/// and max-pooled channel descriptors. Returns the (N, C, 1, 1) gate.
pub fn lcam_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &LcamParams<T>,
    prefix: &str,
) -> Result<ValueId> {
    let c = tape.value(x).channels();
    if p.ratio == 0 || c % p.ratio != 0 {
        return Err(Error::Config(format!(
            "channels {c} not divisible by bottleneck ratio {}",
            p.ratio
        )));
    }
    let mid = c / p.ratio;
    let reduce = ConvSpec::pointwise(c, mid, true);
    let expand = ConvSpec::pointwise(mid, c, true);
    let rw = tape.param(&format!("{prefix}.reduce.weight"), p.reduce_weight.clone());
    let rb = tape.param(&format!("{prefix}.reduce.bias"), p.reduce_bias.clone());
    let ew = tape.param(&format!("{prefix}.expand.weight"), p.expand_weight.clone());
    let eb = tape.param(&format!("{prefix}.expand.bias"), p.expand_bias.clone());

    let branch = |tape: &mut Tape<T>, mode: PoolMode| -> Result<ValueId> {
        let pooled = tape.pool(x, 1, 1, mode)?;
        let squeezed = tape.conv2d(pooled, rw, Some(rb), reduce)?;
        let lifted = tape.act(squeezed, Activation::Relu)?;
        let restored = tape.conv2d(lifted, ew, Some(eb), expand)?;
        tape.act(restored, Activation::Sigmoid)
    };
    let avg = branch(tape, PoolMode::Avg)?;
    let max = branch(tape, PoolMode::Max)?;
    tape.add(avg, max)
}

/// Sigmoid of a 3x3 conv over the concatenated channel-max and channel-mean
/// maps. Returns the (N, 1, H, W) gate.
pub fn lpam_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &LpamParams<T>,
    prefix: &str,
) -> Result<ValueId> {
    let w = tape.param(&format!("{prefix}.conv.weight"), p.weight.clone());
    let b = tape.param(&format!("{prefix}.conv.bias"), p.bias.clone());
    let max_map = tape.channel_reduce(x, ReduceMode::Max)?;
    let mean_map = tape.channel_reduce(x, ReduceMode::Mean)?;
    let stacked = tape.concat_channels(&[max_map, mean_map])?;
    let conv = tape.conv2d(stacked, w, Some(b), ConvSpec::conv3x3(2, 1, true))?;
    tape.act(conv, Activation::Sigmoid)
}

// ── Pure forwards ────────────────────────────────────────────────────────

pub fn cam_forward<T: Scalar>(x: &Tensor<T>, p: &CamParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.input("x", x.clone());
    let g = cam_graph(&mut tape, xid, p, "cam")?;
    Ok(tape.value(g.out).clone())
}

/// The (N, C, 1, 1) gate CAM multiplies onto its input.
pub fn cam_gate<T: Scalar>(x: &Tensor<T>, p: &CamParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.input("x", x.clone());
    let g = cam_graph(&mut tape, xid, p, "cam")?;
    Ok(tape.value(g.gate).clone())
}

pub fn pam_forward<T: Scalar>(x: &Tensor<T>, p: &PamParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.input("x", x.clone());
    let g = pam_graph(&mut tape, xid, p, "pam")?;
    Ok(tape.value(g.out).clone())
}

/// The horizontal (N, C, H, 1) and vertical (N, C, 1, W) PAM gates.
pub fn pam_gates<T: Scalar>(x: &Tensor<T>, p: &PamParams<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut tape = Tape::new();
    let xid = tape.input("x", x.clone());
    let g = pam_graph(&mut tape, xid, p, "pam")?;
    Ok((tape.value(g.att_h).clone(), tape.value(g.att_v).clone()))
}

/// Channel gate in (0, 2), shaped (N, C, 1, 1).
pub fn lcam_forward<T: Scalar>(x: &Tensor<T>, p: &LcamParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.input("x", x.clone());
    let gate = lcam_graph(&mut tape, xid, p, "lcam")?;
    Ok(tape.value(gate).clone())
}

/// Positional gate in (0, 1), shaped (N, 1, H, W).
pub fn lpam_forward<T: Scalar>(x: &Tensor<T>, p: &LpamParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.input("x", x.clone());
    let gate = lpam_graph(&mut tape, xid, p, "lpam")?;
    Ok(tape.value(gate).clone())
}
