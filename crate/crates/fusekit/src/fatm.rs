//! Neck-side feature attention transformation: a conv/BN/hardswish stem
//! followed by lightweight channel gating (summed-sigmoid bottleneck over
//! pooled descriptors) and positional gating (sigmoid conv over channel
//! max/mean maps).

use crate::attention::{lcam_graph, lpam_graph, LcamParams, LpamParams};
use crate::blocks::{bn_graph, BnParams};
use crate::error::{Error, Result};
use crate::tape::{Tape, ValueId};
use crate::tensor::{Activation, BnMode, ConvSpec, Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct FatmParams<T: Scalar = f32> {
    /// 3x3 stem conv, C -> C, padding 1, no bias (batch norm follows).
    pub cbh_weight: Tensor<T>,
    pub cbh_bn: BnParams<T>,
    pub lcam: LcamParams<T>,
    pub lpam: LpamParams<T>,
}

impl<T: Scalar> FatmParams<T> {
    pub fn zeros(c: usize, ratio: usize) -> Result<Self> {
        Ok(FatmParams {
            cbh_weight: Tensor::zeros([c, c, 3, 3]),
            cbh_bn: BnParams::identity(c),
            lcam: LcamParams::zeros(c, ratio)?,
            lpam: LpamParams::zeros(),
        })
    }

    pub fn channels(&self) -> usize {
        self.cbh_weight.dims()[0]
    }

    pub fn cast<U: Scalar>(&self) -> FatmParams<U> {
        FatmParams {
            cbh_weight: self.cbh_weight.cast(),
            cbh_bn: self.cbh_bn.cast(),
            lcam: self.lcam.cast(),
            lpam: self.lpam.cast(),
        }
    }

    pub fn for_each(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f("cbh.conv.weight".into(), &self.cbh_weight);
        self.cbh_bn.for_each("cbh.bn", f);
        self.lcam.for_each("lcam", f);
        self.lpam.for_each("lpam", f);
    }

    pub fn for_each_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f("cbh.conv.weight".into(), &mut self.cbh_weight);
        self.cbh_bn.for_each_mut("cbh.bn", f);
        self.lcam.for_each_mut("lcam", f);
        self.lpam.for_each_mut("lpam", f);
    }
}

/// Intermediate handles of one application.
pub struct FatmGraph {
    /// Stem output F_h.
    pub f_h: ValueId,
    /// Channel gate in (0, 2), (N, C, 1, 1).
    pub channel_gate: ValueId,
    /// After channel gating, F_LC.
    pub f_lc: ValueId,
    /// Positional gate in (0, 1), (N, 1, H, W).
    pub positional_gate: ValueId,
    /// Final output F_LP.
    pub out: ValueId,
}

pub fn fatm_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &FatmParams<T>,
    mode: BnMode,
) -> Result<FatmGraph> {
    let c = tape.value(x).channels();
    if p.channels() != c {
        return Err(Error::Config(format!(
            "block sized for {} channels, input has {c}",
            p.channels()
        )));
    }
    let w = tape.param("cbh.conv.weight", p.cbh_weight.clone());
    let conv = tape.conv2d(x, w, None, ConvSpec::conv3x3(c, c, false))?;
    let bn = bn_graph(tape, conv, &p.cbh_bn, "cbh.bn", mode)?;
    let f_h = tape.act(bn, Activation::Hardswish)?;

    let channel_gate = lcam_graph(tape, f_h, &p.lcam, "lcam")?;
    let f_lc = tape.mul(f_h, channel_gate)?;

    let positional_gate = lpam_graph(tape, f_lc, &p.lpam, "lpam")?;
    let out = tape.mul(f_lc, positional_gate)?;
    Ok(FatmGraph { f_h, channel_gate, f_lc, positional_gate, out })
}

pub fn fatm_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &FatmParams<T>,
    mode: BnMode,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let xid = tape.input("p", x.clone());
    let g = fatm_graph(&mut tape, xid, p, mode)?;
    Ok(tape.value(g.out).clone())
}
