//! Batch-norm parameter containers and the small conv/BN/activation stacks
//! shared by the fusion modules.

use crate::error::{Error, Result};
use crate::tape::{Tape, ValueId};
use crate::tensor::{Activation, BnMode, ConvSpec, Scalar, Tensor};

/// Batch-norm epsilon.
pub const BN_EPS: f64 = 1e-5;
/// L2 channel-normalization epsilon.
pub const L2_EPS: f64 = 1e-6;
/// Momentum folding batch statistics into running statistics during training.
pub const BN_MOMENTUM: f64 = 0.1;

/// Learnable scale/shift plus running statistics for one batch-norm layer.
/// All four vectors are (1, C, 1, 1).
#[derive(Clone, Debug)]
pub struct BnParams<T: Scalar = f32> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
}

impl<T: Scalar> BnParams<T> {
    /// gamma = 1, beta = 0, running mean 0 / variance 1.
    pub fn identity(channels: usize) -> Self {
        BnParams {
            gamma: Tensor::full([1, channels, 1, 1], T::ONE),
            beta: Tensor::zeros([1, channels, 1, 1]),
            running_mean: Tensor::zeros([1, channels, 1, 1]),
            running_var: Tensor::full([1, channels, 1, 1], T::ONE),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.channels()
    }

    pub fn cast<U: Scalar>(&self) -> BnParams<U> {
        BnParams {
            gamma: self.gamma.cast(),
            beta: self.beta.cast(),
            running_mean: self.running_mean.cast(),
            running_var: self.running_var.cast(),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.gamma"), &self.gamma);
        f(format!("{prefix}.beta"), &self.beta);
        f(format!("{prefix}.running_mean"), &self.running_mean);
        f(format!("{prefix}.running_var"), &self.running_var);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.gamma"), &mut self.gamma);
        f(format!("{prefix}.beta"), &mut self.beta);
        f(format!("{prefix}.running_mean"), &mut self.running_mean);
        f(format!("{prefix}.running_var"), &mut self.running_var);
    }
}

/// Records one batch-norm application. Train mode normalizes with batch
/// statistics (and registers the node for running-stat updates); infer mode
/// reads the running statistics as constants.
pub fn bn_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &BnParams<T>,
    prefix: &str,
    mode: BnMode,
) -> Result<ValueId> {
    let c = tape.value(x).channels();
    if p.channels() != c {
        return Err(Error::Config(format!(
            "{prefix}: batch-norm sized for {} channels, input has {c}",
            p.channels()
        )));
    }
    let gamma = tape.param(&format!("{prefix}.gamma"), p.gamma.clone());
    let beta = tape.param(&format!("{prefix}.beta"), p.beta.clone());
    match mode {
        BnMode::Train => tape.batch_norm_train(prefix, x, gamma, beta, BN_EPS),
        BnMode::Infer => {
            let mean = tape.constant(&format!("{prefix}.running_mean"), p.running_mean.clone());
            let var = tape.constant(&format!("{prefix}.running_var"), p.running_var.clone());
            tape.batch_norm_infer(x, gamma, beta, mean, var, BN_EPS)
        }
    }
}

/// Pointwise conv (no bias) -> batch norm -> SiLU.
#[derive(Clone, Debug)]
pub struct CbsParams<T: Scalar = f32> {
    pub weight: Tensor<T>,
    pub bn: BnParams<T>,
}

impl<T: Scalar> CbsParams<T> {
    pub fn zeros(channels: usize) -> Self {
        CbsParams {
            weight: Tensor::zeros([channels, channels, 1, 1]),
            bn: BnParams::identity(channels),
        }
    }

    pub fn cast<U: Scalar>(&self) -> CbsParams<U> {
        CbsParams { weight: self.weight.cast(), bn: self.bn.cast() }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.conv.weight"), &self.weight);
        self.bn.for_each(&format!("{prefix}.bn"), f);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.conv.weight"), &mut self.weight);
        self.bn.for_each_mut(&format!("{prefix}.bn"), f);
    }
}

pub fn cbs_graph<T: Scalar>(
    tape: &mut Tape<T>,
    x: ValueId,
    p: &CbsParams<T>,
    prefix: &str,
    mode: BnMode,
) -> Result<ValueId> {
    let c = tape.value(x).channels();
    let w = tape.param(&format!("{prefix}.conv.weight"), p.weight.clone());
    let conv = tape.conv2d(x, w, None, ConvSpec::pointwise(c, c, false))?;
    let bn = bn_graph(tape, conv, &p.bn, &format!("{prefix}.bn"), mode)?;
    tape.act(bn, Activation::Silu)
}
