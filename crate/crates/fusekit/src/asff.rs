//! Three-stage RGB/IR feature fusion unit: attention fusion, dual-branch
//! feature modulation with residuals, and a channel-shuffle mix.
//!
//! Stage 1 gates each modality with channel attention, sharpens it with a
//! depthwise conv over the residual sum, adds the branches, and applies
//! positional attention. Stage 2 refines the fused map through a dynamic
//! feature modulation block (global variance-modulated branch plus a local
//! bottleneck branch) and a feature mapping block, each with a residual
//! connection. Stage 3 permutes channels across groups at zero parameter
//! cost.

use crate::attention::{cam_graph, pam_graph, CamParams, PamParams};
use crate::blocks::{bn_graph, cbs_graph, BnParams, CbsParams, L2_EPS};
use crate::error::{Error, Result};
use crate::kernels;
use crate::tape::{Tape, ValueId};
use crate::tensor::{Activation, BnMode, ConvSpec, PoolMode, Scalar, Tensor};

/// Dynamic feature modulation parameters. The entry conv expands C to 2C; the
/// split halves feed a global branch (downsampled depthwise conv, modulated
/// by per-channel `alpha`/`beta` against the channel variance) and a local
/// bottleneck branch; the exit conv maps the branch sum back to C.
#[derive(Clone, Debug)]
pub struct DfmParams<T: Scalar = f32> {
    pub entry_weight: Tensor<T>,
    pub entry_bias: Tensor<T>,
    pub global_dw_weight: Tensor<T>,
    pub global_dw_bias: Tensor<T>,
    pub modulate_weight: Tensor<T>,
    pub modulate_bias: Tensor<T>,
    /// Per-channel scale on the downsampled structural map, (1, C, 1, 1).
    pub alpha: Tensor<T>,
    /// Per-channel scale on the channel variance, (1, C, 1, 1).
    pub beta: Tensor<T>,
    pub local_dw_weight: Tensor<T>,
    pub local_dw_bias: Tensor<T>,
    pub local_expand_weight: Tensor<T>,
    pub local_expand_bias: Tensor<T>,
    pub local_project_weight: Tensor<T>,
    pub local_project_bias: Tensor<T>,
    pub exit_weight: Tensor<T>,
    pub exit_bias: Tensor<T>,
}

impl<T: Scalar> DfmParams<T> {
    pub fn zeros(c: usize) -> Self {
        DfmParams {
            entry_weight: Tensor::zeros([2 * c, c, 1, 1]),
            entry_bias: Tensor::zeros([1, 2 * c, 1, 1]),
            global_dw_weight: Tensor::zeros([c, 1, 3, 3]),
            global_dw_bias: Tensor::zeros([1, c, 1, 1]),
            modulate_weight: Tensor::zeros([c, c, 1, 1]),
            modulate_bias: Tensor::zeros([1, c, 1, 1]),
            alpha: Tensor::full([1, c, 1, 1], T::ONE),
            beta: Tensor::zeros([1, c, 1, 1]),
            local_dw_weight: Tensor::zeros([c, 1, 3, 3]),
            local_dw_bias: Tensor::zeros([1, c, 1, 1]),
            local_expand_weight: Tensor::zeros([2 * c, c, 1, 1]),
            local_expand_bias: Tensor::zeros([1, 2 * c, 1, 1]),
            local_project_weight: Tensor::zeros([c, 2 * c, 1, 1]),
            local_project_bias: Tensor::zeros([1, c, 1, 1]),
            exit_weight: Tensor::zeros([c, c, 1, 1]),
            exit_bias: Tensor::zeros([1, c, 1, 1]),
        }
    }

    pub fn cast<U: Scalar>(&self) -> DfmParams<U> {
        DfmParams {
            entry_weight: self.entry_weight.cast(),
            entry_bias: self.entry_bias.cast(),
            global_dw_weight: self.global_dw_weight.cast(),
            global_dw_bias: self.global_dw_bias.cast(),
            modulate_weight: self.modulate_weight.cast(),
            modulate_bias: self.modulate_bias.cast(),
            alpha: self.alpha.cast(),
            beta: self.beta.cast(),
            local_dw_weight: self.local_dw_weight.cast(),
            local_dw_bias: self.local_dw_bias.cast(),
            local_expand_weight: self.local_expand_weight.cast(),
            local_expand_bias: self.local_expand_bias.cast(),
            local_project_weight: self.local_project_weight.cast(),
            local_project_bias: self.local_project_bias.cast(),
            exit_weight: self.exit_weight.cast(),
            exit_bias: self.exit_bias.cast(),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.entry.weight"), &self.entry_weight);
        f(format!("{prefix}.entry.bias"), &self.entry_bias);
        f(format!("{prefix}.global_dw.weight"), &self.global_dw_weight);
        f(format!("{prefix}.global_dw.bias"), &self.global_dw_bias);
        f(format!("{prefix}.modulate.weight"), &self.modulate_weight);
        f(format!("{prefix}.modulate.bias"), &self.modulate_bias);
        f(format!("{prefix}.alpha"), &self.alpha);
        f(format!("{prefix}.beta"), &self.beta);
        f(format!("{prefix}.local_dw.weight"), &self.local_dw_weight);
        f(format!("{prefix}.local_dw.bias"), &self.local_dw_bias);
        f(format!("{prefix}.local_expand.weight"), &self.local_expand_weight);
        f(format!("{prefix}.local_expand.bias"), &self.local_expand_bias);
        f(format!("{prefix}.local_project.weight"), &self.local_project_weight);
        f(format!("{prefix}.local_project.bias"), &self.local_project_bias);
        f(format!("{prefix}.exit.weight"), &self.exit_weight);
        f(format!("{prefix}.exit.bias"), &self.exit_bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.entry.weight"), &mut self.entry_weight);
        f(format!("{prefix}.entry.bias"), &mut self.entry_bias);
        f(format!("{prefix}.global_dw.weight"), &mut self.global_dw_weight);
        f(format!("{prefix}.global_dw.bias"), &mut self.global_dw_bias);
        f(format!("{prefix}.modulate.weight"), &mut self.modulate_weight);
        f(format!("{prefix}.modulate.bias"), &mut self.modulate_bias);
        f(format!("{prefix}.alpha"), &mut self.alpha);
        f(format!("{prefix}.beta"), &mut self.beta);
        f(format!("{prefix}.local_dw.weight"), &mut self.local_dw_weight);
        f(format!("{prefix}.local_dw.bias"), &mut self.local_dw_bias);
        f(format!("{prefix}.local_expand.weight"), &mut self.local_expand_weight);
        f(format!("{prefix}.local_expand.bias"), &mut self.local_expand_bias);
        f(format!("{prefix}.local_project.weight"), &mut self.local_project_weight);
        f(format!("{prefix}.local_project.bias"), &mut self.local_project_bias);
        f(format!("{prefix}.exit.weight"), &mut self.exit_weight);
        f(format!("{prefix}.exit.bias"), &mut self.exit_bias);
    }
}

/// Feature mapping parameters: expand to 2C, split into C/2 (locally encoded
/// through CBS -> depthwise -> BN -> CBS) and 3C/2 (passed through), merge
/// back to C.
#[derive(Clone, Debug)]
pub struct FmParams<T: Scalar = f32> {
    pub expand_weight: Tensor<T>,
    pub expand_bias: Tensor<T>,
    pub cbs1: CbsParams<T>,
    pub dw_weight: Tensor<T>,
    pub dw_bn: BnParams<T>,
    pub cbs2: CbsParams<T>,
    pub merge_weight: Tensor<T>,
    pub merge_bias: Tensor<T>,
}

impl<T: Scalar> FmParams<T> {
    pub fn zeros(c: usize) -> Result<Self> {
        if c % 2 != 0 {
            return Err(Error::Config(format!("feature mapping requires even channels, got {c}")));
        }
        let half = c / 2;
        Ok(FmParams {
            expand_weight: Tensor::zeros([2 * c, c, 1, 1]),
            expand_bias: Tensor::zeros([1, 2 * c, 1, 1]),
            cbs1: CbsParams::zeros(half),
            dw_weight: Tensor::zeros([half, 1, 3, 3]),
            dw_bn: BnParams::identity(half),
            cbs2: CbsParams::zeros(half),
            merge_weight: Tensor::zeros([c, 2 * c, 1, 1]),
            merge_bias: Tensor::zeros([1, c, 1, 1]),
        })
    }

    pub fn cast<U: Scalar>(&self) -> FmParams<U> {
        FmParams {
            expand_weight: self.expand_weight.cast(),
            expand_bias: self.expand_bias.cast(),
            cbs1: self.cbs1.cast(),
            dw_weight: self.dw_weight.cast(),
            dw_bn: self.dw_bn.cast(),
            cbs2: self.cbs2.cast(),
            merge_weight: self.merge_weight.cast(),
            merge_bias: self.merge_bias.cast(),
        }
    }

    pub fn for_each(&self, prefix: &str, f: &mut dyn FnMut(String, &Tensor<T>)) {
        f(format!("{prefix}.expand.weight"), &self.expand_weight);
        f(format!("{prefix}.expand.bias"), &self.expand_bias);
        self.cbs1.for_each(&format!("{prefix}.cbs1"), f);
        f(format!("{prefix}.dw.conv.weight"), &self.dw_weight);
        self.dw_bn.for_each(&format!("{prefix}.dw.bn"), f);
        self.cbs2.for_each(&format!("{prefix}.cbs2"), f);
        f(format!("{prefix}.merge.weight"), &self.merge_weight);
        f(format!("{prefix}.merge.bias"), &self.merge_bias);
    }

    pub fn for_each_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{prefix}.expand.weight"), &mut self.expand_weight);
        f(format!("{prefix}.expand.bias"), &mut self.expand_bias);
        self.cbs1.for_each_mut(&format!("{prefix}.cbs1"), f);
        f(format!("{prefix}.dw.conv.weight"), &mut self.dw_weight);
        self.dw_bn.for_each_mut(&format!("{prefix}.dw.bn"), f);
        self.cbs2.for_each_mut(&format!("{prefix}.cbs2"), f);
        f(format!("{prefix}.merge.weight"), &mut self.merge_weight);
        f(format!("{prefix}.merge.bias"), &mut self.merge_bias);
    }
}

/// Every learnable of the fusion unit. The two modality branches own separate
/// channel-attention and depthwise weights.
#[derive(Clone, Debug)]
pub struct AsffParams<T: Scalar = f32> {
    pub cam_rgb: CamParams<T>,
    pub cam_ir: CamParams<T>,
    pub dw_rgb_weight: Tensor<T>,
    pub dw_rgb_bias: Tensor<T>,
    pub dw_ir_weight: Tensor<T>,
    pub dw_ir_bias: Tensor<T>,
    pub pam: PamParams<T>,
    pub dfm: DfmParams<T>,
    pub fm: FmParams<T>,
    /// Channel-shuffle group count.
    pub groups: usize,
}

impl<T: Scalar> AsffParams<T> {
    pub fn zeros(c: usize, groups: usize, cam_kernel: usize) -> Result<Self> {
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!(
                "channels {c} not divisible by shuffle groups {groups}"
            )));
        }
        Ok(AsffParams {
            cam_rgb: CamParams::zeros(cam_kernel),
            cam_ir: CamParams::zeros(cam_kernel),
            dw_rgb_weight: Tensor::zeros([c, 1, 3, 3]),
            dw_rgb_bias: Tensor::zeros([1, c, 1, 1]),
            dw_ir_weight: Tensor::zeros([c, 1, 3, 3]),
            dw_ir_bias: Tensor::zeros([1, c, 1, 1]),
            pam: PamParams::zeros(c),
            dfm: DfmParams::zeros(c),
            fm: FmParams::zeros(c)?,
            groups,
        })
    }

    pub fn channels(&self) -> usize {
        self.pam.h_weight.dims()[0]
    }

    pub fn cast<U: Scalar>(&self) -> AsffParams<U> {
        AsffParams {
            cam_rgb: self.cam_rgb.cast(),
            cam_ir: self.cam_ir.cast(),
            dw_rgb_weight: self.dw_rgb_weight.cast(),
            dw_rgb_bias: self.dw_rgb_bias.cast(),
            dw_ir_weight: self.dw_ir_weight.cast(),
            dw_ir_bias: self.dw_ir_bias.cast(),
            pam: self.pam.cast(),
            dfm: self.dfm.cast(),
            fm: self.fm.cast(),
            groups: self.groups,
        }
    }

    /// Ties the IR branch weights to the RGB branch (used by the modality
    /// symmetry property).
    pub fn tie_branches(&mut self) {
        self.cam_ir = self.cam_rgb.clone();
        self.dw_ir_weight = self.dw_rgb_weight.clone();
        self.dw_ir_bias = self.dw_rgb_bias.clone();
    }

    pub fn for_each(&self, f: &mut dyn FnMut(String, &Tensor<T>)) {
        self.cam_rgb.for_each("cam_rgb", f);
        self.cam_ir.for_each("cam_ir", f);
        f("dw_rgb.weight".into(), &self.dw_rgb_weight);
        f("dw_rgb.bias".into(), &self.dw_rgb_bias);
        f("dw_ir.weight".into(), &self.dw_ir_weight);
        f("dw_ir.bias".into(), &self.dw_ir_bias);
        self.pam.for_each("pam", f);
        self.dfm.for_each("dfm", f);
        self.fm.for_each("fm", f);
    }

    pub fn for_each_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.cam_rgb.for_each_mut("cam_rgb", f);
        self.cam_ir.for_each_mut("cam_ir", f);
        f("dw_rgb.weight".into(), &mut self.dw_rgb_weight);
        f("dw_rgb.bias".into(), &mut self.dw_rgb_bias);
        f("dw_ir.weight".into(), &mut self.dw_ir_weight);
        f("dw_ir.bias".into(), &mut self.dw_ir_bias);
        self.pam.for_each_mut("pam", f);
        self.dfm.for_each_mut("dfm", f);
        self.fm.for_each_mut("fm", f);
    }
}

// ── Graph builders ───────────────────────────────────────────────────────

/// Stage 1: per-modality channel attention, residual depthwise sharpening,
/// branch sum, positional attention.
pub fn attention_fusion_graph<T: Scalar>(
    tape: &mut Tape<T>,
    rgb: ValueId,
    ir: ValueId,
    p: &AsffParams<T>,
) -> Result<ValueId> {
    let dims = tape.value(rgb).dims();
    if dims != tape.value(ir).dims() {
        return Err(Error::Shape(format!(
            "modality shapes differ: rgb {:?} vs ir {:?}",
            dims,
            tape.value(ir).dims()
        )));
    }
    let c = dims[1];
    let dw = ConvSpec::depthwise3x3(c, true);

    let cam_r = cam_graph(tape, rgb, &p.cam_rgb, "cam_rgb")?;
    let sum_r = tape.add(rgb, cam_r.out)?;
    let wr = tape.param("dw_rgb.weight", p.dw_rgb_weight.clone());
    let br = tape.param("dw_rgb.bias", p.dw_rgb_bias.clone());
    let sharp_r = tape.conv2d(sum_r, wr, Some(br), dw)?;

    let cam_i = cam_graph(tape, ir, &p.cam_ir, "cam_ir")?;
    let sum_i = tape.add(ir, cam_i.out)?;
    let wi = tape.param("dw_ir.weight", p.dw_ir_weight.clone());
    let bi = tape.param("dw_ir.bias", p.dw_ir_bias.clone());
    let sharp_i = tape.conv2d(sum_i, wi, Some(bi), dw)?;

    let fused = tape.add(sharp_r, sharp_i)?;
    Ok(pam_graph(tape, fused, &p.pam, "pam")?.out)
}

/// Dynamic feature modulation over the attention-fused map.
pub fn dfm_graph<T: Scalar>(tape: &mut Tape<T>, fa: ValueId, p: &DfmParams<T>) -> Result<ValueId> {
    let [_, c, h, w] = tape.value(fa).dims();
    if c % 2 != 0 {
        return Err(Error::Config(format!("feature modulation requires even channels, got {c}")));
    }
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!("spatial extents ({h}, {w}) must be >= 2")));
    }
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "spatial extents ({h}, {w}) must be even: the global branch halves and re-doubles them"
        )));
    }

    let normed = tape.l2norm(fa, L2_EPS)?;
    let ew = tape.param("dfm.entry.weight", p.entry_weight.clone());
    let eb = tape.param("dfm.entry.bias", p.entry_bias.clone());
    let expanded = tape.conv2d(normed, ew, Some(eb), ConvSpec::pointwise(c, 2 * c, true))?;
    let halves = tape.split_channels(expanded, &[c, c])?;
    let (x_half, y_half) = (halves[0], halves[1]);

    // Global branch: downsample, depthwise structure, variance modulation.
    let pooled = tape.pool(x_half, h / 2, w / 2, PoolMode::Max)?;
    let gw = tape.param("dfm.global_dw.weight", p.global_dw_weight.clone());
    let gb = tape.param("dfm.global_dw.bias", p.global_dw_bias.clone());
    let structural = tape.conv2d(pooled, gw, Some(gb), ConvSpec::depthwise3x3(c, true))?;
    let alpha = tape.param("dfm.alpha", p.alpha.clone());
    let beta = tape.param("dfm.beta", p.beta.clone());
    let variance = tape.channel_variance(x_half)?;
    let scaled_structure = tape.mul(structural, alpha)?;
    let scaled_variance = tape.mul(variance, beta)?;
    let mixed = tape.add(scaled_structure, scaled_variance)?;
    let mw = tape.param("dfm.modulate.weight", p.modulate_weight.clone());
    let mb = tape.param("dfm.modulate.bias", p.modulate_bias.clone());
    let modulated = tape.conv2d(mixed, mw, Some(mb), ConvSpec::pointwise(c, c, true))?;
    let lifted = tape.act(modulated, Activation::Gelu)?;
    let restored = tape.upsample(lifted, 2)?;
    let global = tape.mul(x_half, restored)?;

    // Local branch: depthwise encode, expand, squash, project.
    let lw = tape.param("dfm.local_dw.weight", p.local_dw_weight.clone());
    let lb = tape.param("dfm.local_dw.bias", p.local_dw_bias.clone());
    let encoded = tape.conv2d(y_half, lw, Some(lb), ConvSpec::depthwise3x3(c, true))?;
    let xw = tape.param("dfm.local_expand.weight", p.local_expand_weight.clone());
    let xb = tape.param("dfm.local_expand.bias", p.local_expand_bias.clone());
    let widened = tape.conv2d(encoded, xw, Some(xb), ConvSpec::pointwise(c, 2 * c, true))?;
    let squashed = tape.act(widened, Activation::Gelu)?;
    let pw = tape.param("dfm.local_project.weight", p.local_project_weight.clone());
    let pb = tape.param("dfm.local_project.bias", p.local_project_bias.clone());
    let local = tape.conv2d(squashed, pw, Some(pb), ConvSpec::pointwise(2 * c, c, true))?;

    let merged = tape.add(global, local)?;
    let ow = tape.param("dfm.exit.weight", p.exit_weight.clone());
    let ob = tape.param("dfm.exit.bias", p.exit_bias.clone());
    tape.conv2d(merged, ow, Some(ob), ConvSpec::pointwise(c, c, true))
}

/// Feature mapping over the modulated map.
pub fn fm_graph<T: Scalar>(
    tape: &mut Tape<T>,
    fdr: ValueId,
    p: &FmParams<T>,
    mode: BnMode,
) -> Result<ValueId> {
    let c = tape.value(fdr).channels();
    if c % 2 != 0 {
        return Err(Error::Config(format!("feature mapping requires even channels, got {c}")));
    }
    let half = c / 2;
    let normed = tape.l2norm(fdr, L2_EPS)?;
    let ew = tape.param("fm.expand.weight", p.expand_weight.clone());
    let eb = tape.param("fm.expand.bias", p.expand_bias.clone());
    let expanded = tape.conv2d(normed, ew, Some(eb), ConvSpec::pointwise(c, 2 * c, true))?;
    let lifted = tape.act(expanded, Activation::Gelu)?;
    let parts = tape.split_channels(lifted, &[half, 3 * half])?;

    let enc1 = cbs_graph(tape, parts[0], &p.cbs1, "fm.cbs1", mode)?;
    let dw = tape.param("fm.dw.conv.weight", p.dw_weight.clone());
    let enc2 = tape.conv2d(enc1, dw, None, ConvSpec::depthwise3x3(half, false))?;
    let enc3 = bn_graph(tape, enc2, &p.dw_bn, "fm.dw.bn", mode)?;
    let enc4 = cbs_graph(tape, enc3, &p.cbs2, "fm.cbs2", mode)?;
    let encoded = tape.act(enc4, Activation::Gelu)?;

    let stacked = tape.concat_channels(&[encoded, parts[1]])?;
    let mw = tape.param("fm.merge.weight", p.merge_weight.clone());
    let mb = tape.param("fm.merge.bias", p.merge_bias.clone());
    tape.conv2d(stacked, mw, Some(mb), ConvSpec::pointwise(2 * c, c, true))
}

/// Feature modulation block: both halves of stage 2 with their residuals.
pub fn fmb_graph<T: Scalar>(
    tape: &mut Tape<T>,
    fa: ValueId,
    dfm: &DfmParams<T>,
    fm: &FmParams<T>,
    mode: BnMode,
) -> Result<ValueId> {
    let fd = dfm_graph(tape, fa, dfm)?;
    let fdr = tape.add(fd, fa)?;
    let fmv = fm_graph(tape, fdr, fm, mode)?;
    tape.add(fmv, fdr)
}

/// The whole fusion unit; returns the stage outputs.
pub struct AsffGraph {
    pub f_a: ValueId,
    pub f_b: ValueId,
    pub f_c: ValueId,
}

pub fn asff_graph<T: Scalar>(
    tape: &mut Tape<T>,
    rgb: ValueId,
    ir: ValueId,
    p: &AsffParams<T>,
    mode: BnMode,
) -> Result<AsffGraph> {
    let c = tape.value(rgb).channels();
    if p.groups == 0 || c % p.groups != 0 {
        return Err(Error::Config(format!(
            "channels {c} not divisible by shuffle groups {}",
            p.groups
        )));
    }
    let f_a = attention_fusion_graph(tape, rgb, ir, p)?;
    let f_b = fmb_graph(tape, f_a, &p.dfm, &p.fm, mode)?;
    let f_c = tape.shuffle(f_b, p.groups)?;
    Ok(AsffGraph { f_a, f_b, f_c })
}

// ── Pure forwards ────────────────────────────────────────────────────────

pub fn attention_fusion<T: Scalar>(
    rgb: &Tensor<T>,
    ir: &Tensor<T>,
    p: &AsffParams<T>,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let r = tape.input("rgb", rgb.clone());
    let i = tape.input("ir", ir.clone());
    let out = attention_fusion_graph(&mut tape, r, i, p)?;
    Ok(tape.value(out).clone())
}

pub fn dfm_forward<T: Scalar>(fa: &Tensor<T>, p: &DfmParams<T>) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let x = tape.input("f_a", fa.clone());
    let out = dfm_graph(&mut tape, x, p)?;
    Ok(tape.value(out).clone())
}

pub fn fm_forward<T: Scalar>(fdr: &Tensor<T>, p: &FmParams<T>, mode: BnMode) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let x = tape.input("f_dr", fdr.clone());
    let out = fm_graph(&mut tape, x, p, mode)?;
    Ok(tape.value(out).clone())
}

pub fn fmb_forward<T: Scalar>(
    fa: &Tensor<T>,
    dfm: &DfmParams<T>,
    fm: &FmParams<T>,
    mode: BnMode,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let x = tape.input("f_a", fa.clone());
    let out = fmb_graph(&mut tape, x, dfm, fm, mode)?;
    Ok(tape.value(out).clone())
}

/// Re-export of the channel permutation so the fusion API is complete here.
pub fn channel_shuffle<T: Scalar>(x: &Tensor<T>, groups: usize) -> Result<Tensor<T>> {
    kernels::channel_shuffle(x, groups)
}

pub fn asff_forward<T: Scalar>(
    rgb: &Tensor<T>,
    ir: &Tensor<T>,
    p: &AsffParams<T>,
    mode: BnMode,
) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let r = tape.input("rgb", rgb.clone());
    let i = tape.input("ir", ir.clone());
    let g = asff_graph(&mut tape, r, i, p, mode)?;
    Ok(tape.value(g.f_c).clone())
}
