//! Central finite differences and the tape-based gradient check harness.
//!
//! The oracle side never touches `backward`: it re-evaluates the recorded
//! forward program at perturbed leaf values. Checks run on the `f64`
//! instantiation of the same generic kernels so the comparison is free of
//! single-precision rounding noise.

use crate::error::Result;
use crate::tape::{LeafKind, Tape, ValueId};
use crate::tensor::Tensor;

/// Default central-difference step.
pub const DEFAULT_H: f64 = 1e-3;
/// Default pass tolerance on the relative max-norm error.
pub const DEFAULT_TOL: f64 = 1e-3;
/// Elements where analytic and estimated magnitudes both fall below this
/// floor are excluded from the relative comparison.
pub const NEGLIGIBLE: f64 = 1e-6;
/// Inputs are rejected while any kinked primitive sees an argument closer
/// than this multiple of h to its kink.
pub const KINK_MARGIN_STEPS: f64 = 10.0;

/// Central-difference gradient of a scalar-valued function: per element i,
/// (f(x + h e_i) - f(x - h e_i)) / 2h.
pub fn finite_diff_grad<F>(f: F, at: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: Fn(&Tensor<f64>) -> Result<f64>,
{
    let mut grad = Tensor::zeros(at.dims());
    let mut work = at.clone();
    for i in 0..at.numel() {
        let orig = work.data()[i];
        work.data_mut()[i] = orig + h;
        let plus = f(&work)?;
        work.data_mut()[i] = orig - h;
        let minus = f(&work)?;
        work.data_mut()[i] = orig;
        grad.data_mut()[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative error |a - b| / max(|a|, |b|); `None` when both magnitudes fall
/// below the negligible floor.
pub fn rel_err(a: f64, b: f64) -> Option<f64> {
    let denom = a.abs().max(b.abs());
    if denom < NEGLIGIBLE {
        return None;
    }
    Some((a - b).abs() / denom)
}

/// Per-leaf comparison outcome.
#[derive(Debug)]
pub struct LeafCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub compared: usize,
    pub negligible: usize,
    /// Elements whose plain h-step estimate exceeded the tolerance but whose
    /// refined (h/8) estimate converged to the analytic value within tol/2,
    /// i.e. the discrepancy was the oracle's own O(h^2) truncation.
    pub truncation_refined: usize,
}

/// Whole-tape comparison outcome.
#[derive(Debug)]
pub struct TapeCheck {
    pub leaves: Vec<LeafCheck>,
    pub max_rel_err: f64,
    pub truncation_refined: usize,
}

impl TapeCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }

    pub fn worst_leaf(&self) -> Option<&LeafCheck> {
        self.leaves
            .iter()
            .max_by(|a, b| a.max_rel_err.partial_cmp(&b.max_rel_err).expect("finite errors"))
    }
}

/// Compares `backward` against central finite differences for every input
/// and parameter leaf recorded on the tape, against `<seed, value(output)>`.
///
/// The plain estimate uses step `h`. An element whose plain comparison
/// exceeds `tol` is re-estimated at `h/8`: second-order oracle truncation
/// shrinks 64x, so the element passes only if the refined estimate converges
/// to the analytic value within `tol/2` — a stricter bound than the plain
/// one, which a genuine gradient defect of size >= tol can never meet.
pub fn check_tape_gradients(
    tape: &Tape<f64>,
    output: ValueId,
    seed: &Tensor<f64>,
    h: f64,
    tol: f64,
) -> Result<TapeCheck> {
    let grads = tape.backward(output, seed)?;
    let mut leaves = Vec::new();
    let mut global = 0.0f64;
    let mut refined_total = 0;
    for (name, id) in tape.leaves(&[LeafKind::Input, LeafKind::Param]) {
        let affected = tape.affected_by(id);
        let base = tape.value(id).clone();
        let mut work = base.clone();
        let mut max_err = 0.0f64;
        let mut compared = 0;
        let mut negligible = 0;
        let mut refined = 0;
        let estimate_at = |step: f64, i: usize, work: &mut Tensor<f64>| -> Result<f64> {
            let orig = work.data()[i];
            work.data_mut()[i] = orig + step;
            let plus = tape.replay_dot(output, id, work, &affected, seed)?;
            work.data_mut()[i] = orig - step;
            let minus = tape.replay_dot(output, id, work, &affected, seed)?;
            work.data_mut()[i] = orig;
            Ok((plus - minus) / (2.0 * step))
        };
        for i in 0..base.numel() {
            let estimate = estimate_at(h, i, &mut work)?;
            let analytic = grads.by_id(id).map_or(0.0, |g| g.data()[i]);
            let mut err = match rel_err(analytic, estimate) {
                Some(e) => e,
                None => {
                    negligible += 1;
                    continue;
                }
            };
            compared += 1;
            if err > tol {
                let sharper = estimate_at(h / 8.0, i, &mut work)?;
                if let Some(e) = rel_err(analytic, sharper) {
                    if e <= tol / 2.0 {
                        refined += 1;
                        err = e;
                    }
                }
            }
            if err > max_err {
                max_err = err;
            }
        }
        global = global.max(max_err);
        refined_total += refined;
        leaves.push(LeafCheck {
            name,
            max_rel_err: max_err,
            compared,
            negligible,
            truncation_refined: refined,
        });
    }
    Ok(TapeCheck { leaves, max_rel_err: global, truncation_refined: refined_total })
}

/// Builds a tape with a seed-dependent input draw, redrawing while any kinked
/// primitive (ReLU, hardswish, max pooling, channel max) sees an argument
/// within `KINK_MARGIN_STEPS * h` of its kink; finite differences straddle
/// the kink there and stop estimating the one-sided derivative. The redraw
/// sequence is deterministic in the starting seed.
pub fn check_with_clean_draw(
    mut build: impl FnMut(u64) -> Result<(Tape<f64>, ValueId)>,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<TapeCheck> {
    let mut attempt = seed;
    loop {
        let (tape, output) = build(attempt)?;
        if tape.kink_margin() >= KINK_MARGIN_STEPS * h {
            tape.verify_replay()?;
            let seed_vec = seed_tensor(tape.value(output).dims(), attempt ^ 0x5eed);
            return check_tape_gradients(&tape, output, &seed_vec, h, tol);
        }
        attempt = attempt.wrapping_add(0x9e37_79b9);
    }
}

/// The primitive kernels, checkable on their own.
pub const PRIMITIVE_CHECKS: &[&str] = &[
    "conv2d",
    "conv1d",
    "pool_avg",
    "pool_max",
    "channel_reduce_mean",
    "channel_reduce_max",
    "sigmoid",
    "relu",
    "gelu",
    "silu",
    "hardswish",
    "batch_norm_train",
    "batch_norm_infer",
    "upsample",
    "l2norm",
    "variance",
    "add",
    "mul",
    "split_concat",
    "shuffle",
    "scale",
];

/// The composed blocks, checkable end-to-end.
pub const COMPOSITE_CHECKS: &[&str] = &[
    "cam",
    "pam",
    "lcam",
    "lpam",
    "attention_fusion",
    "dfm",
    "fm",
    "fmb",
    "asff",
    "fatm",
];

/// Module names accepted by [`check_module`].
pub const CHECKABLE: &[&str] = &[
    "conv2d",
    "conv1d",
    "pool_avg",
    "pool_max",
    "channel_reduce_mean",
    "channel_reduce_max",
    "sigmoid",
    "relu",
    "gelu",
    "silu",
    "hardswish",
    "batch_norm_train",
    "batch_norm_infer",
    "upsample",
    "l2norm",
    "variance",
    "add",
    "mul",
    "split_concat",
    "shuffle",
    "scale",
    "cam",
    "pam",
    "lcam",
    "lpam",
    "attention_fusion",
    "dfm",
    "fm",
    "fmb",
    "asff",
    "fatm",
];

/// Gradient check for one primitive or composed block at (C, size x size).
///
/// Composites use the same structural defaults as the test suite: shuffle
/// groups 2 (1 when C is odd) and the largest bottleneck ratio among
/// {4, 2, 1} dividing C.
pub fn check_module(
    name: &str,
    channels: usize,
    size: usize,
    seed: u64,
    h: f64,
    tol: f64,
) -> Result<TapeCheck> {
    use crate::tensor::{Activation, BnMode, ConvSpec, PoolMode, ReduceMode};
    let c = channels;
    let groups = if c % 2 == 0 { 2 } else { 1 };
    let ratio = [4usize, 2, 1].into_iter().find(|r| c % r == 0).unwrap_or(1);
    let cfg = crate::config::ModuleConfig {
        groups,
        lcam_ratio: ratio,
        height: size,
        width: size,
        ..crate::config::ModuleConfig::with_defaults(c)
    };
    let params_seed = seed ^ 0x00c0_ffee;

    let build = |draw: u64| -> Result<(Tape<f64>, ValueId)> {
        let mut gen = crate::rng::SeededGen::new(draw);
        let mut tape = Tape::<f64>::new();
        let dims = [1usize, c, size, size];
        let x_raw = gen.tensor_symmetric(dims, 1.0);
        let out = match name {
            "conv2d" => {
                let x = tape.input("x", x_raw.cast());
                let spec = ConvSpec::new(c, c + 2, 3, 3, 2, 1, 1, true)?;
                let w = tape.param("w", gen.tensor_symmetric(spec.weight_dims(), 0.5).cast());
                let b = tape.param("b", gen.tensor_symmetric(spec.bias_dims(), 0.5).cast());
                tape.conv2d(x, w, Some(b), spec)?
            }
            "conv1d" => {
                let x = tape.input("x", gen.tensor_symmetric([1, 1, c, 1], 1.0).cast());
                let w = tape.param("w", gen.tensor_symmetric([1, 1, 1, 3], 0.5).cast());
                let b = tape.param("b", gen.tensor_symmetric([1, 1, 1, 1], 0.5).cast());
                tape.conv1d(x, w, Some(b))?
            }
            "pool_avg" => {
                let x = tape.input("x", x_raw.cast());
                tape.pool(x, size / 2, size / 2, PoolMode::Avg)?
            }
            "pool_max" => {
                let x = tape.input("x", x_raw.cast());
                tape.pool(x, size / 2, size / 2, PoolMode::Max)?
            }
            "channel_reduce_mean" => {
                let x = tape.input("x", x_raw.cast());
                tape.channel_reduce(x, ReduceMode::Mean)?
            }
            "channel_reduce_max" => {
                let x = tape.input("x", x_raw.cast());
                tape.channel_reduce(x, ReduceMode::Max)?
            }
            "sigmoid" | "relu" | "gelu" | "silu" | "hardswish" => {
                let kind = match name {
                    "sigmoid" => Activation::Sigmoid,
                    "relu" => Activation::Relu,
                    "gelu" => Activation::Gelu,
                    "silu" => Activation::Silu,
                    _ => Activation::Hardswish,
                };
                // keep arguments away from the ReLU corner
                let mut shifted = x_raw.clone();
                if matches!(kind, Activation::Relu) {
                    for v in shifted.data_mut() {
                        if v.abs() < 0.05 {
                            *v += if *v < 0.0 { -0.05 } else { 0.05 };
                        }
                    }
                }
                let x = tape.input("x", shifted.cast());
                tape.act(x, kind)?
            }
            "batch_norm_train" => {
                let x = tape.input("x", gen.tensor_symmetric([2, c, size, size], 1.0).cast());
                let gamma = tape.param("gamma", gen.tensor_symmetric([1, c, 1, 1], 1.0).cast());
                let beta = tape.param("beta", gen.tensor_symmetric([1, c, 1, 1], 1.0).cast());
                tape.batch_norm_train("bn", x, gamma, beta, crate::blocks::BN_EPS)?
            }
            "batch_norm_infer" => {
                let x = tape.input("x", gen.tensor_symmetric([2, c, size, size], 1.0).cast());
                let gamma = tape.param("gamma", gen.tensor_symmetric([1, c, 1, 1], 1.0).cast());
                let beta = tape.param("beta", gen.tensor_symmetric([1, c, 1, 1], 1.0).cast());
                let mut var_raw = gen.tensor_unit([1, c, 1, 1]);
                for v in var_raw.data_mut() {
                    *v += 0.5;
                }
                let mean = tape.constant("mean", gen.tensor_symmetric([1, c, 1, 1], 1.0).cast());
                let var = tape.constant("var", var_raw.cast());
                tape.batch_norm_infer(x, gamma, beta, mean, var, crate::blocks::BN_EPS)?
            }
            "upsample" => {
                let x = tape.input("x", x_raw.cast());
                tape.upsample(x, 2)?
            }
            "l2norm" => {
                let x = tape.input("x", x_raw.cast());
                tape.l2norm(x, crate::blocks::L2_EPS)?
            }
            "variance" => {
                let x = tape.input("x", x_raw.cast());
                tape.channel_variance(x)?
            }
            "add" | "mul" => {
                let a = tape.input("a", x_raw.cast());
                let b = tape.input("b", gen.tensor_symmetric([1, c, 1, 1], 1.0).cast());
                match name {
                    "add" => tape.add(a, b)?,
                    _ => tape.mul(a, b)?,
                }
            }
            "split_concat" => {
                let x = tape.input("x", x_raw.cast());
                let parts = tape.split_channels(x, &[c / 2, c - c / 2])?;
                let swapped = [parts[1], parts[0]];
                tape.concat_channels(&swapped)?
            }
            "shuffle" => {
                let x = tape.input("x", x_raw.cast());
                tape.shuffle(x, groups)?
            }
            "scale" => {
                let x = tape.input("x", x_raw.cast());
                tape.scale(x, 0.37)?
            }
            "cam" => {
                let x = tape.input("x", x_raw.cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::attention::cam_graph(&mut tape, x, &p.cam_rgb, "cam")?.out
            }
            "pam" => {
                let x = tape.input("x", x_raw.cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::attention::pam_graph(&mut tape, x, &p.pam, "pam")?.out
            }
            "lcam" => {
                let x = tape.input("x", x_raw.cast());
                let p = crate::init::fatm_params(&cfg, params_seed)?.cast::<f64>();
                crate::attention::lcam_graph(&mut tape, x, &p.lcam, "lcam")?
            }
            "lpam" => {
                let x = tape.input("x", x_raw.cast());
                let p = crate::init::fatm_params(&cfg, params_seed)?.cast::<f64>();
                crate::attention::lpam_graph(&mut tape, x, &p.lpam, "lpam")?
            }
            "attention_fusion" => {
                let rgb = tape.input("rgb", x_raw.cast());
                let ir = tape.input("ir", gen.tensor_symmetric(dims, 1.0).cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::asff::attention_fusion_graph(&mut tape, rgb, ir, &p)?
            }
            "dfm" => {
                let x = tape.input("f_a", x_raw.cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::asff::dfm_graph(&mut tape, x, &p.dfm)?
            }
            "fm" => {
                let x = tape.input("f_dr", x_raw.cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::asff::fm_graph(&mut tape, x, &p.fm, BnMode::Train)?
            }
            "fmb" => {
                let x = tape.input("f_a", x_raw.cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::asff::fmb_graph(&mut tape, x, &p.dfm, &p.fm, BnMode::Train)?
            }
            "asff" => {
                let rgb = tape.input("rgb", x_raw.cast());
                let ir = tape.input("ir", gen.tensor_symmetric(dims, 1.0).cast());
                let p = crate::init::asff_params(&cfg, params_seed)?.cast::<f64>();
                crate::asff::asff_graph(&mut tape, rgb, ir, &p, BnMode::Train)?.f_c
            }
            "fatm" => {
                let x = tape.input("p", x_raw.cast());
                let p = crate::init::fatm_params(&cfg, params_seed)?.cast::<f64>();
                crate::fatm::fatm_graph(&mut tape, x, &p, BnMode::Train)?.out
            }
            other => {
                return Err(crate::error::Error::Usage(format!(
                    "unknown gradcheck module '{other}'"
                )))
            }
        };
        Ok((tape, out))
    };

    check_with_clean_draw(build, seed, h, tol)
}

/// Deterministic dense seed vector in (-1, 1) for the `<seed, out>` pairing.
pub fn seed_tensor(dims: [usize; 4], seed: u64) -> Tensor<f64> {
    crate::rng::SeededGen::new(seed).tensor_symmetric(dims, 1.0).cast()
}
