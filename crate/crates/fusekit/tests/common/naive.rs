//! Deliberately naive straight-line re-implementation of both fusion blocks,
//! written directly from the defining equations over flat slices. Shares no
//! kernel or tape code with the library — only the tensor container and the
//! parameter structs as plain data. Every step accumulates in f64 and rounds
//! to f32 at the step boundary, matching the library's numeric convention.

use fusekit::asff::AsffParams;
use fusekit::fatm::FatmParams;
use fusekit::tensor::Tensor;

type D4 = [usize; 4];

fn at(dims: D4, n: usize, c: usize, h: usize, w: usize) -> usize {
    ((n * dims[1] + c) * dims[2] + h) * dims[3] + w
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn hardswish(x: f64) -> f64 {
    x * (x + 3.0).clamp(0.0, 6.0) / 6.0
}

fn map(x: &[f32], f: impl Fn(f64) -> f64) -> Vec<f32> {
    x.iter().map(|&v| f(v as f64) as f32).collect()
}

fn add(a: &[f32], b: &[f32]) -> Vec<f32> {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 + y as f64) as f32).collect()
}

/// Dense or grouped 2-D cross-correlation, square kernel, stride 1.
fn conv2d(
    x: &[f32],
    xd: D4,
    weight: &[f32],
    cout: usize,
    k: usize,
    pad: usize,
    groups: usize,
    bias: Option<&[f32]>,
) -> (Vec<f32>, D4) {
    let [n, cin, h, w] = xd;
    let icg = cin / groups;
    let ocg = cout / groups;
    let od = [n, cout, h + 2 * pad + 1 - k, w + 2 * pad + 1 - k];
    let mut out = vec![0f32; od.iter().product()];
    for ni in 0..n {
        for oc in 0..cout {
            let g = oc / ocg;
            for oy in 0..od[2] {
                for ox in 0..od[3] {
                    let mut acc = bias.map_or(0.0, |b| b[oc] as f64);
                    for icl in 0..icg {
                        let ic = g * icg + icl;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy + ky;
                                let ix = ox + kx;
                                if iy < pad || ix < pad || iy - pad >= h || ix - pad >= w {
                                    continue;
                                }
                                let xv = x[at(xd, ni, ic, iy - pad, ix - pad)] as f64;
                                let wv = weight[((oc * icg + icl) * k + ky) * k + kx] as f64;
                                acc += xv * wv;
                            }
                        }
                    }
                    out[at(od, ni, oc, oy, ox)] = acc as f32;
                }
            }
        }
    }
    (out, od)
}

/// Per-channel batch normalization with explicit statistics.
fn bn_apply(x: &[f32], xd: D4, gamma: &[f32], beta: &[f32], mean: &[f64], var: &[f64]) -> Vec<f32> {
    let [n, c, h, w] = xd;
    let mut out = vec![0f32; x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let inv = 1.0 / (var[ci] + 1e-5).sqrt();
            for y in 0..h {
                for xx in 0..w {
                    let i = at(xd, ni, ci, y, xx);
                    out[i] =
                        ((x[i] as f64 - mean[ci]) * inv * gamma[ci] as f64 + beta[ci] as f64) as f32;
                }
            }
        }
    }
    out
}

/// Batch normalization; train mode recomputes population batch statistics.
fn bn(
    x: &[f32],
    xd: D4,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    train: bool,
) -> Vec<f32> {
    let [n, c, h, w] = xd;
    if !train {
        let mean: Vec<f64> = running_mean.iter().map(|&v| v as f64).collect();
        let var: Vec<f64> = running_var.iter().map(|&v| v as f64).collect();
        return bn_apply(x, xd, gamma, beta, &mean, &var);
    }
    let m = (n * h * w) as f64;
    let mut mean = vec![0f64; c];
    let mut var = vec![0f64; c];
    for ci in 0..c {
        let mut acc = 0.0;
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    acc += x[at(xd, ni, ci, y, xx)] as f64;
                }
            }
        }
        let mu = acc / m;
        let mut sq = 0.0;
        for ni in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let d = x[at(xd, ni, ci, y, xx)] as f64 - mu;
                    sq += d * d;
                }
            }
        }
        // the library stores batch statistics as f32 before normalizing
        mean[ci] = mu as f32 as f64;
        var[ci] = (sq / m) as f32 as f64;
    }
    bn_apply(x, xd, gamma, beta, &mean, &var)
}

/// Channel attention: x ⊙ σ(Conv1d(AP(x))).
fn cam(x: &[f32], xd: D4, taps: &[f32], bias: f32) -> Vec<f32> {
    let [n, c, h, w] = xd;
    let k = taps.len();
    let half = (k - 1) / 2;
    let mut out = vec![0f32; x.len()];
    for ni in 0..n {
        // adaptive average pool to one value per channel
        let mut pooled = vec![0f32; c];
        for (ci, slot) in pooled.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for y in 0..h {
                for xx in 0..w {
                    acc += x[at(xd, ni, ci, y, xx)] as f64;
                }
            }
            *slot = (acc / (h * w) as f64) as f32;
        }
        // 1-D conv across the channel axis, same padding, then sigmoid
        for ci in 0..c {
            let mut acc = bias as f64;
            for (j, &t) in taps.iter().enumerate() {
                let q = ci as isize + j as isize - half as isize;
                if q >= 0 && (q as usize) < c {
                    acc += pooled[q as usize] as f64 * t as f64;
                }
            }
            let gate = sigmoid(acc as f32 as f64) as f32;
            for y in 0..h {
                for xx in 0..w {
                    let i = at(xd, ni, ci, y, xx);
                    out[i] = (x[i] as f64 * gate as f64) as f32;
                }
            }
        }
    }
    out
}

/// Positional attention: x ⊙ σ(Conv(Avg_h(x))) ⊙ σ(Conv(Avg_v(x))).
#[allow(clippy::too_many_arguments)]
fn pam(
    x: &[f32],
    xd: D4,
    hw: &[f32],
    hb: &[f32],
    vw: &[f32],
    vb: &[f32],
) -> Vec<f32> {
    let [n, c, h, w] = xd;
    let mut out = vec![0f32; x.len()];
    for ni in 0..n {
        // width-averaged strip (C x H), pointwise conv, sigmoid
        let mut strip_h = vec![0f32; c * h];
        for ci in 0..c {
            for y in 0..h {
                let mut acc = 0.0f64;
                for xx in 0..w {
                    acc += x[at(xd, ni, ci, y, xx)] as f64;
                }
                strip_h[ci * h + y] = (acc / w as f64) as f32;
            }
        }
        let mut att_h = vec![0f32; c * h];
        for oc in 0..c {
            for y in 0..h {
                let mut acc = hb[oc] as f64;
                for ic in 0..c {
                    acc += hw[oc * c + ic] as f64 * strip_h[ic * h + y] as f64;
                }
                att_h[oc * h + y] = sigmoid(acc as f32 as f64) as f32;
            }
        }
        // height-averaged strip (C x W)
        let mut strip_v = vec![0f32; c * w];
        for ci in 0..c {
            for xx in 0..w {
                let mut acc = 0.0f64;
                for y in 0..h {
                    acc += x[at(xd, ni, ci, y, xx)] as f64;
                }
                strip_v[ci * w + xx] = (acc / h as f64) as f32;
            }
        }
        let mut att_v = vec![0f32; c * w];
        for oc in 0..c {
            for xx in 0..w {
                let mut acc = vb[oc] as f64;
                for ic in 0..c {
                    acc += vw[oc * c + ic] as f64 * strip_v[ic * w + xx] as f64;
                }
                att_v[oc * w + xx] = sigmoid(acc as f32 as f64) as f32;
            }
        }
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = at(xd, ni, ci, y, xx);
                    let gated = x[i] as f64 * att_h[ci * h + y] as f64;
                    out[i] = (gated as f32 as f64 * att_v[ci * w + xx] as f64) as f32;
                }
            }
        }
    }
    out
}

/// L2 normalization of each channel vector.
fn l2norm(x: &[f32], xd: D4) -> Vec<f32> {
    let [n, c, h, w] = xd;
    let mut out = vec![0f32; x.len()];
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let mut sq = 0.0f64;
                for ci in 0..c {
                    let v = x[at(xd, ni, ci, y, xx)] as f64;
                    sq += v * v;
                }
                let denom = sq.sqrt().max(1e-6);
                for ci in 0..c {
                    let i = at(xd, ni, ci, y, xx);
                    out[i] = (x[i] as f64 / denom) as f32;
                }
            }
        }
    }
    out
}

/// Straight-line transcription of the whole fusion unit.
pub fn asff_naive(
    rgb: &Tensor<f32>,
    ir: &Tensor<f32>,
    p: &AsffParams<f32>,
    train_bn: bool,
) -> Tensor<f32> {
    let xd = rgb.dims();
    let [n, c, h, w] = xd;

    // ── Stage 1: attention fusion ────────────────────────────────────────
    // channel gates: M = CAM(P)
    let m_rgb = cam(rgb.data(), xd, p.cam_rgb.weight.data(), p.cam_rgb.bias.data()[0]);
    let m_ir = cam(ir.data(), xd, p.cam_ir.weight.data(), p.cam_ir.bias.data()[0]);
    // residual depthwise sharpening: M̂ = DWConv(P + M)
    let (mh_rgb, _) = conv2d(
        &add(rgb.data(), &m_rgb),
        xd,
        p.dw_rgb_weight.data(),
        c,
        3,
        1,
        c,
        Some(p.dw_rgb_bias.data()),
    );
    let (mh_ir, _) = conv2d(
        &add(ir.data(), &m_ir),
        xd,
        p.dw_ir_weight.data(),
        c,
        3,
        1,
        c,
        Some(p.dw_ir_bias.data()),
    );
    // positional gating of the branch sum: F_a = PAM(M̂_rgb + M̂_ir)
    let f_a = pam(
        &add(&mh_rgb, &mh_ir),
        xd,
        p.pam.h_weight.data(),
        p.pam.h_bias.data(),
        p.pam.v_weight.data(),
        p.pam.v_bias.data(),
    );

    // ── Stage 2: feature modulation fusion ──────────────────────────────
    // normalize, expand, split: {X, Y} = S(Conv(||F_a||2))
    let normed = l2norm(&f_a, xd);
    let (expanded, ed) =
        conv2d(&normed, xd, p.dfm.entry_weight.data(), 2 * c, 1, 0, 1, Some(p.dfm.entry_bias.data()));
    let plane = ed[2] * ed[3];
    let mut x_half = vec![0f32; n * c * plane];
    let mut y_half = vec![0f32; n * c * plane];
    let hd = [n, c, h, w];
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..plane {
                x_half[(ni * c + ci) * plane + i] = expanded[at(ed, ni, ci, 0, i)];
                y_half[(ni * c + ci) * plane + i] = expanded[at(ed, ni, c + ci, 0, i)];
            }
        }
    }

    // structural map at half resolution: X_s = DWConv(D(X)), D = 2x adaptive max pool
    let (hh, hw2) = (h / 2, w / 2);
    let pd = [n, c, hh, hw2];
    let mut pooled = vec![0f32; n * c * hh * hw2];
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..hh {
                for ox in 0..hw2 {
                    let mut best = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            best = best.max(x_half[at(hd, ni, ci, 2 * oy + dy, 2 * ox + dx)]);
                        }
                    }
                    pooled[at(pd, ni, ci, oy, ox)] = best;
                }
            }
        }
    }
    let (x_s, _) =
        conv2d(&pooled, pd, p.dfm.global_dw_weight.data(), c, 3, 1, c, Some(p.dfm.global_dw_bias.data()));

    // variance modulation: X_m = Conv(X_s * alpha + sigma^2(X) * beta)
    let mut variance = vec![0f32; n * c];
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = 0.0f64;
            for i in 0..plane {
                acc += x_half[(ni * c + ci) * plane + i] as f64;
            }
            let mu = acc / plane as f64;
            let mut sq = 0.0f64;
            for i in 0..plane {
                let d = x_half[(ni * c + ci) * plane + i] as f64 - mu;
                sq += d * d;
            }
            variance[ni * c + ci] = (sq / plane as f64) as f32;
        }
    }
    let mut mixed = vec![0f32; x_s.len()];
    for ni in 0..n {
        for ci in 0..c {
            let scaled_var =
                (variance[ni * c + ci] as f64 * p.dfm.beta.data()[ci] as f64) as f32;
            for i in 0..hh * hw2 {
                let idx = (ni * c + ci) * hh * hw2 + i;
                let scaled = (x_s[idx] as f64 * p.dfm.alpha.data()[ci] as f64) as f32;
                mixed[idx] = (scaled as f64 + scaled_var as f64) as f32;
            }
        }
    }
    let (x_m, _) =
        conv2d(&mixed, pd, p.dfm.modulate_weight.data(), c, 1, 0, 1, Some(p.dfm.modulate_bias.data()));

    // global gating: X_g = X ⊙ U(φ(X_m)), U = nearest upsample
    let lifted = map(&x_m, gelu);
    let mut x_g = vec![0f32; x_half.len()];
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let up = lifted[at(pd, ni, ci, y / 2, xx / 2)];
                    let i = at(hd, ni, ci, y, xx);
                    x_g[i] = (x_half[i] as f64 * up as f64) as f32;
                }
            }
        }
    }

    // local bottleneck: Y_h = Conv(DWConv(Y)); Y_l = Conv(φ(Y_h))
    let (enc, _) =
        conv2d(&y_half, hd, p.dfm.local_dw_weight.data(), c, 3, 1, c, Some(p.dfm.local_dw_bias.data()));
    let (y_high, yd) = conv2d(
        &enc,
        hd,
        p.dfm.local_expand_weight.data(),
        2 * c,
        1,
        0,
        1,
        Some(p.dfm.local_expand_bias.data()),
    );
    let (y_l, _) = conv2d(
        &map(&y_high, gelu),
        yd,
        p.dfm.local_project_weight.data(),
        c,
        1,
        0,
        1,
        Some(p.dfm.local_project_bias.data()),
    );

    // branch merge and residual: F_d = Conv(X_g + Y_l); F_dr = F_d + F_a
    let (f_d, _) =
        conv2d(&add(&x_g, &y_l), hd, p.dfm.exit_weight.data(), c, 1, 0, 1, Some(p.dfm.exit_bias.data()));
    let f_dr = add(&f_d, &f_a);

    // feature mapping over F_dr
    let half = c / 2;
    let normed2 = l2norm(&f_dr, xd);
    let (exp2, e2d) = conv2d(
        &normed2,
        xd,
        p.fm.expand_weight.data(),
        2 * c,
        1,
        0,
        1,
        Some(p.fm.expand_bias.data()),
    );
    let lifted2 = map(&exp2, gelu);
    let f1d = [n, half, h, w];
    let f2d = [n, 2 * c - half, h, w];
    let mut f1 = vec![0f32; n * half * h * w];
    let mut f2 = vec![0f32; n * (2 * c - half) * h * w];
    for ni in 0..n {
        for ci in 0..2 * c {
            for i in 0..h * w {
                let v = lifted2[at(e2d, ni, ci, i / w, i % w)];
                if ci < half {
                    f1[(ni * half + ci) * h * w + i] = v;
                } else {
                    f2[(ni * (2 * c - half) + ci - half) * h * w + i] = v;
                }
            }
        }
    }
    // W(x) = CBS(BN(DWConv(CBS(x))))
    let (t1, _) = conv2d(&f1, f1d, p.fm.cbs1.weight.data(), half, 1, 0, 1, None);
    let t1 = bn(
        &t1,
        f1d,
        p.fm.cbs1.bn.gamma.data(),
        p.fm.cbs1.bn.beta.data(),
        p.fm.cbs1.bn.running_mean.data(),
        p.fm.cbs1.bn.running_var.data(),
        train_bn,
    );
    let t1 = map(&t1, silu);
    let (t2, _) = conv2d(&t1, f1d, p.fm.dw_weight.data(), half, 3, 1, half, None);
    let t2 = bn(
        &t2,
        f1d,
        p.fm.dw_bn.gamma.data(),
        p.fm.dw_bn.beta.data(),
        p.fm.dw_bn.running_mean.data(),
        p.fm.dw_bn.running_var.data(),
        train_bn,
    );
    let (t3, _) = conv2d(&t2, f1d, p.fm.cbs2.weight.data(), half, 1, 0, 1, None);
    let t3 = bn(
        &t3,
        f1d,
        p.fm.cbs2.bn.gamma.data(),
        p.fm.cbs2.bn.beta.data(),
        p.fm.cbs2.bn.running_mean.data(),
        p.fm.cbs2.bn.running_var.data(),
        train_bn,
    );
    let t3 = map(&map(&t3, silu), gelu);

    // Concat[φ(W(F1)), F2] then the merge conv; second residual: F_b = F_m + F_dr
    let catd = [n, 2 * c, h, w];
    let mut cat = vec![0f32; n * 2 * c * h * w];
    for ni in 0..n {
        for ci in 0..2 * c {
            for i in 0..h * w {
                cat[at(catd, ni, ci, i / w, i % w)] = if ci < half {
                    t3[at(f1d, ni, ci, i / w, i % w)]
                } else {
                    f2[at(f2d, ni, ci - half, i / w, i % w)]
                };
            }
        }
    }
    let (f_m, _) =
        conv2d(&cat, catd, p.fm.merge_weight.data(), c, 1, 0, 1, Some(p.fm.merge_bias.data()));
    let f_b = add(&f_m, &f_dr);

    // ── Stage 3: channel shuffle ─────────────────────────────────────────
    let groups = p.groups;
    let per = c / groups;
    let mut f_c = vec![0f32; f_b.len()];
    for ni in 0..n {
        for g in 0..groups {
            for cj in 0..per {
                for i in 0..h * w {
                    f_c[at(xd, ni, cj * groups + g, i / w, i % w)] =
                        f_b[at(xd, ni, g * per + cj, i / w, i % w)];
                }
            }
        }
    }
    Tensor::new(xd, f_c).unwrap()
}

/// Straight-line transcription of the neck block.
pub fn fatm_naive(x: &Tensor<f32>, p: &FatmParams<f32>, train_bn: bool) -> Tensor<f32> {
    let xd = x.dims();
    let [n, c, h, w] = xd;

    // stem: F_h = Hardswish(BN(Conv3x3(P)))
    let (conv, _) = conv2d(x.data(), xd, p.cbh_weight.data(), c, 3, 1, 1, None);
    let normed = bn(
        &conv,
        xd,
        p.cbh_bn.gamma.data(),
        p.cbh_bn.beta.data(),
        p.cbh_bn.running_mean.data(),
        p.cbh_bn.running_var.data(),
        train_bn,
    );
    let f_h = map(&normed, hardswish);

    // channel gate: LCAM = σ(bottleneck(AP)) + σ(bottleneck(MP))
    let mid = c / p.lcam.ratio;
    let mut gate = vec![0f32; n * c];
    for ni in 0..n {
        let mut avg = vec![0f32; c];
        let mut max = vec![f32::NEG_INFINITY; c];
        for ci in 0..c {
            let mut acc = 0.0f64;
            for y in 0..h {
                for xx in 0..w {
                    let v = f_h[at(xd, ni, ci, y, xx)];
                    acc += v as f64;
                    max[ci] = max[ci].max(v);
                }
            }
            avg[ci] = (acc / (h * w) as f64) as f32;
        }
        for branch in [&avg, &max] {
            let mut squeezed = vec![0f32; mid];
            for (m, slot) in squeezed.iter_mut().enumerate() {
                let mut acc = p.lcam.reduce_bias.data()[m] as f64;
                for ci in 0..c {
                    acc += p.lcam.reduce_weight.data()[m * c + ci] as f64 * branch[ci] as f64;
                }
                *slot = (acc as f32).max(0.0);
            }
            for ci in 0..c {
                let mut acc = p.lcam.expand_bias.data()[ci] as f64;
                for (m, &v) in squeezed.iter().enumerate() {
                    acc += p.lcam.expand_weight.data()[ci * mid + m] as f64 * v as f64;
                }
                let squashed = sigmoid(acc as f32 as f64) as f32;
                gate[ni * c + ci] = (gate[ni * c + ci] as f64 + squashed as f64) as f32;
            }
        }
    }

    // F_LC = F_h ⊙ LCAM(F_h)
    let mut f_lc = vec![0f32; f_h.len()];
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h * w {
                let idx = at(xd, ni, ci, i / w, i % w);
                f_lc[idx] = (f_h[idx] as f64 * gate[ni * c + ci] as f64) as f32;
            }
        }
    }

    // positional gate: LPAM = σ(Conv3x3(Concat[F_Max, F_Mean])) over channel maps
    let md = [n, 2, h, w];
    let mut maps = vec![0f32; n * 2 * h * w];
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let mut best = f32::NEG_INFINITY;
                let mut acc = 0.0f64;
                for ci in 0..c {
                    let v = f_lc[at(xd, ni, ci, y, xx)];
                    best = best.max(v);
                    acc += v as f64;
                }
                maps[at(md, ni, 0, y, xx)] = best;
                maps[at(md, ni, 1, y, xx)] = (acc / c as f64) as f32;
            }
        }
    }
    let (conv_pos, cd) = conv2d(&maps, md, p.lpam.weight.data(), 1, 3, 1, 1, Some(p.lpam.bias.data()));
    let pos = map(&conv_pos, sigmoid);

    // F_LP = F_LC ⊙ LPAM(F_LC)
    let mut out = vec![0f32; f_lc.len()];
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = at(xd, ni, ci, y, xx);
                    out[i] = (f_lc[i] as f64 * pos[at(cd, ni, 0, y, xx)] as f64) as f32;
                }
            }
        }
    }
    Tensor::new(xd, out).unwrap()
}
