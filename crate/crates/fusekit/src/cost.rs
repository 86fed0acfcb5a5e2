//! Analytic parameter and multiply-accumulate accounting for every layer of
//! the two fusion blocks.
//!
//! Counts come from the shape formulas directly (conv params =
//! out·(in/groups)·kh·kw + out when biased; conv MACs = output positions ×
//! kernel size), never from inspecting allocated tensors — the brute-force
//! enumeration of an initialized weight archive is the independent route the
//! tests compare against.
//!
//! Layer naming convention: entries carrying parameters use the archive
//! prefix of those parameters (`dfm.entry`, `fm.cbs1.bn`); parameter-free
//! work (pools, activations, elementwise arithmetic, data movement) uses a
//! `block:op` name with a colon, so prefix matching on `.` stays unambiguous.

use crate::config::{Module, ModuleConfig};
use crate::error::{Error, Result};

/// One accounted layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    /// Learnable parameter count.
    pub params: u64,
    /// Non-learnable state (batch-norm running statistics).
    pub state: u64,
    /// Multiply-accumulate count at the configured input shape.
    pub macs: u64,
    /// Pool/activation/elementwise work, one op per element; excluded from
    /// the headline GFLOP figure.
    pub pointwise: u64,
}

/// Per-layer breakdown plus exact totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub module: String,
    pub layers: Vec<LayerCost>,
    pub total_params: u64,
    pub total_state: u64,
    pub total_macs: u64,
    pub total_pointwise: u64,
}

impl CostReport {
    /// Headline figure: 2 * MACs / 1e9.
    pub fn gflops(&self) -> f64 {
        2.0 * self.total_macs as f64 / 1e9
    }

    /// Layers whose parameters live in a weight archive (params or state).
    pub fn parameterized_layers(&self) -> impl Iterator<Item = &LayerCost> {
        self.layers.iter().filter(|l| l.params > 0 || l.state > 0)
    }

    /// Fixed-width table with a totals row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} {:>12} {:>10} {:>14} {:>12}\n",
            "layer", "params", "state", "macs", "pointwise"
        ));
        for l in &self.layers {
            out.push_str(&format!(
                "{:<28} {:>12} {:>10} {:>14} {:>12}\n",
                l.name, l.params, l.state, l.macs, l.pointwise
            ));
        }
        out.push_str(&format!(
            "{:<28} {:>12} {:>10} {:>14} {:>12}\n",
            "total", self.total_params, self.total_state, self.total_macs, self.total_pointwise
        ));
        out.push_str(&format!("gflops {:.6}\n", self.gflops()));
        out
    }

    /// Line-oriented `key=value` form.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("module={}\n", self.module));
        for l in &self.layers {
            out.push_str(&format!(
                "layer.{}.params={}\nlayer.{}.state={}\nlayer.{}.macs={}\nlayer.{}.pointwise={}\n",
                l.name, l.params, l.name, l.state, l.name, l.macs, l.name, l.pointwise
            ));
        }
        out.push_str(&format!(
            "total.params={}\ntotal.state={}\ntotal.macs={}\ntotal.pointwise={}\ntotal.gflops={:.6}\n",
            self.total_params, self.total_state, self.total_macs, self.total_pointwise,
            self.gflops()
        ));
        out
    }
}

/// Conv parameter formula: out·(in/groups)·kh·kw, plus out when biased.
pub fn conv_param_count(
    cin: u64,
    cout: u64,
    kh: u64,
    kw: u64,
    groups: u64,
    bias: bool,
) -> u64 {
    cout * (cin / groups) * kh * kw + if bias { cout } else { 0 }
}

/// Conv MAC formula: output positions × out channels × (in/groups)·kh·kw.
pub fn conv_mac_count(
    n: u64,
    oh: u64,
    ow: u64,
    cin: u64,
    cout: u64,
    kh: u64,
    kw: u64,
    groups: u64,
) -> u64 {
    n * oh * ow * cout * (cin / groups) * kh * kw
}

struct Walk {
    prefix: String,
    layers: Vec<LayerCost>,
}

impl Walk {
    fn new(prefix: &str) -> Self {
        Walk { prefix: prefix.to_string(), layers: Vec::new() }
    }

    fn push(&mut self, name: &str, params: u64, state: u64, macs: u64, pointwise: u64) {
        self.layers.push(LayerCost {
            name: format!("{}{}", self.prefix, name),
            params,
            state,
            macs,
            pointwise,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn conv(&mut self, name: &str, n: u64, oh: u64, ow: u64, cin: u64, cout: u64, k: u64, groups: u64, bias: bool) {
        self.push(
            name,
            conv_param_count(cin, cout, k, k, groups, bias),
            0,
            conv_mac_count(n, oh, ow, cin, cout, k, k, groups),
            0,
        );
    }

    fn conv1d(&mut self, name: &str, n: u64, len: u64, k: u64) {
        self.push(name, k + 1, 0, n * len * k, 0);
    }

    fn bn(&mut self, name: &str, n: u64, c: u64, h: u64, w: u64) {
        self.push(name, 2 * c, 2 * c, 0, n * c * h * w);
    }

    fn vector(&mut self, name: &str, c: u64, pointwise: u64) {
        self.push(name, c, 0, 0, pointwise);
    }

    fn op(&mut self, name: &str, pointwise: u64) {
        self.push(name, 0, 0, 0, pointwise);
    }
}

fn finish(module: &str, layers: Vec<LayerCost>) -> CostReport {
    let total_params = layers.iter().map(|l| l.params).sum();
    let total_state = layers.iter().map(|l| l.state).sum();
    let total_macs = layers.iter().map(|l| l.macs).sum();
    let total_pointwise = layers.iter().map(|l| l.pointwise).sum();
    CostReport { module: module.into(), layers, total_params, total_state, total_macs, total_pointwise }
}

fn asff_walk(config: &ModuleConfig, prefix: &str) -> Vec<LayerCost> {
    let n = config.batch as u64;
    let c = config.channels as u64;
    let h = config.height as u64;
    let w = config.width as u64;
    let k = config.cam_kernel as u64;
    let (hh, hw) = (h / 2, w / 2);
    let full = n * c * h * w;
    let mut walk = Walk::new(prefix);

    for branch in ["rgb", "ir"] {
        walk.op(&format!("cam_{branch}:pool"), full);
        walk.conv1d(&format!("cam_{branch}"), n, c, k);
        walk.op(&format!("cam_{branch}:sigmoid"), n * c);
        walk.op(&format!("cam_{branch}:mul"), full);
        walk.op(&format!("stage1:residual_{branch}"), full);
        walk.conv(&format!("dw_{branch}"), n, h, w, c, c, 3, c, true);
    }
    walk.op("stage1:sum", full);
    walk.op("pam_h:pool", full);
    walk.conv("pam_h", n, h, 1, c, c, 1, 1, true);
    walk.op("pam_h:sigmoid", n * c * h);
    walk.op("pam_v:pool", full);
    walk.conv("pam_v", n, 1, w, c, c, 1, 1, true);
    walk.op("pam_v:sigmoid", n * c * w);
    walk.op("pam:mul", 2 * full);

    walk.op("dfm:l2norm", full);
    walk.conv("dfm.entry", n, h, w, c, 2 * c, 1, 1, true);
    walk.op("dfm:split", 0);
    walk.op("dfm:maxpool", full);
    walk.conv("dfm.global_dw", n, hh, hw, c, c, 3, c, true);
    walk.op("dfm:variance", full);
    walk.vector("dfm.alpha", c, n * c * hh * hw);
    walk.vector("dfm.beta", c, n * c);
    walk.op("dfm:modulate_add", n * c * hh * hw);
    walk.conv("dfm.modulate", n, hh, hw, c, c, 1, 1, true);
    walk.op("dfm:gelu", n * c * hh * hw);
    walk.op("dfm:upsample", 0);
    walk.op("dfm:global_mul", full);
    walk.conv("dfm.local_dw", n, h, w, c, c, 3, c, true);
    walk.conv("dfm.local_expand", n, h, w, c, 2 * c, 1, 1, true);
    walk.op("dfm:local_gelu", 2 * full);
    walk.conv("dfm.local_project", n, h, w, 2 * c, c, 1, 1, true);
    walk.op("dfm:branch_add", full);
    walk.conv("dfm.exit", n, h, w, c, c, 1, 1, true);
    walk.op("fmb:dfm_residual", full);

    walk.op("fm:l2norm", full);
    walk.conv("fm.expand", n, h, w, c, 2 * c, 1, 1, true);
    walk.op("fm:gelu", 2 * full);
    walk.op("fm:split", 0);
    let half = c / 2;
    walk.conv("fm.cbs1.conv", n, h, w, half, half, 1, 1, false);
    walk.bn("fm.cbs1.bn", n, half, h, w);
    walk.op("fm.cbs1:silu", n * half * h * w);
    walk.conv("fm.dw.conv", n, h, w, half, half, 3, half, false);
    walk.bn("fm.dw.bn", n, half, h, w);
    walk.conv("fm.cbs2.conv", n, h, w, half, half, 1, 1, false);
    walk.bn("fm.cbs2.bn", n, half, h, w);
    walk.op("fm.cbs2:silu", n * half * h * w);
    walk.op("fm:encode_gelu", n * half * h * w);
    walk.op("fm:concat", 0);
    walk.conv("fm.merge", n, h, w, 2 * c, c, 1, 1, true);
    walk.op("fmb:fm_residual", full);

    walk.op("shuffle", 0);
    walk.layers
}

fn fatm_walk(config: &ModuleConfig, prefix: &str) -> Vec<LayerCost> {
    let n = config.batch as u64;
    let c = config.channels as u64;
    let h = config.height as u64;
    let w = config.width as u64;
    let r = config.lcam_ratio as u64;
    let mid = c / r;
    let full = n * c * h * w;
    let mut walk = Walk::new(prefix);

    walk.conv("cbh.conv", n, h, w, c, c, 3, 1, false);
    walk.bn("cbh.bn", n, c, h, w);
    walk.op("cbh:hardswish", full);

    walk.op("lcam:avg_pool", full);
    walk.op("lcam:max_pool", full);
    // shared bottleneck applied once per pooled branch
    walk.push(
        "lcam.reduce",
        conv_param_count(c, mid, 1, 1, 1, true),
        0,
        2 * conv_mac_count(n, 1, 1, c, mid, 1, 1, 1),
        0,
    );
    walk.op("lcam:relu", 2 * n * mid);
    walk.push(
        "lcam.expand",
        conv_param_count(mid, c, 1, 1, 1, true),
        0,
        2 * conv_mac_count(n, 1, 1, mid, c, 1, 1, 1),
        0,
    );
    walk.op("lcam:sigmoid", 2 * n * c);
    walk.op("lcam:add", n * c);
    walk.op("fatm:channel_mul", full);

    walk.op("lpam:channel_max", full);
    walk.op("lpam:channel_mean", full);
    walk.op("lpam:concat", 0);
    walk.conv("lpam.conv", n, h, w, 2, 1, 3, 1, true);
    walk.op("lpam:sigmoid", n * h * w);
    walk.op("fatm:positional_mul", full);
    walk.layers
}

/// Exact parameter accounting for a configured block.
pub fn count_params(config: &ModuleConfig, which: Module) -> Result<CostReport> {
    cost_report(config, which)
}

/// Exact multiply-accumulate accounting for a configured block.
pub fn count_flops(config: &ModuleConfig, which: Module) -> Result<CostReport> {
    cost_report(config, which)
}

/// The full per-layer walk; both counters above return the same report.
pub fn cost_report(config: &ModuleConfig, which: Module) -> Result<CostReport> {
    config.validate(which)?;
    let layers = match which {
        Module::Asff => asff_walk(config, ""),
        Module::Fatm => fatm_walk(config, ""),
    };
    Ok(finish(which.name(), layers))
}

/// Costs of one fusion unit at the configured scale versus `n_units` units
/// placed along a feature pyramid, where each deeper stage halves the spatial
/// extents and doubles the channel count.
pub fn compare_fusion_baselines(
    config: &ModuleConfig,
    n_units: usize,
) -> Result<(CostReport, CostReport)> {
    if n_units == 0 {
        return Err(Error::Config("fusion unit count must be >= 1".into()));
    }
    let single = cost_report(config, Module::Asff)?;
    let mut layers = Vec::new();
    for i in 0..n_units {
        let scale = 1usize << i;
        if config.height % scale != 0 || config.width % scale != 0 {
            return Err(Error::Config(format!(
                "pyramid stage {i} needs spatial extents divisible by {scale}, got {}x{}",
                config.height, config.width
            )));
        }
        let stage = ModuleConfig {
            channels: config.channels * scale,
            height: config.height / scale,
            width: config.width / scale,
            ..*config
        };
        stage.validate(Module::Asff)?;
        layers.extend(asff_walk(&stage, &format!("unit{i}.")));
    }
    Ok((single, finish("asff-multi", layers)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_param_formula_reference_points() {
        // 3x3, in 2, out 4, biased: 2*4*9 + 4 = 76
        assert_eq!(conv_param_count(2, 4, 3, 3, 1, true), 76);
        // depthwise 3x3, C = 8, biased: 8*9 + 8 = 80
        assert_eq!(conv_param_count(8, 8, 3, 3, 8, true), 80);
    }

    #[test]
    fn pointwise_conv_macs() {
        // 1x1 conv C->C on HxW: H*W*C*C
        assert_eq!(conv_mac_count(1, 8, 8, 16, 16, 1, 1, 1), 8 * 8 * 16 * 16);
    }

    #[test]
    fn shuffle_and_upsample_cost_nothing() {
        let cfg = ModuleConfig::with_defaults(8);
        let report = cost_report(&cfg, Module::Asff).unwrap();
        let shuffle = report.layers.iter().find(|l| l.name == "shuffle").unwrap();
        assert_eq!((shuffle.params, shuffle.macs), (0, 0));
        let upsample = report.layers.iter().find(|l| l.name == "dfm:upsample").unwrap();
        assert_eq!((upsample.params, upsample.macs), (0, 0));
    }

    #[test]
    fn totals_are_conserved() {
        let cfg = ModuleConfig { lcam_ratio: 4, ..ModuleConfig::with_defaults(16) };
        for which in [Module::Asff, Module::Fatm] {
            let r = cost_report(&cfg, which).unwrap();
            assert_eq!(r.total_params, r.layers.iter().map(|l| l.params).sum::<u64>());
            assert_eq!(r.total_state, r.layers.iter().map(|l| l.state).sum::<u64>());
            assert_eq!(r.total_macs, r.layers.iter().map(|l| l.macs).sum::<u64>());
            assert_eq!(r.total_pointwise, r.layers.iter().map(|l| l.pointwise).sum::<u64>());
        }
    }

    #[test]
    fn counts_monotone_in_channels_and_extent() {
        let base = ModuleConfig::with_defaults(8);
        let wider = ModuleConfig::with_defaults(16);
        let taller = ModuleConfig { height: 16, ..base };
        let a = cost_report(&base, Module::Asff).unwrap();
        let b = cost_report(&wider, Module::Asff).unwrap();
        let c = cost_report(&taller, Module::Asff).unwrap();
        assert!(b.total_params > a.total_params);
        assert!(b.total_macs > a.total_macs);
        assert_eq!(c.total_params, a.total_params);
        assert!(c.total_macs > a.total_macs);
    }

    #[test]
    fn grouped_conv_cost_monotone_in_inverse_groups() {
        let mut last = u64::MAX;
        for g in [1u64, 2, 4, 8] {
            let p = conv_param_count(8, 8, 3, 3, g, true);
            let m = conv_mac_count(1, 4, 4, 8, 8, 3, 3, g);
            assert!(p <= last);
            assert!(m <= conv_mac_count(1, 4, 4, 8, 8, 3, 3, 1));
            last = p;
        }
    }

    #[test]
    fn pyramid_comparison_degenerates_at_one_unit() {
        let cfg = ModuleConfig::with_defaults(8);
        let (single, multi) = compare_fusion_baselines(&cfg, 1).unwrap();
        assert_eq!(single.total_params, multi.total_params);
        assert_eq!(single.total_macs, multi.total_macs);
    }

    #[test]
    fn pyramid_multi_strictly_exceeds_single() {
        let cfg = ModuleConfig { height: 16, width: 16, ..ModuleConfig::with_defaults(8) };
        let (single, multi) = compare_fusion_baselines(&cfg, 3).unwrap();
        assert!(multi.total_params > single.total_params);
        assert!(multi.total_macs > single.total_macs);
    }

    #[test]
    fn table_and_kv_render() {
        let cfg = ModuleConfig { lcam_ratio: 4, ..ModuleConfig::with_defaults(8) };
        let r = cost_report(&cfg, Module::Fatm).unwrap();
        let table = r.to_table();
        assert!(table.contains("cbh.conv"));
        assert!(table.contains("total"));
        let kv = r.to_kv();
        assert!(kv.contains("layer.lpam.conv.params=19"));
        assert!(kv.contains(&format!("total.params={}", r.total_params)));
    }
}
