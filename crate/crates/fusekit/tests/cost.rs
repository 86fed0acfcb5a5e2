//! Cost-model checks that cross module boundaries.

use fusekit::config::{Module, ModuleConfig};
use fusekit::cost;
use fusekit::init;

/// At plausible fusion widths the unit's parameter total sits in the
/// hundreds of thousands, matching the published ~0.3M module delta; the
/// 512-wide configuration asserted by the acceptance window lands at ~3.8M
/// instead (see acceptance_07_lightweight_window).
#[test]
fn cost_window_holds_at_plausible_fusion_width() {
    let cfg = ModuleConfig { height: 40, width: 40, ..ModuleConfig::with_defaults(128) };
    let report = cost::cost_report(&cfg, Module::Asff).unwrap();
    assert!(
        (100_000..=1_000_000).contains(&report.total_params),
        "params {} at C=128",
        report.total_params
    );

    let wide = ModuleConfig { height: 20, width: 20, ..ModuleConfig::with_defaults(512) };
    let wide_report = cost::cost_report(&wide, Module::Asff).unwrap();
    assert!(wide_report.total_params > 3_500_000 && wide_report.total_params < 4_200_000);
}

#[test]
fn fatm_cost_parity_with_allocation() {
    let cfg = ModuleConfig { lcam_ratio: 16, height: 20, width: 20, ..ModuleConfig::with_defaults(64) };
    let report = cost::cost_report(&cfg, Module::Fatm).unwrap();
    let archive = init::init_weights(&cfg, Module::Fatm, 3).unwrap();
    let brute: u64 = archive
        .entries()
        .iter()
        .filter(|(n, _)| !init::is_state_entry(n))
        .map(|(_, t)| t.numel() as u64)
        .sum();
    assert_eq!(brute, report.total_params);
    // the shared bottleneck is counted once in parameters, twice in MACs
    let reduce = report.layers.iter().find(|l| l.name == "lcam.reduce").unwrap();
    assert_eq!(reduce.params, (64 / 16) * 64 + 64 / 16);
    assert_eq!(reduce.macs, 2 * 64 * (64 / 16));
}

#[test]
fn pyramid_comparison_rejects_indivisible_extents() {
    let cfg = ModuleConfig { height: 20, width: 20, ..ModuleConfig::with_defaults(8) };
    // 20 halves once to 10; the next halving lands on odd extents, which the
    // fusion unit's global branch cannot account exactly
    assert!(cost::compare_fusion_baselines(&cfg, 2).is_ok());
    assert!(cost::compare_fusion_baselines(&cfg, 3).is_err());
}
