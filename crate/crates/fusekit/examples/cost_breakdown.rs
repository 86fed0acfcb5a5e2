//! Per-layer parameter and MAC accounting for both fusion blocks, plus the
//! single-unit versus pyramid comparison.

use fusekit::config::{Module, ModuleConfig};
use fusekit::cost;

fn main() -> Result<(), fusekit::Error> {
    let config = ModuleConfig { height: 40, width: 40, ..ModuleConfig::with_defaults(128) };

    let asff = cost::cost_report(&config, Module::Asff)?;
    println!("fusion unit at C=128, 40x40:\n{}", asff.to_table());

    let fatm = cost::cost_report(&config, Module::Fatm)?;
    println!(
        "neck block at the same scale: {} params, {:.3} gflops",
        fatm.total_params,
        fatm.gflops()
    );

    let (single, multi) = cost::compare_fusion_baselines(&config, 3)?;
    println!("\nsingle fusion unit vs one unit per pyramid stage (3 stages):");
    println!(
        "  single: {:>9} params  {:>7.3} gflops",
        single.total_params,
        single.gflops()
    );
    println!(
        "  multi:  {:>9} params  {:>7.3} gflops  ({:.1}x params)",
        multi.total_params,
        multi.gflops(),
        multi.total_params as f64 / single.total_params as f64
    );
    Ok(())
}
