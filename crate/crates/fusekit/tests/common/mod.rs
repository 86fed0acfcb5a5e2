//! Shared helpers for the integration suites. Each test binary compiles its
//! own copy, so helpers a given binary does not call are expected.
#![allow(dead_code)]

pub mod naive;

use fusekit::asff::AsffParams;
use fusekit::fatm::FatmParams;
use fusekit::rng::SeededGen;

/// Fusion-unit parameters with every tensor randomized (running variances
/// kept positive) so batch-norm layers act as real affine maps in infer mode.
pub fn random_asff_params(c: usize, groups: usize, seed: u64) -> AsffParams<f32> {
    let mut gen = SeededGen::new(seed);
    let mut p = AsffParams::zeros(c, groups, 3).expect("valid test config");
    p.for_each_mut(&mut |name, t| {
        if name.ends_with("running_var") {
            for v in t.data_mut() {
                *v = (0.5 + gen.unit()) as f32;
            }
        } else {
            *t = gen.tensor_symmetric(t.dims(), 0.5);
        }
    });
    p
}

/// Neck-block parameters randomized the same way.
pub fn random_fatm_params(c: usize, ratio: usize, seed: u64) -> FatmParams<f32> {
    let mut gen = SeededGen::new(seed);
    let mut p = FatmParams::zeros(c, ratio).expect("valid test config");
    p.for_each_mut(&mut |name, t| {
        if name.ends_with("running_var") {
            for v in t.data_mut() {
                *v = (0.5 + gen.unit()) as f32;
            }
        } else {
            *t = gen.tensor_symmetric(t.dims(), 0.5);
        }
    });
    p
}
