//! Deterministic parameter initialization.
//!
//! Conv weights and biases draw uniform values in ±sqrt(1/fan_in) from the
//! seeded generator, visiting tensors in their archive order; batch-norm
//! scale/shift and the modulation vectors are set to their neutral values
//! without consuming draws. The draw order is part of the format: identical
//! seeds yield byte-identical archives.

use crate::asff::AsffParams;
use crate::config::{Module, ModuleConfig};
use crate::error::{Error, Result};
use crate::fatm::FatmParams;
use crate::io::WeightArchive;
use crate::rng::SeededGen;
use crate::tensor::Tensor;

fn fill(name: &str, t: &mut Tensor<f32>, gen: &mut SeededGen, last_fan_in: &mut f64) {
    if name.ends_with(".gamma") || name.ends_with(".running_var") || name.ends_with(".alpha") {
        for v in t.data_mut() {
            *v = 1.0;
        }
    } else if name.ends_with(".running_mean") || name.ends_with(".bn.beta") || name == "dfm.beta" {
        for v in t.data_mut() {
            *v = 0.0;
        }
    } else if name.ends_with(".weight") {
        let [_, in_g, kh, kw] = t.dims();
        let fan_in = (in_g * kh * kw) as f64;
        *last_fan_in = fan_in;
        let bound = (1.0 / fan_in).sqrt();
        for v in t.data_mut() {
            *v = gen.symmetric(bound) as f32;
        }
    } else if name.ends_with(".bias") {
        let bound = (1.0 / *last_fan_in).sqrt();
        for v in t.data_mut() {
            *v = gen.symmetric(bound) as f32;
        }
    } else {
        unreachable!("unclassified parameter name {name}");
    }
}

/// Freshly initialized fusion-unit parameters.
pub fn asff_params(config: &ModuleConfig, seed: u64) -> Result<AsffParams<f32>> {
    config.validate(Module::Asff)?;
    let mut p = AsffParams::zeros(config.channels, config.groups, config.cam_kernel)?;
    let mut gen = SeededGen::new(seed);
    let mut fan_in = 1.0;
    p.for_each_mut(&mut |name, t| fill(&name, t, &mut gen, &mut fan_in));
    Ok(p)
}

/// Freshly initialized neck-block parameters.
pub fn fatm_params(config: &ModuleConfig, seed: u64) -> Result<FatmParams<f32>> {
    config.validate(Module::Fatm)?;
    let mut p = FatmParams::zeros(config.channels, config.lcam_ratio)?;
    let mut gen = SeededGen::new(seed);
    let mut fan_in = 1.0;
    p.for_each_mut(&mut |name, t| fill(&name, t, &mut gen, &mut fan_in));
    Ok(p)
}

/// Expected archive entries (name and extents) for a config, in file order.
pub fn manifest(config: &ModuleConfig, which: Module) -> Result<Vec<(String, [usize; 4])>> {
    let mut out = Vec::new();
    match which {
        Module::Asff => {
            config.validate(which)?;
            let p = AsffParams::<f32>::zeros(config.channels, config.groups, config.cam_kernel)?;
            p.for_each(&mut |name, t| out.push((name, t.dims())));
        }
        Module::Fatm => {
            config.validate(which)?;
            let p = FatmParams::<f32>::zeros(config.channels, config.lcam_ratio)?;
            p.for_each(&mut |name, t| out.push((name, t.dims())));
        }
    }
    Ok(out)
}

/// Fills an archive from a parameter walk.
fn pack(walk: impl FnOnce(&mut dyn FnMut(String, &Tensor<f32>))) -> Result<WeightArchive> {
    let mut archive = WeightArchive::new();
    let mut status = Ok(());
    walk(&mut |name, t| {
        if status.is_ok() {
            status = archive.push(&name, t.clone());
        }
    });
    status.map(|_| archive)
}

pub fn asff_to_archive(p: &AsffParams<f32>) -> Result<WeightArchive> {
    pack(|f| p.for_each(f))
}

pub fn fatm_to_archive(p: &FatmParams<f32>) -> Result<WeightArchive> {
    pack(|f| p.for_each(f))
}

/// Replaces every tensor of a zero-built parameter set with its archive
/// entry, insisting on exact names and extents and no unused entries.
fn unpack(
    archive: &WeightArchive,
    walk: impl FnOnce(&mut dyn FnMut(String, &mut Tensor<f32>)),
) -> Result<()> {
    let mut status: Result<()> = Ok(());
    let mut used = 0usize;
    walk(&mut |name, t| {
        if status.is_err() {
            return;
        }
        match archive.get(&name) {
            None => status = Err(Error::Config(format!("archive is missing entry '{name}'"))),
            Some(stored) if stored.dims() != t.dims() => {
                status = Err(Error::Config(format!(
                    "entry '{name}' has extents {:?}, module expects {:?}",
                    stored.dims(),
                    t.dims()
                )));
            }
            Some(stored) => {
                *t = stored.clone();
                used += 1;
            }
        }
    });
    status?;
    if used != archive.len() {
        return Err(Error::Config(format!(
            "archive holds {} entries, module uses {used}",
            archive.len()
        )));
    }
    Ok(())
}

/// Rebuilds fusion-unit parameters from an archive. The shuffle group count
/// is structural rather than a tensor, so the caller supplies it.
pub fn asff_from_archive(archive: &WeightArchive, groups: usize) -> Result<AsffParams<f32>> {
    let pam_w = archive
        .get("pam_h.weight")
        .ok_or_else(|| Error::Config("archive is missing entry 'pam_h.weight'".into()))?;
    let channels = pam_w.dims()[0];
    let kernel = archive
        .get("cam_rgb.weight")
        .ok_or_else(|| Error::Config("archive is missing entry 'cam_rgb.weight'".into()))?
        .dims()[3];
    let mut p = AsffParams::zeros(channels, groups, kernel)?;
    unpack(archive, |f| p.for_each_mut(f))?;
    Ok(p)
}

/// Rebuilds neck-block parameters from an archive; the bottleneck ratio is
/// recovered from the stored reduction extents.
pub fn fatm_from_archive(archive: &WeightArchive) -> Result<FatmParams<f32>> {
    let cbh = archive
        .get("cbh.conv.weight")
        .ok_or_else(|| Error::Config("archive is missing entry 'cbh.conv.weight'".into()))?;
    let channels = cbh.dims()[0];
    let mid = archive
        .get("lcam.reduce.weight")
        .ok_or_else(|| Error::Config("archive is missing entry 'lcam.reduce.weight'".into()))?
        .dims()[0];
    if mid == 0 || channels % mid != 0 {
        return Err(Error::Config(format!(
            "stored bottleneck width {mid} does not divide {channels} channels"
        )));
    }
    let mut p = FatmParams::zeros(channels, channels / mid)?;
    unpack(archive, |f| p.for_each_mut(f))?;
    Ok(p)
}

/// Allocates, initializes, and packs every parameter tensor for a config.
pub fn init_weights(config: &ModuleConfig, which: Module, seed: u64) -> Result<WeightArchive> {
    match which {
        Module::Asff => asff_to_archive(&asff_params(config, seed)?),
        Module::Fatm => fatm_to_archive(&fatm_params(config, seed)?),
    }
}

/// Entry names that hold state rather than learnable parameters.
pub fn is_state_entry(name: &str) -> bool {
    name.ends_with(".running_mean") || name.ends_with(".running_var")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initialization_is_deterministic_per_seed() {
        let cfg = ModuleConfig::with_defaults(8);
        let a = asff_params(&cfg, 42).unwrap();
        let b = asff_params(&cfg, 42).unwrap();
        let c = asff_params(&cfg, 43).unwrap();
        let mut same = true;
        let mut differs = false;
        a.for_each(&mut |name, t| {
            b.for_each(&mut |n2, t2| {
                if n2 == name && !t.bit_eq(t2) {
                    same = false;
                }
            });
            c.for_each(&mut |n2, t2| {
                if n2 == name && !t.bit_eq(t2) {
                    differs = true;
                }
            });
        });
        assert!(same);
        assert!(differs);
    }

    #[test]
    fn neutral_values_and_bounds() {
        let cfg = ModuleConfig { lcam_ratio: 4, ..ModuleConfig::with_defaults(8) };
        let p = fatm_params(&cfg, 7).unwrap();
        assert!(p.cbh_bn.gamma.data().iter().all(|&v| v == 1.0));
        assert!(p.cbh_bn.beta.data().iter().all(|&v| v == 0.0));
        // cbh fan_in = 8 * 9 = 72
        let bound = (1.0f64 / 72.0).sqrt() as f32;
        assert!(p.cbh_weight.data().iter().all(|&v| v.abs() <= bound));
        assert!(p.cbh_weight.data().iter().any(|&v| v != 0.0));
        let a = asff_params(&ModuleConfig::with_defaults(8), 7).unwrap();
        assert!(a.dfm.alpha.data().iter().all(|&v| v == 1.0));
        assert!(a.dfm.beta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn archive_roundtrip_through_params() {
        let cfg = ModuleConfig { lcam_ratio: 4, ..ModuleConfig::with_defaults(8) };
        let archive = init_weights(&cfg, Module::Asff, 9).unwrap();
        archive.validate_manifest(&manifest(&cfg, Module::Asff).unwrap()).unwrap();
        let p = asff_from_archive(&archive, cfg.groups).unwrap();
        let repacked = asff_to_archive(&p).unwrap();
        assert_eq!(archive.to_bytes(), repacked.to_bytes());

        let archive = init_weights(&cfg, Module::Fatm, 9).unwrap();
        archive.validate_manifest(&manifest(&cfg, Module::Fatm).unwrap()).unwrap();
        let p = fatm_from_archive(&archive).unwrap();
        assert_eq!(p.lcam.ratio, 4);
        let repacked = fatm_to_archive(&p).unwrap();
        assert_eq!(archive.to_bytes(), repacked.to_bytes());
    }

    #[test]
    fn same_seed_byte_identical_archives() {
        let cfg = ModuleConfig::with_defaults(8);
        let a = init_weights(&cfg, Module::Asff, 5).unwrap();
        let b = init_weights(&cfg, Module::Asff, 5).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = init_weights(&cfg, Module::Asff, 6).unwrap();
        assert_ne!(a.to_bytes(), c.to_bytes());
    }

    #[test]
    fn manifest_matches_allocation() {
        let cfg = ModuleConfig::with_defaults(8);
        let p = asff_params(&cfg, 1).unwrap();
        let m = manifest(&cfg, Module::Asff).unwrap();
        let mut walked = Vec::new();
        p.for_each(&mut |name, t| walked.push((name, t.dims())));
        assert_eq!(m, walked);
        assert!(m.iter().any(|(n, _)| n == "dfm.alpha"));
        assert!(is_state_entry("fm.cbs1.bn.running_mean"));
        assert!(!is_state_entry("fm.cbs1.bn.gamma"));
    }
}
