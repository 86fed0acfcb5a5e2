//! Compute the four attention gates on one feature map and report their
//! ranges: channel and positional gates live in (0, 1); the lightweight
//! channel gate sums two sigmoids and lives in (0, 2).

use fusekit::attention::{cam_gate, lcam_forward, lpam_forward, pam_gates};
use fusekit::config::ModuleConfig;
use fusekit::init;
use fusekit::rng::SeededGen;
use fusekit::tensor::Tensor;

fn range(name: &str, t: &Tensor<f32>) {
    let lo = t.data().iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = t.data().iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    println!("{name:<22} {:?}  in ({lo:.4}, {hi:.4})", t.dims());
}

fn main() -> Result<(), fusekit::Error> {
    let x = SeededGen::new(11).tensor_symmetric([1, 16, 12, 12], 1.5);

    let asff_cfg = ModuleConfig::with_defaults(16);
    let asff = init::asff_params(&asff_cfg, 1)?;
    range("channel gate", &cam_gate(&x, &asff.cam_rgb)?);
    let (att_h, att_v) = pam_gates(&x, &asff.pam)?;
    range("horizontal gate", &att_h);
    range("vertical gate", &att_v);

    let fatm_cfg = ModuleConfig { lcam_ratio: 4, ..asff_cfg };
    let fatm = init::fatm_params(&fatm_cfg, 1)?;
    range("light channel gate", &lcam_forward(&x, &fatm.lcam)?);
    range("light positional gate", &lpam_forward(&x, &fatm.lpam)?);
    Ok(())
}
