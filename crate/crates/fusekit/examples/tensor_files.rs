//! The binary tensor and weight-archive formats: fixed little-endian layout,
//! bit-exact roundtrips.

use fusekit::config::{Module, ModuleConfig};
use fusekit::rng::SeededGen;
use fusekit::tensor::Tensor;
use fusekit::{init, io};

fn main() -> Result<(), fusekit::Error> {
    let dir = std::env::temp_dir().join("fusekit_tensor_files");
    std::fs::create_dir_all(&dir)?;

    // a 1x1x1x1 tensor holding 1.0 serializes to 28 pinned bytes
    let unit = Tensor::new([1, 1, 1, 1], vec![1.0f32])?;
    let bytes = io::tensor_to_bytes(&unit);
    print!("unit tensor ({} bytes):", bytes.len());
    for b in &bytes {
        print!(" {b:02x}");
    }
    println!();

    let tensor = SeededGen::new(5).tensor_symmetric([2, 4, 6, 6], 1.0);
    let path = dir.join("features.tensor");
    io::write_tensor(&path, &tensor)?;
    let back = io::read_tensor(&path)?;
    println!("tensor roundtrip bit-exact: {}", back.bit_eq(&tensor));

    let config = ModuleConfig { lcam_ratio: 4, ..ModuleConfig::with_defaults(16) };
    let archive = init::init_weights(&config, Module::Fatm, 7)?;
    let path = dir.join("neck.weights");
    archive.write(&path)?;
    let back = io::WeightArchive::read(&path)?;
    println!("archive entries ({} total, file order):", back.len());
    for (name, t) in back.entries().iter().take(6) {
        println!("  {name:<24} {:?}", t.dims());
    }
    println!("  ...");
    back.validate_manifest(&init::manifest(&config, Module::Fatm)?)?;
    println!("manifest validation passed; bytes identical: {}", back.to_bytes() == archive.to_bytes());
    Ok(())
}
