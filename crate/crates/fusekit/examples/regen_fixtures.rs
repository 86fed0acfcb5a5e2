//! Regenerates the golden fixture files under tests/fixtures/. The test
//! suite byte-compares against these, so rerun this only on a deliberate
//! format change.

use fusekit::config::{Module, ModuleConfig};
use fusekit::init;
use fusekit::io;
use fusekit::rng::SeededGen;
use fusekit::tensor::Tensor;

fn main() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    std::fs::create_dir_all(&dir).unwrap();

    let unit = Tensor::new([1, 1, 1, 1], vec![1.0f32]).unwrap();
    io::write_tensor(dir.join("golden_unit.tensor"), &unit).unwrap();

    let random = SeededGen::new(0x601d).tensor_symmetric([2, 3, 4, 5], 2.0);
    io::write_tensor(dir.join("golden_random.tensor"), &random).unwrap();

    let cfg = ModuleConfig { groups: 2, lcam_ratio: 2, ..ModuleConfig::with_defaults(4) };
    let archive = init::init_weights(&cfg, Module::Asff, 0x601d).unwrap();
    archive.write(dir.join("golden_asff_c4.weights")).unwrap();

    let mut bad_magic = io::tensor_to_bytes(&unit);
    bad_magic[..4].copy_from_slice(b"XXXX");
    std::fs::write(dir.join("bad_magic.tensor"), bad_magic).unwrap();

    let full = io::tensor_to_bytes(&random);
    std::fs::write(dir.join("truncated.tensor"), &full[..full.len() - 7]).unwrap();

    let mut bad_version = io::tensor_to_bytes(&unit);
    bad_version[4] = 9;
    std::fs::write(dir.join("bad_version.tensor"), bad_version).unwrap();

    println!("fixtures written to {}", dir.display());
}
