//! End-to-end command-line flows against real files.

use fusekit::cli::cli_dispatch;
use fusekit::config::{Module, ModuleConfig};
use fusekit::rng::SeededGen;
use fusekit::{cost, init, io};

fn run(args: &[String]) -> i32 {
    cli_dispatch(args.iter().cloned())
}

fn args(parts: &[&str]) -> Vec<String> {
    parts.iter().map(|s| s.to_string()).collect()
}

#[test]
fn fuse_flow_roundtrips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();

    let mut gen = SeededGen::new(7);
    io::write_tensor(path("rgb.tensor"), &gen.tensor_unit([2, 8, 8, 8])).unwrap();
    io::write_tensor(path("ir.tensor"), &gen.tensor_unit([2, 8, 8, 8])).unwrap();

    assert_eq!(
        run(&args(&[
            "init-weights", "--module", "asff", "--channels", "8", "--seed", "5", "--out",
            &path("w.weights")
        ])),
        0
    );
    assert_eq!(
        run(&args(&[
            "fuse", "--rgb", &path("rgb.tensor"), "--ir", &path("ir.tensor"), "--weights",
            &path("w.weights"), "--groups", "4", "--out", &path("fused.tensor")
        ])),
        0
    );
    let fused = io::read_tensor(path("fused.tensor")).unwrap();
    assert_eq!(fused.dims(), [2, 8, 8, 8]);
    assert!(fused.all_finite());

    // library path agrees with the CLI output bit for bit
    let archive = io::WeightArchive::read(path("w.weights")).unwrap();
    let params = init::asff_from_archive(&archive, 4).unwrap();
    let rgb = io::read_tensor(path("rgb.tensor")).unwrap();
    let ir = io::read_tensor(path("ir.tensor")).unwrap();
    let direct =
        fusekit::asff::asff_forward(&rgb, &ir, &params, fusekit::tensor::BnMode::Infer).unwrap();
    assert!(direct.bit_eq(&fused));
}

#[test]
fn fatm_flow_and_ratio_recovery() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();
    let mut gen = SeededGen::new(9);
    io::write_tensor(path("in.tensor"), &gen.tensor_symmetric([1, 16, 6, 6], 1.0)).unwrap();
    assert_eq!(
        run(&args(&[
            "init-weights", "--module", "fatm", "--channels", "16", "--ratio", "4", "--seed",
            "5", "--out", &path("w.weights")
        ])),
        0
    );
    assert_eq!(
        run(&args(&[
            "fatm", "--in", &path("in.tensor"), "--weights", &path("w.weights"), "--out",
            &path("out.tensor")
        ])),
        0
    );
    let out = io::read_tensor(path("out.tensor")).unwrap();
    assert_eq!(out.dims(), [1, 16, 6, 6]);
}

#[test]
fn fuse_rejects_mismatched_modalities_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();
    let mut gen = SeededGen::new(3);
    io::write_tensor(path("rgb.tensor"), &gen.tensor_unit([1, 8, 8, 8])).unwrap();
    io::write_tensor(path("ir.tensor"), &gen.tensor_unit([1, 8, 8, 6])).unwrap();
    run(&args(&[
        "init-weights", "--module", "asff", "--channels", "8", "--seed", "1", "--out",
        &path("w.weights")
    ]));
    assert_eq!(
        run(&args(&[
            "fuse", "--rgb", &path("rgb.tensor"), "--ir", &path("ir.tensor"), "--weights",
            &path("w.weights"), "--groups", "4", "--out", &path("x.tensor")
        ])),
        2
    );
}

#[test]
fn gradcheck_command_exit_codes() {
    // a correct build passes at the default tolerance
    assert_eq!(
        run(&args(&["gradcheck", "--module", "cam", "--channels", "8", "--size", "8", "--seed", "7"])),
        0
    );
    // an absurdly tight tolerance reports a failed check, not an error
    assert_eq!(
        run(&args(&[
            "gradcheck", "--module", "pam", "--channels", "8", "--size", "8", "--seed", "7",
            "--tol", "1e-12"
        ])),
        3
    );
    assert_eq!(
        run(&args(&["gradcheck", "--module", "nonsense", "--channels", "8", "--size", "8", "--seed", "1"])),
        1
    );
}

#[test]
fn count_command_matches_library_totals() {
    // run the real binary and compare its printed totals with the library's
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_fusekit"))
        .args(["count", "--module", "fatm", "--channels", "16", "--height", "8", "--width", "8", "--format", "kv"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let printed = String::from_utf8(output.stdout).unwrap();
    let cfg = ModuleConfig { height: 8, width: 8, ..ModuleConfig::with_defaults(16) };
    let report = cost::cost_report(&cfg, Module::Fatm).unwrap();
    assert!(printed.contains(&format!("total.params={}", report.total_params)));
    assert!(printed.contains(&format!("total.macs={}", report.total_macs)));
    assert!(printed.contains(&format!("total.gflops={:.6}", report.gflops())));
}

#[test]
fn gradcheck_asff_reference_invocation_passes() {
    assert_eq!(
        run(&args(&["gradcheck", "--module", "asff", "--channels", "8", "--size", "8", "--seed", "7"])),
        0
    );
}

#[test]
fn train_toy_divergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("w.weights").display().to_string();
    assert_eq!(
        run(&args(&[
            "train-toy", "--channels", "4", "--size", "4", "--epochs", "50", "--lr", "1e9",
            "--seed", "1", "--samples", "8", "--groups", "2", "--out", &out
        ])),
        3
    );
}

#[test]
fn train_toy_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).display().to_string();
    let base = args(&[
        "train-toy", "--channels", "4", "--size", "4", "--epochs", "3", "--lr", "0.01",
        "--seed", "2", "--samples", "8", "--groups", "2",
    ]);
    let mut first = base.clone();
    first.extend(args(&["--out", &path("a.weights")]));
    let mut second = base.clone();
    second.extend(args(&["--out", &path("b.weights")]));
    assert_eq!(run(&first), 0);
    assert_eq!(run(&second), 0);
    assert_eq!(
        std::fs::read(path("a.weights")).unwrap(),
        std::fs::read(path("b.weights")).unwrap()
    );
}
