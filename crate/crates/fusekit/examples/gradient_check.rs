//! Validate analytic gradients against the central finite-difference oracle,
//! both through the prebuilt module checks and on a hand-rolled graph.

use fusekit::gradcheck::{
    check_module, check_tape_gradients, finite_diff_grad, seed_tensor, DEFAULT_H, DEFAULT_TOL,
};
use fusekit::rng::SeededGen;
use fusekit::tape::Tape;
use fusekit::tensor::{Activation, ConvSpec, Tensor};

fn main() -> Result<(), fusekit::Error> {
    // the scalar-function oracle on its own: d/dx sum(x^2) = 2x
    let at = Tensor::full([1, 1, 1, 1], 3.0f64);
    let grad = finite_diff_grad(|x| Ok(x.data().iter().map(|v| v * v).sum()), &at, DEFAULT_H)?;
    println!("finite differences of sum(x^2) at 3: {:.6} (analytic 6)", grad.data()[0]);

    // prebuilt checks for a primitive and both fusion blocks
    for name in ["conv2d", "asff", "fatm"] {
        let check = check_module(name, 8, 8, 0, DEFAULT_H, DEFAULT_TOL)?;
        println!(
            "{name:<6} max rel err {:.3e} over {} leaves -> {}",
            check.max_rel_err,
            check.leaves.len(),
            if check.passes(DEFAULT_TOL) { "PASS" } else { "FAIL" }
        );
    }

    // the same harness on a custom graph, in f64 for a noise-free oracle
    let mut gen = SeededGen::new(3);
    let mut tape = Tape::<f64>::new();
    let x = tape.input("x", gen.tensor_symmetric([1, 4, 6, 6], 1.0).cast());
    let spec = ConvSpec::depthwise3x3(4, true);
    let w = tape.param("w", gen.tensor_symmetric(spec.weight_dims(), 0.5).cast());
    let b = tape.param("b", gen.tensor_symmetric(spec.bias_dims(), 0.5).cast());
    let conv = tape.conv2d(x, w, Some(b), spec)?;
    let act = tape.act(conv, Activation::Gelu)?;
    let out = tape.l2norm(act, 1e-6)?;
    let seed = seed_tensor(tape.value(out).dims(), 99);
    let check = check_tape_gradients(&tape, out, &seed, DEFAULT_H, DEFAULT_TOL)?;
    for leaf in &check.leaves {
        println!("  custom graph leaf {:<2} max rel err {:.3e}", leaf.name, leaf.max_rel_err);
    }
    Ok(())
}
