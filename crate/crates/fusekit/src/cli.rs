//! Command-line surface over the library.
//!
//! Exit codes: 0 success, 1 usage error, 2 format/config error (bad files,
//! bad shapes, bad hyperparameters), 3 failed check (gradient check above
//! tolerance, training divergence).

use crate::config::{Module, ModuleConfig};
use crate::error::{Error, Result};
use crate::tensor::BnMode;
use crate::{asff, cost, fatm, gradcheck, init, io, train};

const HELP: &str = "\
fusekit — attention-guided feature fusion kernels

USAGE:
  fusekit <command> [flags]

COMMANDS:
  fuse          fuse two modality tensors through the fusion unit
                  --rgb <path> --ir <path> --weights <path> --groups <G> --out <path>
  fatm          apply the neck attention block to a tensor
                  --in <path> --weights <path> --out <path>
  init-weights  write freshly initialized weights
                  --module asff|fatm --channels C --seed S --out <path>
                  [--groups G] [--ratio R] [--kernel K]
  gradcheck     compare analytic gradients against finite differences
                  --module <name>|all --channels C --size HW --seed S [--tol 1e-3]
  count         analytic parameter / MAC breakdown
                  --module asff|fatm --channels C --height H --width W
                  [--compare-multi N] [--format table|kv] [--groups G] [--ratio R] [--batch N]
  train-toy     train the fusion unit on the synthetic max-fusion task
                  --channels C --size HW --epochs E --lr R --seed S --out <path>
                  [--samples N] [--groups G]
  help          print this text
";

struct Flags {
    pairs: Vec<(String, String)>,
}

impl Flags {
    fn parse(args: &[String], allowed: &[&str]) -> Result<Flags> {
        let mut pairs = Vec::new();
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let Some(name) = flag.strip_prefix("--") else {
                return Err(Error::Usage(format!("expected a --flag, got '{flag}'")));
            };
            if !allowed.contains(&name) {
                return Err(Error::Usage(format!("unknown flag '--{name}'")));
            }
            if pairs.iter().any(|(n, _)| n == name) {
                return Err(Error::Usage(format!("duplicate flag '--{name}'")));
            }
            let Some(value) = it.next() else {
                return Err(Error::Usage(format!("flag '--{name}' needs a value")));
            };
            pairs.push((name.to_string(), value.clone()));
        }
        Ok(Flags { pairs })
    }

    fn get(&self, name: &str) -> Option<&str> {
        self.pairs.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_str())
    }

    fn require(&self, name: &str) -> Result<&str> {
        self.get(name).ok_or_else(|| Error::Usage(format!("missing required flag '--{name}'")))
    }

    fn num<T: std::str::FromStr>(&self, name: &str) -> Result<T> {
        let raw = self.require(name)?;
        raw.parse::<T>()
            .map_err(|_| Error::Usage(format!("flag '--{name}' has invalid value '{raw}'")))
    }

    fn num_or<T: std::str::FromStr>(&self, name: &str, default: T) -> Result<T> {
        match self.get(name) {
            None => Ok(default),
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| Error::Usage(format!("flag '--{name}' has invalid value '{raw}'"))),
        }
    }
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Usage(_) => 1,
        Error::Training { .. } => 3,
        _ => 2,
    }
}

/// Parses and runs one invocation; returns the process exit code.
pub fn cli_dispatch<I>(argv: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let args: Vec<String> = argv.into_iter().map(Into::into).collect();
    let Some(command) = args.first().map(String::as_str) else {
        eprint!("{HELP}");
        return 1;
    };
    if matches!(command, "help" | "--help" | "-h") {
        print!("{HELP}");
        return 0;
    }
    let rest = &args[1..];
    let run = match command {
        "fuse" => cmd_fuse(rest),
        "fatm" => cmd_fatm(rest),
        "init-weights" => cmd_init_weights(rest),
        "gradcheck" => cmd_gradcheck(rest),
        "count" => cmd_count(rest),
        "train-toy" => cmd_train_toy(rest),
        other => Err(Error::Usage(format!("unknown command '{other}'"))),
    };
    match run {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            if matches!(err, Error::Usage(_)) {
                eprint!("{HELP}");
            }
            exit_code_for(&err)
        }
    }
}

fn cmd_fuse(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["rgb", "ir", "weights", "groups", "out"])?;
    let rgb = io::read_tensor(flags.require("rgb")?)?;
    let ir = io::read_tensor(flags.require("ir")?)?;
    let groups: usize = flags.num("groups")?;
    let archive = io::WeightArchive::read(flags.require("weights")?)?;
    let params = init::asff_from_archive(&archive, groups)?;
    if rgb.dims() != ir.dims() {
        return Err(Error::Shape(format!(
            "modality shapes differ: rgb {:?} vs ir {:?}",
            rgb.dims(),
            ir.dims()
        )));
    }
    let fused = asff::asff_forward(&rgb, &ir, &params, BnMode::Infer)?;
    let out_path = flags.require("out")?;
    io::write_tensor(out_path, &fused)?;
    println!("fused {:?} -> {out_path}", fused.dims());
    Ok(0)
}

fn cmd_fatm(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["in", "weights", "out"])?;
    let input = io::read_tensor(flags.require("in")?)?;
    let archive = io::WeightArchive::read(flags.require("weights")?)?;
    let params = init::fatm_from_archive(&archive)?;
    let out = fatm::fatm_forward(&input, &params, BnMode::Infer)?;
    let out_path = flags.require("out")?;
    io::write_tensor(out_path, &out)?;
    println!("transformed {:?} -> {out_path}", out.dims());
    Ok(0)
}

fn config_from(flags: &Flags, channels: usize, height: usize, width: usize) -> Result<ModuleConfig> {
    let defaults = ModuleConfig::with_defaults(channels);
    Ok(ModuleConfig {
        channels,
        groups: flags.num_or("groups", defaults.groups)?,
        lcam_ratio: flags.num_or("ratio", defaults.lcam_ratio)?,
        cam_kernel: flags.num_or("kernel", defaults.cam_kernel)?,
        height,
        width,
        batch: flags.num_or("batch", defaults.batch)?,
    })
}

fn cmd_init_weights(args: &[String]) -> Result<i32> {
    let flags =
        Flags::parse(args, &["module", "channels", "seed", "out", "groups", "ratio", "kernel"])?;
    let which = Module::parse(flags.require("module")?)?;
    let channels: usize = flags.num("channels")?;
    let seed: u64 = flags.num("seed")?;
    let config = config_from(&flags, channels, 8, 8)?;
    let archive = init::init_weights(&config, which, seed)?;
    let out_path = flags.require("out")?;
    archive.write(out_path)?;
    println!("wrote {} entries for {} -> {out_path}", archive.len(), which.name());
    Ok(0)
}

fn cmd_gradcheck(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args, &["module", "channels", "size", "seed", "tol"])?;
    let module = flags.require("module")?.to_string();
    let channels: usize = flags.num("channels")?;
    let size: usize = flags.num("size")?;
    let seed: u64 = flags.num("seed")?;
    let tol: f64 = flags.num_or("tol", gradcheck::DEFAULT_TOL)?;

    let names: Vec<&str> = if module == "all" {
        gradcheck::CHECKABLE.to_vec()
    } else if gradcheck::CHECKABLE.contains(&module.as_str()) {
        vec![module.as_str()]
    } else {
        return Err(Error::Usage(format!(
            "unknown gradcheck module '{module}'; known: all, {}",
            gradcheck::CHECKABLE.join(", ")
        )));
    };

    let mut failed = false;
    for name in names {
        let check = gradcheck::check_module(name, channels, size, seed, gradcheck::DEFAULT_H, tol)?;
        let ok = check.passes(tol);
        failed |= !ok;
        println!(
            "{}: {} (max rel err {:.3e}, tol {:.1e})",
            name,
            if ok { "PASS" } else { "FAIL" },
            check.max_rel_err,
            tol
        );
        if !ok {
            if let Some(worst) = check.worst_leaf() {
                println!("  worst leaf: {} at {:.3e}", worst.name, worst.max_rel_err);
            }
        }
    }
    Ok(if failed { 3 } else { 0 })
}

fn cmd_count(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(
        args,
        &["module", "channels", "height", "width", "compare-multi", "format", "groups", "ratio", "kernel", "batch"],
    )?;
    let which = Module::parse(flags.require("module")?)?;
    let channels: usize = flags.num("channels")?;
    let height: usize = flags.num("height")?;
    let width: usize = flags.num("width")?;
    let config = config_from(&flags, channels, height, width)?;
    let format = flags.get("format").unwrap_or("table");
    let render = |report: &cost::CostReport| -> Result<String> {
        match format {
            "table" => Ok(report.to_table()),
            "kv" => Ok(report.to_kv()),
            other => Err(Error::Usage(format!("unknown format '{other}' (expected table|kv)"))),
        }
    };

    let report = cost::cost_report(&config, which)?;
    print!("{}", render(&report)?);
    if let Some(n) = flags.get("compare-multi") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Usage(format!("flag '--compare-multi' has invalid value '{n}'")))?;
        let (single, multi) = cost::compare_fusion_baselines(&config, n)?;
        println!("--- single fusion unit vs {n}-stage pyramid ---");
        println!(
            "single: params {} macs {} gflops {:.6}",
            single.total_params,
            single.total_macs,
            single.gflops()
        );
        println!(
            "multi:  params {} macs {} gflops {:.6}",
            multi.total_params,
            multi.total_macs,
            multi.gflops()
        );
    }
    Ok(0)
}

fn cmd_train_toy(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(
        args,
        &["channels", "size", "epochs", "lr", "seed", "out", "samples", "groups"],
    )?;
    let channels: usize = flags.num("channels")?;
    let size: usize = flags.num("size")?;
    let epochs: usize = flags.num("epochs")?;
    let lr: f64 = flags.num("lr")?;
    let seed: u64 = flags.num("seed")?;
    let samples: usize = flags.num_or("samples", 64)?;
    let task = train::ToyTask { seed, samples, channels, height: size, width: size };
    let config = config_from(&flags, channels, size, size)?;
    let outcome = train::train_toy(&task, &config, epochs, lr, seed)?;
    let first = outcome.losses[0];
    let last = *outcome.losses.last().expect("at least one epoch");
    let step = (epochs / 10).max(1);
    for (e, loss) in outcome.losses.iter().enumerate() {
        if e % step == 0 || e + 1 == epochs {
            println!("epoch {e}: loss {loss:.6}");
        }
    }
    println!("loss {first:.6} -> {last:.6} over {epochs} epochs");
    let out_path = flags.require("out")?;
    outcome.archive.write(out_path)?;
    println!("wrote trained weights -> {out_path}");
    Ok(0)
}
