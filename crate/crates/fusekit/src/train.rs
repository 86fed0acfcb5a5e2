//! Desk-scale training of the fusion unit on a synthetic task.
//!
//! The supervised target is the elementwise maximum of the two synthetic
//! modality tensors — neither input alone predicts it, so the unit has to
//! combine both. Plain full-batch gradient descent on mean squared error;
//! batch norm runs on batch statistics and folds them into the running
//! statistics each epoch.

use crate::asff::{asff_graph, AsffParams};
use crate::blocks::BN_MOMENTUM;
use crate::config::{Module, ModuleConfig};
use crate::error::{Error, Result};
use crate::init;
use crate::io::WeightArchive;
use crate::rng::SeededGen;
use crate::tape::Tape;
use crate::tensor::{BnMode, Tensor};
use std::collections::HashMap;

/// Synthetic fusion task. Generated data is a pure function of the seed.
#[derive(Clone, Copy, Debug)]
pub struct ToyTask {
    pub seed: u64,
    pub samples: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ToyTask {
    /// 64 samples of 8x8x8 features.
    pub fn default_task(seed: u64) -> Self {
        ToyTask { seed, samples: 64, channels: 8, height: 8, width: 8 }
    }

    /// Draws the two modality batches in [0, 1) and their elementwise-max
    /// target.
    pub fn generate(&self) -> (Tensor<f32>, Tensor<f32>, Tensor<f32>) {
        let dims = [self.samples, self.channels, self.height, self.width];
        let mut gen = SeededGen::new(self.seed);
        let rgb = gen.tensor_unit(dims);
        let ir = gen.tensor_unit(dims);
        let target = Tensor::from_fn(dims, |n, c, h, w| rgb.at(n, c, h, w).max(ir.at(n, c, h, w)));
        (rgb, ir, target)
    }
}

/// Loss trace plus the trained weights.
pub struct TrainOutcome {
    /// Mean-squared-error per epoch, evaluated before that epoch's update.
    pub losses: Vec<f64>,
    pub archive: WeightArchive,
}

/// Full-batch gradient descent of the fusion unit against the toy target.
/// `seed` initializes the weights; the task's own seed fixes the data.
pub fn train_toy(
    task: &ToyTask,
    config: &ModuleConfig,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<TrainOutcome> {
    if epochs == 0 {
        return Err(Error::Config("epochs must be >= 1".into()));
    }
    let config = ModuleConfig {
        channels: task.channels,
        height: task.height,
        width: task.width,
        batch: task.samples,
        ..*config
    };
    config.validate(Module::Asff)?;
    let mut params: AsffParams<f32> = init::asff_params(&config, seed)?;
    let (rgb, ir, target) = task.generate();
    let numel = target.numel() as f64;

    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut tape = Tape::<f32>::new();
        let r = tape.input("rgb", rgb.clone());
        let i = tape.input("ir", ir.clone());
        let graph = asff_graph(&mut tape, r, i, &params, BnMode::Train)?;
        let out = tape.value(graph.f_c);

        let mut loss = 0.0f64;
        let mut seed_grad = Tensor::zeros(out.dims());
        for (k, (&o, &t)) in out.data().iter().zip(target.data()).enumerate() {
            let diff = o as f64 - t as f64;
            loss += diff * diff;
            seed_grad.data_mut()[k] = (2.0 * diff / numel) as f32;
        }
        loss /= numel;
        if !loss.is_finite() {
            return Err(Error::Training { epoch });
        }
        losses.push(loss);

        let grads = tape.backward(graph.f_c, &seed_grad)?;

        // Fold this epoch's batch statistics into the running statistics.
        let mut stat_updates: HashMap<String, Tensor<f32>> = HashMap::new();
        for (prefix, node) in tape.bn_train_nodes() {
            let (mean, var) = tape.bn_batch_stats(*node).expect("train-mode bn node");
            stat_updates.insert(format!("{prefix}.running_mean"), mean.clone());
            stat_updates.insert(format!("{prefix}.running_var"), var.clone());
        }

        params.for_each_mut(&mut |name, t| {
            if let Some(batch_stat) = stat_updates.get(&name) {
                for (cur, new) in t.data_mut().iter_mut().zip(batch_stat.data()) {
                    *cur = ((1.0 - BN_MOMENTUM) * *cur as f64 + BN_MOMENTUM * *new as f64) as f32;
                }
            } else if let Some(g) = grads.get(&name) {
                for (w, g) in t.data_mut().iter_mut().zip(g.data()) {
                    *w = (*w as f64 - learning_rate * *g as f64) as f32;
                }
            }
        });
    }
    Ok(TrainOutcome { losses, archive: init::asff_to_archive(&params)? })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_task() -> ToyTask {
        ToyTask { seed: 11, samples: 8, channels: 4, height: 4, width: 4 }
    }

    fn cfg() -> ModuleConfig {
        ModuleConfig { groups: 2, ..ModuleConfig::with_defaults(4) }
    }

    #[test]
    fn zero_learning_rate_keeps_learnables_byte_identical() {
        let task = small_task();
        let outcome = train_toy(&task, &cfg(), 3, 0.0, 21).unwrap();
        let fresh = init::init_weights(
            &ModuleConfig {
                channels: task.channels,
                height: task.height,
                width: task.width,
                batch: task.samples,
                ..cfg()
            },
            Module::Asff,
            21,
        )
        .unwrap();
        for ((name, trained), (name2, initial)) in
            outcome.archive.entries().iter().zip(fresh.entries())
        {
            assert_eq!(name, name2);
            if init::is_state_entry(name) {
                continue; // running statistics track batch stats regardless of lr
            }
            assert!(trained.bit_eq(initial), "{name} changed under lr 0");
        }
        // constant loss trace: batch stats do not enter the train-mode forward
        assert!(outcome.losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let task = small_task();
        let a = train_toy(&task, &cfg(), 4, 1e-2, 3).unwrap();
        let b = train_toy(&task, &cfg(), 4, 1e-2, 3).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.archive.to_bytes(), b.archive.to_bytes());
    }

    #[test]
    fn loss_decreases_on_the_small_task() {
        let task = small_task();
        let outcome = train_toy(&task, &cfg(), 30, 1e-2, 5).unwrap();
        assert!(outcome.losses.last().unwrap() < &outcome.losses[0]);
    }

    #[test]
    fn rejects_zero_epochs() {
        assert!(train_toy(&small_task(), &cfg(), 0, 1e-2, 1).is_err());
    }

    #[test]
    fn divergence_reports_the_epoch() {
        // an absurd step size explodes the weights within a few epochs
        match train_toy(&small_task(), &cfg(), 50, 1e9, 1) {
            Err(crate::error::Error::Training { epoch }) => assert!(epoch > 0 && epoch < 50),
            Err(other) => panic!("expected a training error, got {other}"),
            Ok(_) => panic!("expected divergence"),
        }
    }
}
