//! Deterministic seeded sampling.
//!
//! The raw ChaCha8 stream is an algorithmic constant, and the u32 -> float
//! mapping below is fixed here, so identical seeds produce byte-identical
//! tensors on every platform and toolchain. Weight archives and the toy task
//! depend on this stability.

use crate::tensor::Tensor;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct SeededGen {
    rng: ChaCha8Rng,
}

impl SeededGen {
    pub fn new(seed: u64) -> Self {
        SeededGen { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform in [0, 1) with 24-bit resolution (exact in f32).
    pub fn unit(&mut self) -> f64 {
        (self.rng.next_u32() >> 8) as f64 / 16_777_216.0
    }

    /// Uniform in [-bound, bound).
    pub fn symmetric(&mut self, bound: f64) -> f64 {
        (2.0 * self.unit() - 1.0) * bound
    }

    pub fn tensor_unit(&mut self, dims: [usize; 4]) -> Tensor<f32> {
        let mut t = Tensor::zeros(dims);
        for v in t.data_mut() {
            *v = self.unit() as f32;
        }
        t
    }

    pub fn tensor_symmetric(&mut self, dims: [usize; 4], bound: f64) -> Tensor<f32> {
        let mut t = Tensor::zeros(dims);
        for v in t.data_mut() {
            *v = self.symmetric(bound) as f32;
        }
        t
    }
}
