//! From-scratch CPU implementation of two attention-guided feature-fusion
//! blocks — a three-stage RGB/IR fusion unit (channel attention, feature
//! modulation, channel shuffle) and a neck-side channel/positional gating
//! block — built on a minimal NCHW tensor library with reverse-mode
//! gradients, a finite-difference oracle, an analytic parameter/MAC cost
//! model, bit-exact tensor file formats, and a toy trainer.
//!
//! No ML framework is involved: every kernel is written out and validated
//! against independent oracles. See the `examples/` directory for a runnable
//! tour of each capability, or use the `fusekit` binary for the same
//! operations from the command line.

pub mod asff;
pub mod attention;
pub mod blocks;
pub mod cli;
pub mod config;
pub mod cost;
pub mod error;
pub mod fatm;
pub mod gradcheck;
pub mod init;
pub mod io;
pub mod kernels;
pub mod rng;
pub mod tape;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Activation, BinaryOp, BnMode, ConvSpec, PoolMode, ReduceMode, Scalar, Tensor};
