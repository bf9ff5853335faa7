#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detect;
pub mod dsd;
pub mod error;
pub mod flops;
pub mod harness;
pub mod numerics;
pub mod rate;
pub mod rng;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
