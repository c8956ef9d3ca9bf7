//! Deterministic linear algebra and random sampling primitives.
//!
//! Everything here is plain dense f64 arithmetic with fixed summation
//! orders, so results are bit-stable across runs and thread counts.

mod eig;
mod matrix;
mod rng;

pub use eig::{gram_topk, sym_eig_full, sym_eig_topk};
pub use matrix::{DenseMatrix, ParamVector};
pub use rng::{gaussian_vector, RngStream};

/// Stream derivation labels used across the crate. Keeping them in one
/// place guarantees two subsystems never collide on the same child stream.
pub mod stream_label {
    pub const DATA_GEN: u64 = 0x01;
    pub const DATA_SPLIT: u64 = 0x02;
    pub const MODEL_INIT: u64 = 0x03;
    pub const PRIV_BATCH: u64 = 0x04;
    pub const PUB_BATCH: u64 = 0x05;
    pub const NOISE: u64 = 0x06;
    pub const PRETRAIN: u64 = 0x07;
    pub const EVAL_DATA: u64 = 0x08;
    pub const PRETRAIN_DATA: u64 = 0x09;
    pub const SWEEP_CELL: u64 = 0x0a;
    pub const PER_SAMPLE: u64 = 0x0b;
}
