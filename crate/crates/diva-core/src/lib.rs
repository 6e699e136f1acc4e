//! Desk-scale lab for gated cross-attention fusion over synthetic table
//! tasks.
//!
//! The pieces, bottom up:
//!
//! - [`tensor`] — deterministic reverse-mode autodiff over dense f64
//!   tensors, with a finite-difference oracle and Adam.
//! - [`resampler`] — the dynamic-query digest module (visual tokens as
//!   queries over a text memory, identity-preserving scalar gates) plus the
//!   direct / adapter / fixed-query baselines.
//! - [`lm`] — a tiny causal decoder pretrained on text-only table tasks,
//!   then frozen; consumes soft prefixes.
//! - [`tabletask`] — synthetic tables with complementary text and vision
//!   carriers, five task kinds, scoring, and dataset files.
//! - [`trainer`] — instruction fine-tuning of a fusion module through the
//!   frozen LM.
//! - [`evalkit`] — prediction records, complementarity / recovery /
//!   barcode / ablation-sweep reports.
//! - [`checkpoint`] / [`expconfig`] — the on-disk formats.

pub mod checkpoint;
pub mod error;
pub mod evalkit;
pub mod expconfig;
pub mod lm;
pub mod resampler;
pub mod tabletask;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

/// splitmix64 — used to derive independent sub-seeds from a run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(stream.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
