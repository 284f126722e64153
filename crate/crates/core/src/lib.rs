//! Energy loss functions for continuous point clouds and discrete spin
//! systems, with the machinery needed to train and verify them: rigid
//! sparse edge sets, a small reverse-mode autodiff engine with an MLP and
//! Adam, an exact Ising ground-state solver and a score-estimation lab.
//!
//! Data-parallel loops (dataset generation, ground-state enumeration,
//! rigidity pools, Monte-Carlo trials, batched losses) go through
//! [`par::Exec`]. With the default `parallel` feature they run on rayon;
//! without it every call falls back to a sequential loop with identical
//! results.

pub mod autodiff;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod par;
pub mod rigidity;
pub mod rng;
pub mod score_lab;
pub mod spin;
pub mod tasks;

pub use error::{Error, Result};

/// Version string written into every run manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
