//! Differentially private optimization with gradient subspace projection
//! and feature-level privacy, plus a desk-scale benchmark harness.
//!
//! The crate is organized around a single parameterized training loop
//! ([`optimizer::train`]) that covers plain SGD, DP-SGD, projected DP-SGD,
//! feature-DP, and the combined feature-projective variant. Supporting
//! layers: [`numerics`] (dense linear algebra, seeded RNG streams),
//! [`accountant`] (Renyi-DP accounting and noise calibration),
//! [`subspace`] (public-gradient basis estimation and projection),
//! [`models`] (small differentiable predictors with exact per-sample
//! gradients), [`data`] (synthetic keypoint scenes and the public blur
//! feature map), [`metrics`] (PCK and optimizer diagnostics), and
//! [`experiments`] (sweep runner, CSV/SVG emission).

pub mod accountant;
pub mod data;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod models;
pub mod numerics;
pub mod optimizer;
pub mod subspace;

pub use error::{Error, Result};
