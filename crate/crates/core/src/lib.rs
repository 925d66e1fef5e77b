//! Factorization-machine CTR models, feature-level bias diagnosis and
//! post-training linear-weight debiasing.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! computation over in-memory data; file formats, CSV ingestion and the
//! command-line driver live in the `ctrbias` companion crate.
//!
//! The pipeline the modules implement:
//!
//! - [`schema`] / [`data`]: field-structured sparse samples, chronological
//!   splits, k-core filtering; [`synth`] generates datasets with controlled
//!   per-group positive ratios.
//! - [`model`]: FM and NFM predictors split into global bias, linear part and
//!   high-order part, with hand-derived gradients; [`codec`] is the binary
//!   model format.
//! - [`train`]: mini-batch BCE training with Adam and early stopping.
//! - [`analysis`] and [`stats`]: group statistics, component variance,
//!   correlation tests and OLS.
//! - [`metrics`]: UAUC, NDCG@K, EHR, P(j,K), REO@K.
//! - [`debias`]: linear weight reduction and reconstruction.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod codec;
pub mod data;
pub mod debias;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod schema;
pub mod stats;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
