//! Scene files, output formats, self-validation and benchmarking around
//! [`ckmpm_core`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod run;
pub mod scene;
pub mod snapshot;
pub mod validate;

pub use config::SceneConfig;
pub use error::{AppError, AppResult};
