//! Compact-kernel material point method.
//!
//! The transfer kernel is the C²-continuous radius-one function
//! `K(u) = 1 - |u| + sin(2π|u|) / 2π`, evaluated on a pair of grids staggered
//! by `±Δx/4`. Each particle touches the 2×2×2 nodes of the cell it occupies on
//! each grid (16 nodes in total), and all particle quantities are gathered as
//! the average over both grids.
//!
//! The crate is `no_std` (with `alloc`) when the default `std` feature is
//! disabled. File formats, configuration and the command line live in the
//! companion `ckmpm` crate.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dualgrid;
mod error;
pub mod kernel;
pub mod materials;
mod math;
pub mod sim;
pub mod transfer;

pub use error::{Error, Result};

/// World-space 3-vector (m, m/s, ...).
pub type Vector3 = nalgebra::Vector3<f64>;
/// 3×3 matrix (deformation gradients, stresses, affine velocity).
pub type Matrix3 = nalgebra::Matrix3<f64>;
/// 4×4 matrix (MLS moment matrices).
pub type Matrix4 = nalgebra::Matrix4<f64>;
