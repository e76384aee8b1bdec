//! Renormalization of generalized interval exchange maps, their affine models,
//! and numerical rigidity checks.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod affine;
pub mod cocycle;
pub mod combinatorics;
pub mod exact;
pub mod fit;
pub mod fixtures;
pub mod giem;
pub mod rigidity;
