//! Multifractal box dimensions of discrete measures.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod counting;
pub mod dims;
pub mod error;
pub mod format;
pub mod ifs;
pub mod measure;
pub mod metric;
pub mod report;
pub mod typgen;

pub use error::{Error, Result};
