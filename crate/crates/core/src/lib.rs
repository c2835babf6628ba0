#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod manifest;
pub mod segmentation;
pub mod signal;
pub mod statistical;
pub mod structural;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
