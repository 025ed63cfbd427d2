//! Small CPU object detector in the YOLOv8 family. Ghost convolutions and a
//! transformer-encoder tail can replace the stock blocks, and an NMS-free set
//! head can replace anchor decoding.
//!
//! Comparisons written as `!(x > 0.0)` reject NaN on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

pub mod attention;
pub mod blocks;
pub mod cli;
pub mod datapipe;
pub mod detector;
pub mod error;
pub mod evalkit;
pub mod fsutil;
pub mod ops;
pub mod postproc;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
