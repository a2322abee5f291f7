//! A desk-scale hybrid video codec in the VVC mold (CTU quadtree, 67
//! intra modes, block-matching inter prediction, integer transform,
//! binary arithmetic coding) with a selective-encryption layer applied
//! to chosen syntax elements before binarization.
//!
//! Streams stay format-compliant: a decoder without the key parses an
//! encrypted stream like any other and produces full-size (scrambled)
//! frames. Encryptable elements are the luma intra-mode index, the
//! motion-vector-difference magnitude suffix and sign, and the residual
//! sign pattern; all are bypass-coded so flipping them never touches a
//! probability model.
//!
//! The crate also carries the evaluation side: PSNR, SSIM, an edge
//! differential ratio, bitrate deltas, and per-class encryption-space
//! accounting, plus a batch CLI (`encode`, `decode`, `analyze`,
//! `report`).

pub mod cli_frontend;
pub mod entropy_coder;
pub mod error;
pub mod inter_predictor;
pub mod intra_predictor;
pub mod media_io;
pub mod partitioner;
pub mod pipeline;
pub mod quality_metrics;
pub mod residual_coder;
pub mod selective_crypto;

pub use error::{Error, Result};
