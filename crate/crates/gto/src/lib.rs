//! Block-based grayscale image codec built on graph Fourier transforms of
//! learned grid graphs.
//!
//! Each 16x16 block is modeled as a signal on a 4-connected grid graph. The
//! encoder learns edge weights that adapt the transform to the block content,
//! compresses the weights themselves through the graph Fourier transform of
//! the grid's dual graph, and codes transform coefficients with an adaptive
//! binary range coder. A DCT path serves as baseline and fallback; the
//! encoder picks per block by measured rate-distortion cost.

pub mod codec;
pub mod dct;
pub mod entropy;
pub mod error;
pub mod graph;
pub mod learn;
pub mod pgm;

pub use codec::{
    decode_image, encode_image, rd_cost, theoretical_rate_rc, theoretical_rate_rg, BlockRecord,
    Encoded, EncodeStats, EncoderConfig, BLOCK_SIDE, DEFAULT_DELTA_SET, DEFAULT_GAMMA_SCALE,
};
pub use entropy::{dequantize, quantize, QuantizedCoeffs};
pub use error::{Error, Result};
pub use graph::{DualGraph, Geometry, GridGraph, Spectrum};
pub use learn::{
    classify_block, default_params, gaussian_weights, learn_weights, LearnParams, LearnResult,
    Mode, Thresholds,
};
pub use pgm::{encode_pgm, parse_pgm, read_pgm, write_pgm, GrayImage};
