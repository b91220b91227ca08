//! Additive Powers-of-Two (APoT) quantization engine.
//!
//! The crate covers the full life of a quantized layer:
//!
//! - [`levels`]: uniform, powers-of-two and additive powers-of-two level sets,
//!   kept as exact dyadic rationals and projected against in floating point.
//! - [`rcf`]: the reparameterized clipping function and its threshold gradients,
//!   plus the PACT estimator used as a baseline.
//! - [`wnorm`]: per-layer zero-mean / unit-variance weight normalization with an
//!   exact backward pass.
//! - [`quantizer`]: weight and activation fake-quantization paths with caches
//!   for the backward pass.
//! - [`shiftadd`]: bit-exact shift-add multiply-accumulate and the FixOPS /
//!   model-size cost model.
//! - [`analysis`]: clipping/projection error decomposition, QEM threshold
//!   search, a Lloyd-Max baseline and clipping-ratio curves.
//! - [`train`]: a small dense network trained end to end with manual
//!   backpropagation, progressive initialization and shift-add inference.

pub mod analysis;
pub mod error;
pub mod gradcheck;
pub mod levels;
pub mod quantizer;
pub mod rcf;
pub mod shiftadd;
pub mod tensor_io;
pub mod train;
pub mod wnorm;

pub use error::{Error, Result};
pub use levels::{
    build_apot, build_levels, build_pot, build_uniform, pot_term_exponents, project, LevelSet,
    QuantizedTensor, Scheme, ShiftTerm,
};
pub use quantizer::{QuantConfig, QuantLayerGrads, Quantizer};
pub use rcf::{pact_grad_alpha, rcf_forward, rcf_grad_alpha, RcfGradient, SteMode};
pub use wnorm::{normalize, normalize_backward, NormStats};
