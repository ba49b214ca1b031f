//! Multiple-input residual diffusion for video frame interpolation.
//!
//! The crate is organised bottom-up:
//!
//! * [`imaging`]: image containers, grayscale, morphology, Otsu, exact EDT,
//!   PSNR/SSIM and PNG I/O.
//! * [`edges`]: Difference-of-Gaussians edges and the normalised distance
//!   transform used as structural guidance.
//! * [`flow`]: pyramidal Horn–Schunck estimation, backward warping, softmax
//!   splatting, occlusion masks and Middlebury `.flo` I/O.
//! * [`schedule`]: the residual-shifting noise ladder for `n` conditions.
//! * [`diffusion`]: forward process, closed-form posterior, reverse sampler
//!   and Monte-Carlo self-verification.
//! * [`taumetric`]: the inter-frame-distance estimate of the target time.
//! * [`pipeline`]: warping to time `tau`, infill, interpolation and the
//!   stochastic uncertainty analysis.
//! * [`synth`]: deterministic cel-style synthetic triplets.

// Parameter checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod edges;
mod error;
pub mod flow;
pub mod imaging;
pub mod pipeline;
pub mod schedule;
pub mod synth;
pub mod taumetric;

pub use error::{Error, Result};
pub use flow::FlowField;
pub use imaging::{Image, Mask};
