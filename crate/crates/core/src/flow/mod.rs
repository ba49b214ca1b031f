//! Dense motion: estimation, warping and `.flo` interchange.

mod estimate;
mod field;
pub mod flo;
mod warp;

pub use self::estimate::{estimate_flow, FlowParams};
pub use self::field::{flow_magnitude, FlowField};
pub use self::flo::{read_flo, write_flo};
pub use self::warp::{backward_warp, importance_z, occlusion_mask, softmax_splat, splat_weights, SPLAT_EPSILON};
