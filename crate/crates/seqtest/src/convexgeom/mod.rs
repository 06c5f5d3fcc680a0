//! Convex parameter sets, the pairwise worst-exponent solver, barrier-based
//! cuts, and region-volume estimation.

pub mod barrier;
pub mod body;
pub mod lp;
pub mod saddle;
pub mod volume;

pub use barrier::{smart_cut, BarrierInfo, SmartCutResult};
pub use body::{ConvexBody, Cut, SIMPLEX_MARGIN};
pub use saddle::{
    gaussian_box_saddle, solve_pairwise, validate_body_in_scheme, RateEvaluator, SaddlePoint,
};
pub use volume::{region_volume, sample_uniform};
