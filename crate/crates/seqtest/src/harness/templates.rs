//! Ready-made configs for the two benchmark families.

use super::config::{BodySpec, ExperimentConfig};
use crate::schemes::{Scheme, SchemeKind};

/// Two Gaussian boxes separated by a gap `delta` along the first axis:
/// `X1 = [delta, 1 + delta] x [0, 1]^{n-1}` (color 0) and `X2 = [-1, 0]^n`
/// (color 1). The closest points sit at `(delta, 0, ..., 0)` and the origin,
/// so the separation exponent is `delta^2 / 8` in every dimension.
pub fn two_box_config(n: usize, delta: f64, eps: f64) -> ExperimentConfig {
    let mut lo1 = vec![0.0; n];
    let mut hi1 = vec![1.0; n];
    lo1[0] = delta;
    hi1[0] = 1.0 + delta;
    ExperimentConfig::new(
        Scheme::new(SchemeKind::Gaussian, n).expect("n >= 1"),
        vec![
            BodySpec::new_box(lo1, hi1),
            BodySpec::new_box(vec![-1.0; n], vec![0.0; n]),
        ],
        vec![0, 1],
        eps,
    )
}

/// Four Gaussian squares, one per quadrant of the plane, each its own color:
/// `[0.01, 1]^2` and its axis reflections. Adjacent squares are `0.02` apart
/// across one axis, so the separation exponent is `0.02^2 / 8 = 5e-5`.
pub fn four_squares_config(eps: f64) -> ExperimentConfig {
    let gap = 0.01;
    let quadrants: [(f64, f64); 4] = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let mut bodies = Vec::new();
    for (sx, sy) in quadrants {
        let xs = [gap * sx, sx];
        let ys = [gap * sy, sy];
        bodies.push(BodySpec::new_box(
            vec![xs[0].min(xs[1]), ys[0].min(ys[1])],
            vec![xs[0].max(xs[1]), ys[0].max(ys[1])],
        ));
    }
    ExperimentConfig::new(
        Scheme::new(SchemeKind::Gaussian, 2).expect("fixed dimension"),
        bodies,
        vec![0, 1, 2, 3],
        eps,
    )
}
