//! Volume of the region a set of cuts discards from a body: exact product
//! form when everything is axis-aligned, Monte Carlo hit-or-miss otherwise.

use rand::Rng;

use crate::error::{Error, Result};

use super::body::{ConvexBody, Cut};

/// Measures `vol{x in body: l_k(x) >= 0 for every cut}` — the region all the
/// cuts discard. Returns `(estimate, standard_error)`.
///
/// When the body is a box and every cut is axis-aligned the volume is an exact
/// interval product (standard error 0). Otherwise a hit-or-miss estimate over
/// the body's bounding box is used; simplex-restricted bodies are measured in
/// their first `n-1` coordinates.
pub fn region_volume<R: Rng + ?Sized>(
    body: &ConvexBody,
    extra_cuts: &[Cut],
    rng: &mut R,
    samples: usize,
) -> Result<(f64, f64)> {
    if samples < 1_000 {
        return Err(Error::InvalidParameter {
            name: "samples",
            reason: format!("need at least 1000, got {samples}"),
        });
    }
    for cut in extra_cuts {
        if cut.normal.len() != body.dim() {
            return Err(Error::InputError(
                "cut dimension differs from body dimension".into(),
            ));
        }
    }

    if let ConvexBody::Box { lower, upper } = body {
        if extra_cuts.iter().all(Cut::is_axis_aligned) {
            return Ok((box_slab_volume(lower, upper, extra_cuts), 0.0));
        }
    }

    let (lower, upper) = body.bounding_box();
    let free = if body.is_simplex_restricted() {
        body.dim() - 1
    } else {
        body.dim()
    };
    let mut proposal_volume = 1.0;
    for i in 0..free {
        proposal_volume *= upper[i] - lower[i];
    }
    if proposal_volume == 0.0 {
        return Ok((0.0, 0.0));
    }

    let mut hits = 0usize;
    for _ in 0..samples {
        let mut x: Vec<f64> = (0..free)
            .map(|i| {
                if upper[i] > lower[i] {
                    rng.random_range(lower[i]..upper[i])
                } else {
                    lower[i]
                }
            })
            .collect();
        if body.is_simplex_restricted() {
            let s: f64 = x.iter().sum();
            x.push(1.0 - s);
        }
        if body.contains(&x, 0.0) && extra_cuts.iter().all(|c| c.eval(&x) >= 0.0) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let est = p * proposal_volume;
    let stderr = proposal_volume * (p * (1.0 - p) / samples as f64).sqrt();
    Ok((est, stderr))
}

/// Draws one uniform point from `body` by rejection from its bounding box;
/// simplex-restricted bodies are sampled uniformly in their first `n-1`
/// coordinates. Errors if `max_tries` proposals all miss (the body has
/// negligible volume inside its box).
pub fn sample_uniform<R: Rng + ?Sized>(
    body: &ConvexBody,
    rng: &mut R,
    max_tries: usize,
) -> Result<Vec<f64>> {
    let (lower, upper) = body.bounding_box();
    let free = if body.is_simplex_restricted() {
        body.dim() - 1
    } else {
        body.dim()
    };
    for _ in 0..max_tries {
        let mut x: Vec<f64> = (0..free)
            .map(|i| {
                if upper[i] > lower[i] {
                    rng.random_range(lower[i]..upper[i])
                } else {
                    lower[i]
                }
            })
            .collect();
        if body.is_simplex_restricted() {
            let s: f64 = x.iter().sum();
            x.push(1.0 - s);
        }
        if body.contains(&x, 0.0) {
            return Ok(x);
        }
    }
    Err(Error::SolverFailure {
        context: "uniform sampling",
        reason: format!("no proposal landed inside the body in {max_tries} tries"),
    })
}

/// Exact volume of `{x in [lower, upper]: all axis-aligned cuts discard x}`.
fn box_slab_volume(lower: &[f64], upper: &[f64], cuts: &[Cut]) -> f64 {
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for cut in cuts {
        match cut.normal.iter().position(|v| *v != 0.0) {
            None => {
                // Constant cut: discards everything or nothing.
                if cut.offset < 0.0 {
                    return 0.0;
                }
            }
            Some(i) => {
                let c = cut.normal[i];
                let boundary = -cut.offset / c;
                if c > 0.0 {
                    // Discarded side is x_i >= boundary.
                    lo[i] = lo[i].max(boundary);
                } else {
                    hi[i] = hi[i].min(boundary);
                }
            }
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(l, u)| (u - l).max(0.0))
        .product()
}
