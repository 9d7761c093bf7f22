//! Closed-form reasoning for the drag-free, altitude-unconstrained problem.
//!
//! With `β = 0` each axis is an independent double integrator with
//! `|u| ≤ u_max`, so the reachable set after time `T` is the box
//! `r0 + v0 T ± u_max T² / 2`. The minimum intercept time is the first `T`
//! at which that box comes within `r_capture` of the target.

use crate::dynamics::{Vec3, VehicleParams};

/// Per-axis shortfall `max(0, |e| - a T² / 2)` with `e = Δ - v T`.
fn shortfall(delta: f64, v: f64, a: f64, t: f64) -> f64 {
    ((delta - v * t).abs() - 0.5 * a * t * t).max(0.0)
}

/// Distance from `target` to the reachable box at time `t`.
pub fn reachable_distance(r0: Vec3, v0: Vec3, target: Vec3, u_max: f64, t: f64) -> f64 {
    let d = target - r0;
    (0..3)
        .map(|k| shortfall(d[k], v0[k], u_max, t).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn positive_roots(a: f64, b: f64, c: f64) -> impl Iterator<Item = f64> {
    let disc = b * b - 4.0 * a * c;
    let roots = if disc < 0.0 {
        [f64::NAN; 2]
    } else {
        let sq = disc.sqrt();
        [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)]
    };
    roots.into_iter().filter(|r| r.is_finite() && *r > 0.0)
}

/// First time at which a single axis is within `slack` of its target.
fn axis_first_time(delta: f64, v: f64, a: f64, slack: f64) -> f64 {
    let scale = delta.abs() + slack + 1.0;
    let ok = |t: f64| (delta - v * t).abs() - 0.5 * a * t * t - slack <= 1e-12 * scale;
    let mut candidates: Vec<f64> = vec![0.0];
    // g1 = a t²/2 + v t + slack - Δ, g2 = a t²/2 - v t + slack + Δ
    candidates.extend(positive_roots(0.5 * a, v, slack - delta));
    candidates.extend(positive_roots(0.5 * a, -v, slack + delta));
    candidates.sort_by(|x, y| x.total_cmp(y));
    candidates
        .into_iter()
        .find(|&t| ok(t))
        .unwrap_or(f64::INFINITY)
}

/// Minimum intercept time ignoring drag and the altitude floor.
pub fn analytic_min_time_dragfree(r0: Vec3, v0: Vec3, target: Vec3, params: &VehicleParams) -> f64 {
    let a = params.u_max;
    let rc = params.r_capture;
    if (target - r0).norm() <= rc {
        return 0.0;
    }
    let d = target - r0;
    // every axis must individually close to within the capture radius
    let lower = (0..3)
        .map(|k| axis_first_time(d[k], v0[k], a, rc))
        .fold(0.0, f64::max);
    let within = |t: f64| reachable_distance(r0, v0, target, a, t) <= rc;
    if within(lower) {
        return lower;
    }
    let mut step = 1e-3 * lower.max(1.0);
    let mut lo = lower;
    let mut hi = lower + step;
    while !within(hi) {
        lo = hi;
        hi += step;
        step *= 1.05;
        if hi > lower + 1e5 {
            return f64::INFINITY;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if within(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    hi
}
