//! Partial and mutual inductances of straight current filaments.
//!
//! All couplings evaluate Neumann's double line integral
//! `μ0/4π ∮∮ dl1·dl2 / |r1 - r2|`, segment by segment.

use crate::geometry::Point3;
use crate::quadrature::GaussRule;
use crate::{MU_0, MU_0_OVER_4PI};

const GAUSS_POINTS: usize = 8;
const MAX_SUBDIVISIONS: usize = 64;

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Self partial inductance of a straight round wire, `(μ0 ℓ / 2π)(ln(2ℓ/r) - 1)`.
pub fn self_partial_inductance(length: f64, radius: f64) -> f64 {
    MU_0 / (2.0 * std::f64::consts::PI) * length * ((2.0 * length / radius).ln() - 1.0)
}

/// Second antiderivative of `1/sqrt(u² + ρ²)`.
fn parallel_antiderivative(u: f64, rho: f64) -> f64 {
    if rho == 0.0 {
        // Collinear limit; the ρ-dependent parts cancel in the four-term sum
        // for non-overlapping segments.
        if u == 0.0 {
            0.0
        } else {
            u.abs() * u.abs().ln()
        }
    } else {
        u * (u / rho).asinh() - (u * u + rho * rho).sqrt()
    }
}

/// Mutual partial inductance of two parallel filaments.
///
/// Segment 1 spans `[0, l1]` along the common axis, segment 2 spans
/// `[s0, s1]` (with `s0 < s1`) at perpendicular distance `rho`; both carry
/// current in the +axis direction.
pub fn parallel_filaments(l1: f64, s0: f64, s1: f64, rho: f64) -> f64 {
    let g = |u: f64| parallel_antiderivative(u, rho);
    MU_0_OVER_4PI * (g(l1 - s0) - g(-s0) - g(l1 - s1) + g(-s1))
}

/// `∫ dl / |x - y|` over the segment `a-b` for a point `x` off the segment.
pub fn segment_potential(x: Point3, a: Point3, b: Point3) -> f64 {
    let ra = norm(sub(x, a));
    let rb = norm(sub(x, b));
    let l = norm(sub(b, a));
    let s = ra + rb;
    ((s + l) / (s - l)).ln()
}

/// Minimum distance between two closed segments.
pub fn segment_distance(a1: Point3, b1: Point3, a2: Point3, b2: Point3) -> f64 {
    let d1 = sub(b1, a1);
    let d2 = sub(b2, a2);
    let r = sub(a1, a2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);
    let c = dot(d1, r);
    let b = dot(d1, d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-14 * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    let p1 = [a1[0] + d1[0] * s, a1[1] + d1[1] * s, a1[2] + d1[2] * s];
    let p2 = [a2[0] + d2[0] * t, a2[1] + d2[1] * t, a2[2] + d2[2] * t];
    norm(sub(p1, p2))
}

/// One-sided quadrature: Gauss over segment 1, exact inner integral over 2.
fn quadrature_one_sided(rule: &GaussRule, a1: Point3, b1: Point3, a2: Point3, b2: Point3) -> f64 {
    let d1 = sub(b1, a1);
    let l1 = norm(d1);
    let dist = segment_distance(a1, b1, a2, b2);
    let subs = if dist > 0.0 {
        ((2.0 * l1 / dist).ceil() as usize).clamp(1, MAX_SUBDIVISIONS)
    } else {
        MAX_SUBDIVISIONS
    };
    let mut acc = 0.0;
    for k in 0..subs {
        let t0 = k as f64 / subs as f64;
        let t1 = (k + 1) as f64 / subs as f64;
        for (t, w) in rule.on(t0, t1) {
            let x = [a1[0] + d1[0] * t, a1[1] + d1[1] * t, a1[2] + d1[2] * t];
            acc += w * segment_potential(x, a2, b2);
        }
    }
    acc * l1
}

/// Mutual inductance of two straight, non-touching filament segments,
/// each oriented from `a` to `b`.
///
/// Perpendicular pairs give exactly zero, parallel pairs use the closed
/// form, and skew pairs use Gauss quadrature on one segment with the
/// exact potential of the other, symmetrised over the two orderings.
pub fn segment_mutual(a1: Point3, b1: Point3, a2: Point3, b2: Point3) -> f64 {
    let d1 = sub(b1, a1);
    let d2 = sub(b2, a2);
    let l1 = norm(d1);
    let l2 = norm(d2);
    let cos = dot(d1, d2) / (l1 * l2);
    if cos == 0.0 {
        return 0.0;
    }
    let sin = norm(cross(d1, d2)) / (l1 * l2);
    if sin <= 1e-12 {
        let u = [d1[0] / l1, d1[1] / l1, d1[2] / l1];
        let pa = dot(sub(a2, a1), u);
        let pb = dot(sub(b2, a1), u);
        let perp = sub(sub(a2, a1), [u[0] * pa, u[1] * pa, u[2] * pa]);
        let mut rho = norm(perp);
        if rho <= 1e-12 * (l1 + l2) {
            rho = 0.0;
        }
        let (s0, s1) = if pa < pb { (pa, pb) } else { (pb, pa) };
        return cos.signum() * parallel_filaments(l1, s0, s1, rho);
    }
    let rule = GaussRule::new(GAUSS_POINTS);
    let forward = quadrature_one_sided(&rule, a1, b1, a2, b2);
    let backward = quadrature_one_sided(&rule, a2, b2, a1, b1);
    MU_0_OVER_4PI * cos * 0.5 * (forward + backward)
}

/// Mutual inductance of two closed polylines (vertex lists with
/// first == last). The polylines must not touch.
pub fn polyline_mutual(p1: &[Point3], p2: &[Point3]) -> f64 {
    let mut acc = 0.0;
    for s1 in p1.windows(2) {
        for s2 in p2.windows(2) {
            acc += segment_mutual(s1[0], s1[1], s2[0], s2[1]);
        }
    }
    acc
}
