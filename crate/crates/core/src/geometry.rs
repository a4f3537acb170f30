//! Footprints, clearance regions, disk coverage and distance primitives.
//!
//! Poses refer to the geometric center of a footprint. Disk-based separation is
//! what the barrier constraints use; the exact rectangle distance is only used
//! for scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length_m: f64,
    pub width_m: f64,
    pub rear_to_cog_m: f64,
    pub front_to_cog_m: f64,
}

impl Footprint {
    pub fn new(length_m: f64, width_m: f64, rear_to_cog_m: f64, front_to_cog_m: f64) -> Result<Self> {
        let f = Footprint {
            length_m,
            width_m,
            rear_to_cog_m,
            front_to_cog_m,
        };
        f.validate()?;
        Ok(f)
    }

    /// A footprint whose CoG is the geometric center.
    pub fn centered(length_m: f64, width_m: f64) -> Self {
        Footprint {
            length_m,
            width_m,
            rear_to_cog_m: length_m / 2.0,
            front_to_cog_m: length_m / 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.length_m > 0.0
            && self.width_m > 0.0
            && self.rear_to_cog_m > 0.0
            && self.front_to_cog_m > 0.0
            && (self.rear_to_cog_m + self.front_to_cog_m - self.length_m).abs() <= 1e-9 * self.length_m.max(1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad footprint {self:?}")))
        }
    }

    /// Signed distance from the CoG forward to the geometric center.
    pub fn cog_to_center_m(&self) -> f64 {
        (self.front_to_cog_m - self.rear_to_cog_m) / 2.0
    }

    pub fn wheelbase_m(&self) -> f64 {
        self.rear_to_cog_m + self.front_to_cog_m
    }
}

/// Affine clearance law `h(v) = base + slope * v`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearanceLaw {
    pub base_m: f64,
    pub slope_s: f64,
}

impl ClearanceLaw {
    pub fn new(base_m: f64, slope_s: f64) -> Self {
        ClearanceLaw { base_m, slope_s }
    }

    pub fn at<S: Scalar>(&self, v: S) -> S {
        v * self.slope_s + self.base_m
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearanceSpec {
    pub front: ClearanceLaw,
    pub back: ClearanceLaw,
    pub left: ClearanceLaw,
    pub right: ClearanceLaw,
}

impl ClearanceSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, h) in [("front", self.front), ("back", self.back), ("left", self.left), ("right", self.right)] {
            if h.base_m < 0.0 || h.slope_s < 0.0 || !h.base_m.is_finite() || !h.slope_s.is_finite() {
                return Err(Error::invalid(format!("clearance {name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn at<S: Scalar>(&self, v: S) -> Clearances<S> {
        Clearances {
            front: self.front.at(v),
            back: self.back.at(v),
            left: self.left.at(v),
            right: self.right.at(v),
        }
    }

    /// Clearance bounds over the speed interval `[v_lo, v_hi]`.
    pub fn bounds(&self, v_lo: f64, v_hi: f64) -> ClearanceBox {
        let b = |h: ClearanceLaw| (h.at(v_lo.max(0.0)), h.at(v_hi.max(0.0)));
        ClearanceBox {
            front: b(self.front),
            back: b(self.back),
            left: b(self.left),
            right: b(self.right),
        }
    }
}

/// Clearance values at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Clearances<S> {
    pub front: S,
    pub back: S,
    pub left: S,
    pub right: S,
}

impl Clearances<f64> {
    pub fn zero() -> Self {
        Clearances {
            front: 0.0,
            back: 0.0,
            left: 0.0,
            right: 0.0,
        }
    }

    pub fn uniform(h: f64) -> Self {
        Clearances {
            front: h,
            back: h,
            left: h,
            right: h,
        }
    }
}

/// `(lower, upper)` clearance per side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClearanceBox {
    pub front: (f64, f64),
    pub back: (f64, f64),
    pub left: (f64, f64),
    pub right: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x_m: f64,
    pub y_m: f64,
    pub heading_rad: f64,
}

impl Pose {
    pub fn new(x_m: f64, y_m: f64, heading_rad: f64) -> Self {
        Pose {
            x_m,
            y_m,
            heading_rad: normalize_angle(heading_rad),
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiskCoverage {
    pub disk_count: usize,
    pub radius_m: f64,
    pub centers: Vec<(f64, f64)>,
}

pub fn min_radius(fp: &Footprint, h: &Clearances<f64>, z: usize) -> Result<f64> {
    if z == 0 {
        return Err(Error::invalid("disk count must be at least 1"));
    }
    Ok(min_radius_s(fp, h, z))
}

/// Generic radius used by barrier code; `z` must already be validated.
pub fn min_radius_s<S: Scalar>(fp: &Footprint, h: &Clearances<S>, z: usize) -> S {
    let lat = (h.left + h.right + fp.width_m) / 2.0;
    let lon = (h.front + h.back + fp.length_m) / (2.0 * z as f64);
    (lat * lat + lon * lon).sqrt()
}

/// Disk centers for a footprint whose geometric center is at `(x, y)` with
/// heading given as `(cos, sin)`.
pub fn disk_centers_s<S: Scalar>(
    x: S,
    y: S,
    cos_h: S,
    sin_h: S,
    fp: &Footprint,
    h: &Clearances<S>,
    z: usize,
) -> Vec<(S, S)> {
    let span = h.front + h.back + fp.length_m;
    let lat = (h.left - h.right) / 2.0;
    (1..=z)
        .map(|j| {
            let lon = h.back * -1.0 - fp.length_m / 2.0 + span * ((2 * j - 1) as f64 / (2.0 * z as f64));
            (
                x + cos_h * lon - sin_h * lat,
                y + sin_h * lon + cos_h * lat,
            )
        })
        .collect()
}

pub fn disk_centers(pose: &Pose, fp: &Footprint, h: &Clearances<f64>, z: usize) -> Result<Vec<(f64, f64)>> {
    if z == 0 {
        return Err(Error::invalid("disk count must be at least 1"));
    }
    let (s, c) = pose.heading_rad.sin_cos();
    Ok(disk_centers_s(pose.x_m, pose.y_m, c, s, fp, h, z))
}

pub fn disk_coverage(pose: &Pose, fp: &Footprint, h: &Clearances<f64>, z: usize) -> Result<DiskCoverage> {
    Ok(DiskCoverage {
        disk_count: z,
        radius_m: min_radius(fp, h, z)?,
        centers: disk_centers(pose, fp, h, z)?,
    })
}

/// Lateral over-coverage of the disks: radius minus half the region width.
pub fn lateral_error(fp: &Footprint, h: &Clearances<f64>, z: usize) -> f64 {
    min_radius_s(fp, h, z) - (fp.width_m + h.left + h.right) / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageChoice {
    pub disk_count: usize,
    /// Radius at the largest clearances in the box.
    pub radius_m: f64,
    /// Objective value for `z = 1..=z_max`.
    pub objective: Vec<f64>,
}

/// Chooses the disk count minimizing `z + beta * ∫σ` over the clearance box.
///
/// The integral is a one-point midpoint rule over the non-degenerate sides of
/// the box; a side whose bounds coincide contributes no integration and
/// is evaluated at its single value.
pub fn optimize_coverage(fp: &Footprint, bounds: &ClearanceBox, beta: f64, z_max: usize) -> Result<CoverageChoice> {
    if z_max == 0 {
        return Err(Error::invalid("empty disk-count search range"));
    }
    if beta < 0.0 {
        return Err(Error::invalid("beta must be non-negative"));
    }
    let sides = [bounds.front, bounds.back, bounds.left, bounds.right];
    for (lo, hi) in sides {
        if lo > hi || lo < 0.0 {
            return Err(Error::invalid("clearance bounds must satisfy 0 <= lower <= upper"));
        }
    }
    let mid = |(lo, hi): (f64, f64)| (lo + hi) / 2.0;
    let h_mid = Clearances {
        front: mid(bounds.front),
        back: mid(bounds.back),
        left: mid(bounds.left),
        right: mid(bounds.right),
    };
    let volume: f64 = sides
        .iter()
        .map(|(lo, hi)| hi - lo)
        .filter(|w| *w > 0.0)
        .product();
    let objective: Vec<f64> = (1..=z_max)
        .map(|z| z as f64 + beta * volume * lateral_error(fp, &h_mid, z))
        .collect();
    let mut best = 0;
    for (i, v) in objective.iter().enumerate() {
        if *v < objective[best] {
            best = i;
        }
    }
    let h_max = Clearances {
        front: bounds.front.1,
        back: bounds.back.1,
        left: bounds.left.1,
        right: bounds.right.1,
    };
    Ok(CoverageChoice {
        disk_count: best + 1,
        radius_m: min_radius_s(fp, &h_max, best + 1),
        objective,
    })
}

/// Corners of the footprint rectangle, counter-clockwise.
pub fn corners(pose: &Pose, fp: &Footprint) -> [(f64, f64); 4] {
    rect_corners(pose, fp.length_m, fp.width_m)
}

pub fn rect_corners(pose: &Pose, length: f64, width: f64) -> [(f64, f64); 4] {
    let (s, c) = pose.heading_rad.sin_cos();
    let hl = length / 2.0;
    let hw = width / 2.0;
    let p = |a: f64, b: f64| (pose.x_m + c * a - s * b, pose.y_m + s * a + c * b);
    [p(hl, hw), p(-hl, hw), p(-hl, -hw), p(hl, -hw)]
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Largest gap along any separating axis; negative means the projections
/// overlap on every axis and its magnitude is the minimum translation depth.
fn sat_gap(a: &[(f64, f64); 4], b: &[(f64, f64); 4]) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for poly in [a, b] {
        for i in 0..2 {
            let (p, q) = (poly[i], poly[i + 1]);
            let (ex, ey) = (q.0 - p.0, q.1 - p.1);
            let n = (ex * ex + ey * ey).sqrt();
            let axis = (-ey / n, ex / n);
            let proj = |pts: &[(f64, f64); 4]| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for pt in pts {
                    let d = pt.0 * axis.0 + pt.1 * axis.1;
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                (lo, hi)
            };
            let (alo, ahi) = proj(a);
            let (blo, bhi) = proj(b);
            let gap = (blo - ahi).max(alo - bhi);
            best = best.max(gap);
        }
    }
    best
}

/// Signed distance between two oriented rectangles: Euclidean distance when
/// apart, minus the penetration depth when overlapping.
pub fn rect_distance(pa: &Pose, fa: &Footprint, pb: &Pose, fb: &Footprint) -> f64 {
    rect_distance_dims(pa, fa.length_m, fa.width_m, pb, fb.length_m, fb.width_m)
}

pub fn rect_distance_dims(pa: &Pose, la: f64, wa: f64, pb: &Pose, lb: f64, wb: f64) -> f64 {
    let a = rect_corners(pa, la, wa);
    let b = rect_corners(pb, lb, wb);
    let gap = sat_gap(&a, &b);
    if gap <= 0.0 {
        return gap;
    }
    let mut d = f64::INFINITY;
    for i in 0..4 {
        let (a0, a1) = (a[i], a[(i + 1) % 4]);
        let (b0, b1) = (b[i], b[(i + 1) % 4]);
        for j in 0..4 {
            d = d.min(point_segment_distance(b[j], a0, a1));
            d = d.min(point_segment_distance(a[j], b0, b1));
        }
    }
    d
}

/// An open polyline used as a lane or drivable-area boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
}

impl Polyline {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let p = Polyline { points };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::invalid("boundary needs at least two points"));
        }
        for w in self.points.windows(2) {
            let l = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            if !(l > 1e-12) {
                return Err(Error::invalid("boundary has a zero-length segment"));
            }
        }
        Ok(())
    }

    /// Signed distance of `p` from the polyline, positive to the left of the
    /// direction of travel.
    pub fn signed_offset(&self, p: (f64, f64)) -> f64 {
        let mut best = f64::INFINITY;
        let mut sign = 1.0;
        let n = self.points.len();
        for (i, w) in self.points.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let mut t = ((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2;
            // extend the end segments so points beyond the ends still get a side
            let lo = if i == 0 { f64::NEG_INFINITY } else { 0.0 };
            let hi = if i == n - 2 { f64::INFINITY } else { 1.0 };
            t = t.clamp(lo, hi);
            let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
            let d = ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt();
            if d < best {
                best = d;
                let cross = dx * (p.1 - a.1) - dy * (p.0 - a.0);
                sign = if cross >= 0.0 { 1.0 } else { -1.0 };
            }
        }
        sign * best
    }
}

/// Depth by which the footprint crosses the left and right boundaries,
/// each clamped to `cap_m`.
pub fn lane_infringement(pose: &Pose, fp: &Footprint, left: &Polyline, right: &Polyline, cap_m: f64) -> Result<(f64, f64)> {
    left.validate()?;
    right.validate()?;
    let mut dl: f64 = 0.0;
    let mut dr: f64 = 0.0;
    for c in corners(pose, fp) {
        dl = dl.max(left.signed_offset(c));
        dr = dr.max(-right.signed_offset(c));
    }
    Ok((dl.min(cap_m), dr.min(cap_m)))
}
