//! Barrier functions for the vehicle: disk separation from other
//! participants, lateral containment, and box limits on state components.

use crate::cbf::StateFn;
use crate::dynamics::{idx, slip_angle, ReferencePath};
use crate::geometry::{disk_centers_s, min_radius_s, ClearanceSpec, Clearances, Footprint};
use crate::scalar::Scalar;
use crate::world::{Instance, PoseS};
use crate::Result;

/// Ego footprint bound to the path its curvilinear state refers to.
#[derive(Clone, Copy, Debug)]
pub struct EgoShape<'a> {
    pub path: &'a ReferencePath,
    pub footprint: Footprint,
}

impl EgoShape<'_> {
    /// Pose of the footprint's geometric center.
    pub fn center<S: Scalar>(&self, x: &[S]) -> PoseS<S> {
        let f = self.path.frame(x[idx::S]);
        let d = x[idx::D];
        let (sm, cm) = (x[idx::MU].sin(), x[idx::MU].cos());
        let cos_h = f.cos_phi * cm - f.sin_phi * sm;
        let sin_h = f.sin_phi * cm + f.cos_phi * sm;
        let off = self.footprint.cog_to_center_m();
        PoseS {
            x: f.x - d * f.sin_phi + cos_h * off,
            y: f.y + d * f.cos_phi + sin_h * off,
            cos_h,
            sin_h,
        }
    }
}

fn zero_clearance<S: Scalar>() -> Clearances<S> {
    Clearances {
        front: S::cst(0.0),
        back: S::cst(0.0),
        left: S::cst(0.0),
        right: S::cst(0.0),
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Family<'a> {
    /// `|c_ego - c_other|² - (r_ego + r_other)² ≥ 0` for one disk pair; the
    /// ego disks cover the speed-dependent clearance region.
    DiskSeparation {
        ego: EgoShape<'a>,
        clearance: ClearanceSpec,
        ego_disks: usize,
        ego_disk: usize,
        other: &'a Instance,
        other_disks: usize,
        other_disk: usize,
    },
    /// Ego disk stays right of the lateral offset `bound_m`.
    LateralMax {
        ego: EgoShape<'a>,
        disks: usize,
        disk: usize,
        bound_m: f64,
    },
    /// Ego disk stays left of the lateral offset `bound_m`.
    LateralMin {
        ego: EgoShape<'a>,
        disks: usize,
        disk: usize,
        bound_m: f64,
    },
    StateMax { index: usize, bound: f64 },
    StateMin { index: usize, bound: f64 },
    LateralAccelMax { footprint: Footprint, limit: f64 },
    LateralAccelMin { footprint: Footprint, limit: f64 },
}

impl Family<'_> {
    /// Relative degree used when building the barrier chain.
    pub fn degree(&self) -> usize {
        match self {
            Family::DiskSeparation { .. } | Family::LateralMax { .. } | Family::LateralMin { .. } => 3,
            Family::StateMax { index, .. } | Family::StateMin { index, .. } => match *index {
                idx::A | idx::OMEGA => 1,
                idx::V | idx::DELTA => 2,
                _ => 3,
            },
            Family::LateralAccelMax { .. } | Family::LateralAccelMin { .. } => 2,
        }
    }

    fn lateral<S: Scalar>(ego: &EgoShape<'_>, disks: usize, disk: usize, x: &[S]) -> (S, S) {
        let fp = &ego.footprint;
        let lon = -fp.length_m / 2.0 + fp.length_m * (2 * disk + 1) as f64 / (2.0 * disks as f64) + fp.cog_to_center_m();
        let lat = x[idx::D] + x[idx::MU].sin() * lon;
        (lat, min_radius_s(fp, &zero_clearance::<S>(), disks))
    }
}

impl StateFn for Family<'_> {
    fn eval<S: Scalar>(&self, t: S, x: &[S]) -> Result<S> {
        Ok(match self {
            Family::DiskSeparation {
                ego,
                clearance,
                ego_disks,
                ego_disk,
                other,
                other_disks,
                other_disk,
            } => {
                let h = clearance.at(x[idx::V]);
                let pe = ego.center(x);
                let ce = disk_centers_s(pe.x, pe.y, pe.cos_h, pe.sin_h, &ego.footprint, &h, *ego_disks)[*ego_disk];
                let re = min_radius_s(&ego.footprint, &h, *ego_disks);
                let po = other.pose_s(t);
                let ofp = other.footprint();
                let z = zero_clearance::<S>();
                let co = disk_centers_s(po.x, po.y, po.cos_h, po.sin_h, &ofp, &z, *other_disks)[*other_disk];
                let ro = min_radius_s(&ofp, &z, *other_disks);
                let (dx, dy) = (ce.0 - co.0, ce.1 - co.1);
                let rr = re + ro;
                dx * dx + dy * dy - rr * rr
            }
            Family::LateralMax { ego, disks, disk, bound_m } => {
                let (lat, r) = Self::lateral(ego, *disks, *disk, x);
                S::cst(*bound_m) - r - lat
            }
            Family::LateralMin { ego, disks, disk, bound_m } => {
                let (lat, r) = Self::lateral(ego, *disks, *disk, x);
                lat - r - *bound_m
            }
            Family::StateMax { index, bound } => S::cst(*bound) - x[*index],
            Family::StateMin { index, bound } => x[*index] - *bound,
            Family::LateralAccelMax { footprint, limit } => S::cst(*limit) - lat_accel(footprint, x),
            Family::LateralAccelMin { footprint, limit } => lat_accel(footprint, x) + *limit,
        })
    }
}

fn lat_accel<S: Scalar>(fp: &Footprint, x: &[S]) -> S {
    let beta = slip_angle(x[idx::DELTA], fp.rear_to_cog_m, fp.wheelbase_m());
    x[idx::V] * x[idx::V] * beta.sin() / fp.rear_to_cog_m
}
