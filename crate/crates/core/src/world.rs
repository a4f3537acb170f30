//! Road layout and other traffic participants.

use serde::{Deserialize, Serialize};

use crate::dynamics::ReferencePath;
use crate::error::{Error, Result};
use crate::geometry::{normalize_angle, Footprint, Polyline, Pose};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceKind {
    Pedestrian,
    Parked,
    Active,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptSample {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub heading_rad: f64,
    pub v_mps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Motion {
    Static,
    ConstantVelocity { speed_mps: f64 },
    Scripted { samples: Vec<ScriptSample> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceShape {
    pub length_m: f64,
    pub width_m: f64,
}

impl InstanceShape {
    pub fn footprint(&self) -> Footprint {
        Footprint::centered(self.length_m, self.width_m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub kind: InstanceKind,
    pub shape: InstanceShape,
    /// Pose of the geometric center at `t = 0`.
    pub pose: Pose,
    pub motion: Motion,
}

/// Instance pose on a generic scalar (time may be a series).
#[derive(Clone, Copy, Debug)]
pub struct PoseS<S> {
    pub x: S,
    pub y: S,
    pub cos_h: S,
    pub sin_h: S,
}

impl Instance {
    /// Checks the instance; errors point below `ptr`.
    pub fn validate(&self, ptr: &str, horizon_s: f64) -> Result<()> {
        if !(self.shape.length_m > 0.0 && self.shape.width_m > 0.0) {
            return Err(Error::validation(format!("{ptr}/shape"), "dimensions must be positive"));
        }
        match &self.motion {
            Motion::Static => {}
            Motion::ConstantVelocity { speed_mps } => {
                if !speed_mps.is_finite() {
                    return Err(Error::validation(format!("{ptr}/motion/speed_mps"), "must be finite"));
                }
            }
            Motion::Scripted { samples } => {
                if samples.len() < 2 {
                    return Err(Error::validation(format!("{ptr}/motion/samples"), "need at least two samples"));
                }
                if samples.windows(2).any(|w| !(w[1].t_s > w[0].t_s)) {
                    return Err(Error::validation(format!("{ptr}/motion/samples"), "times must increase"));
                }
                let (first, last) = (samples[0].t_s, samples[samples.len() - 1].t_s);
                if first > 0.0 || last < horizon_s {
                    return Err(Error::validation(
                        format!("{ptr}/motion/samples"),
                        format!("script covers [{first}, {last}] but the scenario needs [0, {horizon_s}]"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn footprint(&self) -> Footprint {
        self.shape.footprint()
    }

    /// Pose at time `t`.
    pub fn pose_s<S: Scalar>(&self, t: S) -> PoseS<S> {
        match &self.motion {
            Motion::Static => {
                let (s, c) = self.pose.heading_rad.sin_cos();
                PoseS {
                    x: S::cst(self.pose.x_m),
                    y: S::cst(self.pose.y_m),
                    cos_h: S::cst(c),
                    sin_h: S::cst(s),
                }
            }
            Motion::ConstantVelocity { speed_mps } => {
                let (s, c) = self.pose.heading_rad.sin_cos();
                PoseS {
                    x: t * (speed_mps * c) + self.pose.x_m,
                    y: t * (speed_mps * s) + self.pose.y_m,
                    cos_h: S::cst(c),
                    sin_h: S::cst(s),
                }
            }
            Motion::Scripted { samples } => {
                let tv = t.value();
                let mut i = samples.partition_point(|p| p.t_s <= tv);
                i = i.clamp(1, samples.len() - 1);
                let (a, b) = (samples[i - 1], samples[i]);
                let dt = b.t_s - a.t_s;
                // hold the end samples outside the script
                let frac = if tv < a.t_s || tv > b.t_s {
                    S::cst(((tv - a.t_s) / dt).clamp(0.0, 1.0))
                } else {
                    (t - a.t_s) / dt
                };
                let dh = normalize_angle(b.heading_rad - a.heading_rad);
                let h = frac * dh + a.heading_rad;
                PoseS {
                    x: frac * (b.x_m - a.x_m) + a.x_m,
                    y: frac * (b.y_m - a.y_m) + a.y_m,
                    cos_h: h.cos(),
                    sin_h: h.sin(),
                }
            }
        }
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let p = self.pose_s(t);
        Pose::new(p.x, p.y, p.sin_h.atan2(p.cos_h))
    }

    /// Speed at time `t` (what a sensor reports as the current control).
    pub fn speed_at(&self, t: f64) -> f64 {
        match &self.motion {
            Motion::Static => 0.0,
            Motion::ConstantVelocity { speed_mps } => *speed_mps,
            Motion::Scripted { samples } => {
                let i = samples.partition_point(|p| p.t_s <= t).clamp(1, samples.len() - 1);
                let (a, b) = (samples[i - 1], samples[i]);
                let f = ((t - a.t_s) / (b.t_s - a.t_s)).clamp(0.0, 1.0);
                a.v_mps + f * (b.v_mps - a.v_mps)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: String,
    /// Lateral offset of the lane center from the road reference line, left positive.
    pub offset_m: f64,
    pub width_m: f64,
}

impl Lane {
    pub fn left_m(&self) -> f64 {
        self.offset_m + self.width_m / 2.0
    }
    pub fn right_m(&self) -> f64 {
        self.offset_m - self.width_m / 2.0
    }
}

/// Drivable area as lateral offsets of its edges from the reference line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivableArea {
    pub left_m: f64,
    pub right_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadMap {
    pub reference_line: Vec<(f64, f64)>,
    pub lanes: Vec<Lane>,
    pub drivable_area: DrivableArea,
}

/// Boundary polylines used for scoring.
#[derive(Clone, Debug)]
pub struct Boundaries {
    pub left: Polyline,
    pub right: Polyline,
}

/// Built road: spline, lanes and sampled boundaries.
#[derive(Clone, Debug)]
pub struct Road {
    pub path: ReferencePath,
    pub lanes: Vec<Lane>,
    pub drivable: DrivableArea,
    pub drivable_edges: Boundaries,
}

const BOUNDARY_STEP_M: f64 = 0.5;

impl Road {
    pub fn build(map: &RoadMap, smoothing: f64) -> Result<Self> {
        let path = ReferencePath::build_with(
            &map.reference_line,
            crate::dynamics::SplineOptions {
                smoothing,
                ..Default::default()
            },
        )?;
        let edges = Boundaries {
            left: Polyline::new(path.offset_polyline(map.drivable_area.left_m, BOUNDARY_STEP_M))?,
            right: Polyline::new(path.offset_polyline(map.drivable_area.right_m, BOUNDARY_STEP_M))?,
        };
        Ok(Road {
            path,
            lanes: map.lanes.clone(),
            drivable: map.drivable_area,
            drivable_edges: edges,
        })
    }

    pub fn lane(&self, id: &str) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    pub fn lane_edges(&self, lane: &Lane) -> Result<Boundaries> {
        Ok(Boundaries {
            left: Polyline::new(self.path.offset_polyline(lane.left_m(), BOUNDARY_STEP_M))?,
            right: Polyline::new(self.path.offset_polyline(lane.right_m(), BOUNDARY_STEP_M))?,
        })
    }

    pub fn lane_centerline(&self, lane: &Lane) -> Vec<(f64, f64)> {
        self.path.offset_polyline(lane.offset_m, BOUNDARY_STEP_M)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ped(motion: Motion) -> Instance {
        Instance {
            id: "p".into(),
            kind: InstanceKind::Pedestrian,
            shape: InstanceShape { length_m: 0.5, width_m: 0.5 },
            pose: Pose::new(1.0, 2.0, 0.0),
            motion,
        }
    }

    #[test]
    fn constant_velocity_advances() {
        let i = ped(Motion::ConstantVelocity { speed_mps: 2.0 });
        for k in 0..5 {
            let p = i.pose_at(0.1 * k as f64);
            assert!((p.x_m - (1.0 + 0.2 * k as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn script_interpolates() {
        let s = |t, x| ScriptSample { t_s: t, x_m: x, y_m: 0.0, heading_rad: 0.0, v_mps: 1.0 };
        let i = ped(Motion::Scripted { samples: vec![s(0.0, 0.0), s(1.0, 1.0), s(3.0, 2.0)] });
        assert!((i.pose_at(1.0).x_m - 1.0).abs() < 1e-12);
        assert!((i.pose_at(2.0).x_m - 1.5).abs() < 1e-12);
        assert!((i.pose_at(5.0).x_m - 2.0).abs() < 1e-12);
        assert!(i.validate("/instances/0", 3.0).is_ok());
        assert!(i.validate("/instances/0", 4.0).is_err());
    }
}
