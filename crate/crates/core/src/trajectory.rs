use serde::{Deserialize, Serialize};

use crate::dynamics::{Control, EgoState, ReferencePath};
use crate::geometry::{Footprint, Pose};

/// One sample of an ego trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t_s: f64,
    /// Curvilinear state relative to the path the controller tracked.
    pub state: EgoState,
    /// Pose of the footprint's geometric center.
    pub pose: Pose,
    /// Control applied over `[t, t + dt)`; zero on the last sample.
    pub control: Control,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub dt_s: f64,
    pub samples: Vec<Sample>,
}

impl TrajectoryRecord {
    pub fn new(dt_s: f64) -> Self {
        TrajectoryRecord {
            dt_s,
            samples: Vec::new(),
        }
    }

    pub fn duration_s(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t_s - a.t_s,
            _ => 0.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn mean_speed(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.state.v_mps).sum::<f64>() / self.samples.len() as f64
    }
}

/// Geometric-center pose of the ego for a curvilinear state on `path`.
pub fn ego_pose(path: &ReferencePath, fp: &Footprint, x: &EgoState) -> Pose {
    let f = path.frame(x.s_m);
    let cog = (f.x - x.d_m * f.sin_phi, f.y + x.d_m * f.cos_phi);
    let heading = f.sin_phi.atan2(f.cos_phi) + x.mu_rad;
    let off = fp.cog_to_center_m();
    Pose::new(cog.0 + off * heading.cos(), cog.1 + off * heading.sin(), heading)
}
