//! Lyapunov-QP tracking against receding-horizon tracking on an empty road.

use serde::{Deserialize, Serialize};

use crate::control::config::ControllerConfig;
use crate::control::offline::run_tracking_only;
use crate::control::online::run_online;
use crate::error::{Error, Result};
use crate::rules::Torq;
use crate::scenario::{Scenario, World};
use crate::trajectory::TrajectoryRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRun {
    pub max_lateral_error_m: f64,
    pub mean_speed_mps: f64,
    pub trajectory: TrajectoryRecord,
}

impl TrackingRun {
    fn new(trajectory: TrajectoryRecord, target_m: f64) -> Self {
        TrackingRun {
            max_lateral_error_m: trajectory
                .samples
                .iter()
                .map(|s| (s.state.d_m - target_m).abs())
                .fold(0.0, f64::max),
            mean_speed_mps: trajectory.mean_speed(),
            trajectory,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingComparison {
    pub scenario: String,
    pub lyapunov_qp: TrackingRun,
    pub receding_horizon: TrackingRun,
}

/// Tracks the ego lane of `scenario` (instances ignored) with both
/// controllers.
pub fn compare_tracking(scenario: &Scenario, config: &ControllerConfig) -> Result<TrackingComparison> {
    config.validate()?;
    let mut empty = scenario.clone();
    empty.instances.clear();
    let world = World::build(&empty, config.spline_smoothing)?;
    let target = world.lane.offset_m;
    let clf = run_tracking_only(&world, config)?
        .ok_or_else(|| Error::SolverFailure("tracking QP infeasible on the empty road".into()))?;
    let no_rules = Torq {
        classes: Vec::new(),
        rules: Vec::new(),
    };
    let mpc = run_online(&empty, &no_rules, config)?;
    Ok(TrackingComparison {
        scenario: scenario.name.clone(),
        lyapunov_qp: TrackingRun::new(clf, target),
        receding_horizon: TrackingRun::new(mpc.trajectory, target),
    })
}
