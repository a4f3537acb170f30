//! Scenario description, file formats and plot-data export.

pub mod io;
pub mod plot;
pub mod result;

use serde::{Deserialize, Serialize};

use crate::dynamics::{EgoState, StateControlBounds, Vehicle, VehicleParams};
use crate::error::{Error, Result};
use crate::geometry::Footprint;
use crate::rules::ScoringContext;
use crate::world::{Boundaries, Instance, Lane, Road, RoadMap};

pub use io::{
    canonical_json, load_candidate, parse_json, load_config, load_scenario, load_torq, parse_config, parse_scenario, parse_torq,
    save_json, sha256_hex,
};
pub use plot::{export_plot_data, Segment};
pub use result::{execute, ResultFile, RunDetails, RunMode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoSpec {
    /// Initial state relative to the road reference line.
    pub initial_state: EgoState,
    pub footprint: Footprint,
    pub lane_id: String,
    pub desired_speed_mps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timing {
    pub horizon_s: f64,
    pub step_s: f64,
}

impl Timing {
    pub fn steps(&self) -> usize {
        (self.horizon_s / self.step_s).round() as usize
    }
}

/// Normalizers of the violation metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringLimits {
    pub v_max_mps: f64,
    pub a_max_mps2: f64,
    pub lat_accel_max_mps2: f64,
    pub infringement_max_m: f64,
}

impl Default for ScoringLimits {
    fn default() -> Self {
        ScoringLimits {
            v_max_mps: 10.0,
            a_max_mps2: 3.5,
            lat_accel_max_mps2: 3.5,
            infringement_max_m: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub map: RoadMap,
    pub ego: EgoSpec,
    #[serde(default)]
    pub instances: Vec<Instance>,
    pub timing: Timing,
    #[serde(default)]
    pub bounds: StateControlBounds,
    #[serde(default)]
    pub limits: ScoringLimits,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let m = &self.map;
        if m.reference_line.len() < 4 {
            return Err(Error::validation("/map/reference_line", "need at least 4 points"));
        }
        if m.reference_line.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::validation("/map/reference_line", "coordinates must be finite"));
        }
        if m.lanes.is_empty() {
            return Err(Error::validation("/map/lanes", "at least one lane is required"));
        }
        for (i, l) in m.lanes.iter().enumerate() {
            if !(l.width_m > 0.0) {
                return Err(Error::validation(format!("/map/lanes/{i}/width_m"), "must be positive"));
            }
            if m.lanes[..i].iter().any(|o| o.id == l.id) {
                return Err(Error::validation(format!("/map/lanes/{i}/id"), format!("duplicate lane id {}", l.id)));
            }
        }
        if !(m.drivable_area.left_m > m.drivable_area.right_m) {
            return Err(Error::validation("/map/drivable_area", "left edge must lie left of the right edge"));
        }
        if !m.lanes.iter().any(|l| l.id == self.ego.lane_id) {
            return Err(Error::validation(
                "/ego/lane_id",
                format!("unknown lane id {}", self.ego.lane_id),
            ));
        }
        self.ego
            .footprint
            .validate()
            .map_err(|e| Error::validation("/ego/footprint", e.to_string()))?;
        if !self.ego.initial_state.is_finite() {
            return Err(Error::validation("/ego/initial_state", "must be finite"));
        }
        if !(self.ego.desired_speed_mps > 0.0) {
            return Err(Error::validation("/ego/desired_speed_mps", "must be positive"));
        }
        if !(self.timing.step_s > 0.0) {
            return Err(Error::validation("/timing/step_s", "must be positive"));
        }
        if !(self.timing.horizon_s > self.timing.step_s) {
            return Err(Error::validation("/timing/horizon_s", "must exceed the step"));
        }
        self.bounds
            .validate()
            .map_err(|e| Error::validation("/bounds", e.to_string()))?;
        let l = &self.limits;
        for (p, v) in [
            ("/limits/v_max_mps", l.v_max_mps),
            ("/limits/a_max_mps2", l.a_max_mps2),
            ("/limits/lat_accel_max_mps2", l.lat_accel_max_mps2),
            ("/limits/infringement_max_m", l.infringement_max_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(p, "must be positive"));
            }
        }
        for (i, inst) in self.instances.iter().enumerate() {
            if self.instances[..i].iter().any(|o| o.id == inst.id) {
                return Err(Error::validation(
                    format!("/instances/{i}/id"),
                    format!("duplicate instance id {}", inst.id),
                ));
            }
            inst.validate(&format!("/instances/{i}"), self.timing.horizon_s)?;
        }
        Ok(())
    }

    pub fn vehicle_params(&self) -> VehicleParams {
        VehicleParams {
            rear_to_cog_m: self.ego.footprint.rear_to_cog_m,
            front_to_cog_m: self.ego.footprint.front_to_cog_m,
        }
    }
}

/// A validated scenario with its road geometry built.
#[derive(Clone, Debug)]
pub struct World {
    pub scenario: Scenario,
    pub road: Road,
    pub lane: Lane,
    pub lane_edges: Boundaries,
}

impl World {
    pub fn build(scenario: &Scenario, smoothing: f64) -> Result<Self> {
        scenario.validate()?;
        let road = Road::build(&scenario.map, smoothing).map_err(|e| Error::validation("/map", e.to_string()))?;
        let lane = road
            .lane(&scenario.ego.lane_id)
            .cloned()
            .ok_or_else(|| Error::validation("/ego/lane_id", "unknown lane"))?;
        let lane_edges = road.lane_edges(&lane)?;
        Ok(World {
            scenario: scenario.clone(),
            road,
            lane,
            lane_edges,
        })
    }

    pub fn footprint(&self) -> Footprint {
        self.scenario.ego.footprint
    }

    pub fn vehicle(&self) -> Vehicle<'_> {
        Vehicle {
            params: self.scenario.vehicle_params(),
            path: &self.road.path,
        }
    }

    pub fn scoring_context(&self) -> ScoringContext<'_> {
        let l = &self.scenario.limits;
        ScoringContext {
            footprint: self.footprint(),
            instances: &self.scenario.instances,
            lane_edges: &self.lane_edges,
            drivable_edges: &self.road.drivable_edges,
            v_max_mps: l.v_max_mps,
            a_max_mps2: l.a_max_mps2,
            lat_accel_max_mps2: l.lat_accel_max_mps2,
            infringement_max_m: l.infringement_max_m,
        }
    }
}
