use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solvers::nlp::TrackingWeights;

/// Gains of the tracking Lyapunov function.
///
/// The speed error is shaped through a desired acceleration
/// `-speed_gain·(v - v_d)` and the lateral error through a desired steering
/// angle `atan(L·κ) - lateral_gain·(d - d_target) - heading_gain·(μ + β)`, which the
/// steering rate tracks with `-steer_gain·(δ - δ_des)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingGains {
    pub speed_gain_per_s: f64,
    pub lateral_gain_per_m: f64,
    pub heading_gain: f64,
    pub steer_gain_per_s: f64,
    pub speed_weight: f64,
    pub steer_weight: f64,
    /// Exponential decay rate of the Lyapunov function.
    pub rate_per_s: f64,
    /// Penalty on the Lyapunov relaxation.
    pub relax_weight: f64,
}

impl Default for TrackingGains {
    fn default() -> Self {
        TrackingGains {
            speed_gain_per_s: 1.0,
            lateral_gain_per_m: 0.5,
            heading_gain: 2.0,
            steer_gain_per_s: 2.0,
            speed_weight: 10.0,
            steer_weight: 10.0,
            rate_per_s: 2.0,
            relax_weight: 1.0,
        }
    }
}

/// Linear class-K gains per barrier group; one value is used at every order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierGains {
    pub clearance: f64,
    pub lane: f64,
    pub speed: f64,
    pub comfort: f64,
    pub state_limit: f64,
}

impl Default for BarrierGains {
    fn default() -> Self {
        BarrierGains {
            clearance: 1.0,
            lane: 1.0,
            speed: 1.0,
            comfort: 2.0,
            state_limit: 2.0,
        }
    }
}

impl BarrierGains {
    fn all(&self) -> [f64; 5] {
        [self.clearance, self.lane, self.speed, self.comfort, self.state_limit]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub beta: f64,
    pub z_max: usize,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig { beta: 2.0, z_max: 10 }
    }
}

/// Receding-horizon settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    /// Prediction horizon of the tracking problem, in steps.
    pub horizon_steps: usize,
    /// Steps over which barrier feasibility is checked; at most `horizon_steps`.
    pub feasibility_steps: usize,
    pub sensing_radius_m: f64,
    pub weights: TrackingWeights,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Tolerance of the hard-rule audit over the rolled horizon.
    pub audit_tolerance: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            horizon_steps: 100,
            feasibility_steps: 100,
            sensing_radius_m: 20.0,
            weights: TrackingWeights::default(),
            max_iterations: 30,
            tolerance: 1e-4,
            audit_tolerance: 1e-6,
        }
    }
}

/// Parameters shared by the offline, online and evaluation procedures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub tracking: TrackingGains,
    pub barrier_gains: BarrierGains,
    pub coverage: CoverageConfig,
    pub online: OnlineConfig,
    /// Largest lateral deviation allowed when tracking a candidate polyline.
    pub candidate_max_deviation_m: f64,
    /// Relaxation weight of a rule is `priority_weight_base^priority`.
    pub priority_weight_base: f64,
    /// Relaxations below this magnitude count as zero.
    pub relax_zero_threshold: f64,
    /// Extra distance added to clearance and lane barriers.
    pub barrier_margin_m: f64,
    /// Margin, in the rule's own unit, tightening speed and comfort barriers.
    pub limit_margin: f64,
    /// Coordinate-descent iterations of parameter tuning (0 disables it).
    pub tuning_budget: usize,
    /// Smoothing weight of the reference-line spline; 0 interpolates.
    pub spline_smoothing: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            tracking: TrackingGains::default(),
            barrier_gains: BarrierGains::default(),
            coverage: CoverageConfig::default(),
            online: OnlineConfig::default(),
            candidate_max_deviation_m: 1.0,
            priority_weight_base: 10.0,
            relax_zero_threshold: 1e-4,
            barrier_margin_m: 0.02,
            limit_margin: 0.02,
            tuning_budget: 0,
            spline_smoothing: 0.0,
        }
    }
}

impl ControllerConfig {
    pub fn relax_weight(&self, priority: usize) -> f64 {
        self.priority_weight_base.powi(priority as i32)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tracking;
        let positive = [
            ("/tracking/speed_gain_per_s", t.speed_gain_per_s),
            ("/tracking/lateral_gain_per_m", t.lateral_gain_per_m),
            ("/tracking/heading_gain", t.heading_gain),
            ("/tracking/steer_gain_per_s", t.steer_gain_per_s),
            ("/tracking/speed_weight", t.speed_weight),
            ("/tracking/steer_weight", t.steer_weight),
            ("/tracking/rate_per_s", t.rate_per_s),
            ("/tracking/relax_weight", t.relax_weight),
            ("/coverage/beta", self.coverage.beta + 1.0),
            ("/relax_zero_threshold", self.relax_zero_threshold),
            ("/candidate_max_deviation_m", self.candidate_max_deviation_m),
            ("/online/sensing_radius_m", self.online.sensing_radius_m),
            ("/online/tolerance", self.online.tolerance),
            ("/online/audit_tolerance", self.online.audit_tolerance),
        ];
        for (p, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(p, "must be positive"));
            }
        }
        for (i, g) in self.barrier_gains.all().iter().enumerate() {
            if !(g.is_finite() && *g > 0.0) {
                let name = ["clearance", "lane", "speed", "comfort", "state_limit"][i];
                return Err(Error::validation(format!("/barrier_gains/{name}"), "must be positive"));
            }
        }
        if self.coverage.z_max == 0 {
            return Err(Error::validation("/coverage/z_max", "must be at least 1"));
        }
        let o = &self.online;
        if o.horizon_steps == 0 {
            return Err(Error::validation("/online/horizon_steps", "must be at least 1"));
        }
        if o.feasibility_steps == 0 || o.feasibility_steps > o.horizon_steps {
            return Err(Error::validation(
                "/online/feasibility_steps",
                "must lie between 1 and the prediction horizon",
            ));
        }
        let w = &o.weights;
        for (p, v) in [
            ("/online/weights/lateral", w.lateral),
            ("/online/weights/heading", w.heading),
            ("/online/weights/speed", w.speed),
            ("/online/weights/effort", w.effort),
            ("/online/weights/limit_penalty", w.limit_penalty),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(p, "must be non-negative"));
            }
        }
        if !(w.effort > 0.0) {
            return Err(Error::validation("/online/weights/effort", "must be positive"));
        }
        if !(self.priority_weight_base > 1.0) {
            return Err(Error::validation("/priority_weight_base", "must exceed 1 so weights grow with priority"));
        }
        for (p, v) in [
            ("/barrier_margin_m", self.barrier_margin_m),
            ("/limit_margin", self.limit_margin),
            ("/spline_smoothing", self.spline_smoothing),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::validation(p, "must be non-negative"));
            }
        }
        Ok(())
    }
}
