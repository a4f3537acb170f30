//! Lyapunov function for lane tracking at a desired speed.

use crate::cbf::StateFn;
use crate::control::config::TrackingGains;
use crate::dynamics::{idx, slip_angle, ReferencePath};
use crate::scalar::Scalar;
use crate::Result;

/// `V = c_v·(a + k_v(v - v_d))² + c_ω·(ω + k_δ(δ - δ_des))²` with
/// `δ_des = atan(L·κ_t) - k_d(d - d_t) - k_μ·(μ + β(δ))`, `κ_t` the curvature
/// of the offset line `d = d_t` and `β` the slip angle, so the heading term
/// acts on the direction of travel and vanishes in steady cornering.
///
/// Both squared terms have relative degree one, so the row carries jerk and
/// steering acceleration directly.
#[derive(Clone, Copy, Debug)]
pub struct TrackingClf<'a> {
    pub path: &'a ReferencePath,
    pub wheelbase_m: f64,
    pub rear_to_cog_m: f64,
    pub target_offset_m: f64,
    pub desired_speed_mps: f64,
    pub gains: TrackingGains,
}

impl TrackingClf<'_> {
    pub fn desired_steering<S: Scalar>(&self, x: &[S]) -> S {
        let g = &self.gains;
        let kappa = self.path.curvature(x[idx::S]);
        let kt = kappa / (S::cst(1.0) - kappa * self.target_offset_m);
        let ff = (kt * self.wheelbase_m).atan();
        let course = x[idx::MU] + slip_angle(x[idx::DELTA], self.rear_to_cog_m, self.wheelbase_m);
        ff - (x[idx::D] - self.target_offset_m) * g.lateral_gain_per_m - course * g.heading_gain
    }

    /// Squared-error terms `(speed, steering)` before weighting.
    pub fn errors<S: Scalar>(&self, x: &[S]) -> (S, S) {
        let g = &self.gains;
        let speed = x[idx::A] + (x[idx::V] - self.desired_speed_mps) * g.speed_gain_per_s;
        let steer = x[idx::OMEGA] + (x[idx::DELTA] - self.desired_steering(x)) * g.steer_gain_per_s;
        (speed, steer)
    }
}

impl StateFn for TrackingClf<'_> {
    fn eval<S: Scalar>(&self, _t: S, x: &[S]) -> Result<S> {
        let (e_v, e_w) = self.errors(x);
        Ok(e_v * e_v * self.gains.speed_weight + e_w * e_w * self.gains.steer_weight)
    }
}
