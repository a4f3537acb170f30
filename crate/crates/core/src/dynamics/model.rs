//! Curvilinear vehicle model, fixed-step integration and the discrete
//! predictive model used by the MPC layer.

use serde::{Deserialize, Serialize};

use crate::dynamics::path::ReferencePath;
use crate::error::{Error, Result};
use crate::scalar::{Jet, Scalar};

/// Continuous-time control-affine system `x' = f(t, x) + g(t, x) u`.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn rhs<S: Scalar>(&self, t: S, x: &[S], u: &[S], out: &mut [S]) -> Result<()>;
}

/// Index constants into the 7-vector state.
pub mod idx {
    pub const S: usize = 0;
    pub const D: usize = 1;
    pub const MU: usize = 2;
    pub const V: usize = 3;
    pub const A: usize = 4;
    pub const DELTA: usize = 5;
    pub const OMEGA: usize = 6;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub s_m: f64,
    pub d_m: f64,
    pub mu_rad: f64,
    pub v_mps: f64,
    pub a_mps2: f64,
    pub delta_rad: f64,
    pub omega_radps: f64,
}

impl EgoState {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.s_m,
            self.d_m,
            self.mu_rad,
            self.v_mps,
            self.a_mps2,
            self.delta_rad,
            self.omega_radps,
        ]
    }

    pub fn from_slice(x: &[f64]) -> Self {
        EgoState {
            s_m: x[0],
            d_m: x[1],
            mu_rad: x[2],
            v_mps: x[3],
            a_mps2: x[4],
            delta_rad: x[5],
            omega_radps: x[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub jerk_mps3: f64,
    pub steer_radps2: f64,
}

impl Control {
    pub fn new(jerk_mps3: f64, steer_radps2: f64) -> Self {
        Control {
            jerk_mps3,
            steer_radps2,
        }
    }

    pub fn to_array(&self) -> [f64; 2] {
        [self.jerk_mps3, self.steer_radps2]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateControlBounds {
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub a_min_mps2: f64,
    pub a_max_mps2: f64,
    pub jerk_min_mps3: f64,
    pub jerk_max_mps3: f64,
    pub delta_min_rad: f64,
    pub delta_max_rad: f64,
    pub omega_min_radps: f64,
    pub omega_max_radps: f64,
    pub steer_min_radps2: f64,
    pub steer_max_radps2: f64,
}

impl Default for StateControlBounds {
    fn default() -> Self {
        StateControlBounds {
            v_min_mps: 0.0,
            v_max_mps: 10.0,
            a_min_mps2: -3.5,
            a_max_mps2: 3.5,
            jerk_min_mps3: -4.0,
            jerk_max_mps3: 4.0,
            delta_min_rad: -1.0,
            delta_max_rad: 1.0,
            omega_min_radps: -0.5,
            omega_max_radps: 0.5,
            steer_min_radps2: -2.0,
            steer_max_radps2: 2.0,
        }
    }
}

impl StateControlBounds {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("v", self.v_min_mps, self.v_max_mps),
            ("a", self.a_min_mps2, self.a_max_mps2),
            ("jerk", self.jerk_min_mps3, self.jerk_max_mps3),
            ("delta", self.delta_min_rad, self.delta_max_rad),
            ("omega", self.omega_min_radps, self.omega_max_radps),
            ("steer", self.steer_min_radps2, self.steer_max_radps2),
        ];
        for (name, lo, hi) in pairs {
            if !(lo < hi) {
                return Err(Error::invalid(format!("bound {name}: min must be below max")));
            }
        }
        Ok(())
    }

    pub fn control_box(&self) -> [(f64, f64); 2] {
        [
            (self.jerk_min_mps3, self.jerk_max_mps3),
            (self.steer_min_radps2, self.steer_max_radps2),
        ]
    }

    pub fn clamp_control(&self, u: Control) -> Control {
        Control {
            jerk_mps3: u.jerk_mps3.clamp(self.jerk_min_mps3, self.jerk_max_mps3),
            steer_radps2: u.steer_radps2.clamp(self.steer_min_radps2, self.steer_max_radps2),
        }
    }
}

/// Largest admissible `d * kappa`.
pub const SINGULARITY_GUARD: f64 = 1e-6;

/// Vehicle right-hand side for a given path curvature.
pub fn vehicle_rhs<S: Scalar>(x: &[S], u: &[S], kappa: S, rear_to_cog: f64, wheelbase: f64) -> Result<[S; 7]> {
    let one_minus = S::cst(1.0) - x[idx::D] * kappa;
    if one_minus.value() < SINGULARITY_GUARD {
        return Err(Error::Singularity {
            d: x[idx::D].value(),
            kappa: kappa.value(),
        });
    }
    let beta = (x[idx::DELTA].tan() * (rear_to_cog / wheelbase)).atan();
    let v = x[idx::V];
    let heading = x[idx::MU] + beta;
    let along = v * heading.cos() / one_minus;
    Ok([
        along,
        v * heading.sin(),
        v * beta.sin() / rear_to_cog - kappa * along,
        x[idx::A],
        u[0],
        x[idx::OMEGA],
        u[1],
    ])
}

/// Side-slip angle at the CoG.
pub fn slip_angle<S: Scalar>(delta: S, rear_to_cog: f64, wheelbase: f64) -> S {
    (delta.tan() * (rear_to_cog / wheelbase)).atan()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub rear_to_cog_m: f64,
    pub front_to_cog_m: f64,
}

impl VehicleParams {
    pub fn wheelbase(&self) -> f64 {
        self.rear_to_cog_m + self.front_to_cog_m
    }
}

/// The vehicle model bound to a reference path.
#[derive(Clone, Copy)]
pub struct Vehicle<'a> {
    pub params: VehicleParams,
    pub path: &'a ReferencePath,
}

impl Dynamics for Vehicle<'_> {
    fn state_dim(&self) -> usize {
        7
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn rhs<S: Scalar>(&self, _t: S, x: &[S], u: &[S], out: &mut [S]) -> Result<()> {
        let kappa = self.path.curvature(x[idx::S]);
        let r = vehicle_rhs(x, u, kappa, self.params.rear_to_cog_m, self.params.wheelbase())?;
        out.copy_from_slice(&r);
        Ok(())
    }
}

/// Time derivative of the vehicle state for an explicit curvature.
pub fn derivative(state: &EgoState, u: &Control, kappa: f64, params: &VehicleParams) -> Result<EgoState> {
    let r = vehicle_rhs(&state.to_array(), &u.to_array(), kappa, params.rear_to_cog_m, params.wheelbase())?;
    Ok(EgoState::from_slice(&r))
}

/// Classical RK4 step with the control held over the step.
pub fn rk4_step<D: Dynamics>(dyn_: &D, t: f64, x: &[f64], u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    dyn_.rhs(t, x, u, &mut k1)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    dyn_.rhs(t + 0.5 * dt, &tmp, u, &mut k2)?;
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    dyn_.rhs(t + 0.5 * dt, &tmp, u, &mut k3)?;
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    dyn_.rhs(t + dt, &tmp, u, &mut k4)?;
    Ok((0..n)
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

pub fn integrate_step(state: &EgoState, u: &Control, vehicle: &Vehicle<'_>, dt: f64) -> Result<EgoState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    let x = rk4_step(vehicle, 0.0, &state.to_array(), &u.to_array(), dt)?;
    Ok(EgoState::from_slice(&x))
}

/// First-order Adomian step of the vehicle model.
pub fn adm_predict_s<S: Scalar>(x: &[S], u: &[S], kappa: S, dt: f64, params: &VehicleParams) -> Result<[S; 7]> {
    let f = vehicle_rhs(x, u, kappa, params.rear_to_cog_m, params.wheelbase())?;
    let half = 0.5 * dt * dt;
    Ok([
        x[0] + f[0] * dt,
        x[1] + f[1] * dt,
        x[2] + f[2] * dt,
        x[3] + x[idx::A] * dt + u[0] * half,
        x[4] + u[0] * dt,
        x[5] + x[idx::OMEGA] * dt + u[1] * half,
        x[6] + u[1] * dt,
    ])
}

pub fn adm_predict(state: &EgoState, u: &Control, kappa: f64, dt: f64, params: &VehicleParams) -> Result<EgoState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    let r = adm_predict_s(&state.to_array(), &u.to_array(), kappa, dt, params)?;
    Ok(EgoState::from_slice(&r))
}

/// Taylor coefficients (in time) of the solution through `x0` at `t0` with the
/// control held at `u`.
pub fn state_series<D: Dynamics, const N: usize>(dyn_: &D, t0: f64, x0: &[f64], u: &[f64]) -> Result<Vec<Jet<N>>> {
    let n = x0.len();
    let mut xs: Vec<Jet<N>> = x0.iter().map(|v| Jet::constant(*v)).collect();
    let us: Vec<Jet<N>> = u.iter().map(|v| Jet::constant(*v)).collect();
    let t = Jet::<N>::variable(t0);
    let mut f = vec![Jet::<N>::constant(0.0); n];
    // each pass fixes one more coefficient
    for k in 0..N - 1 {
        dyn_.rhs(t, &xs, &us, &mut f)?;
        for i in 0..n {
            xs[i].c[k + 1] = f[i].c[k] / (k + 1) as f64;
        }
    }
    Ok(xs)
}
