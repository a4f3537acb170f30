//! Finite-horizon tracking problem for the receding-horizon controller.
//!
//! Single shooting on the first-order Adomian model. The cost is a sum of
//! squares (lateral, heading and speed errors, control effort, and hinge
//! penalties on the state limits), minimized over the box of admissible
//! controls by projected Gauss-Newton steps with an Armijo search along the
//! projection arc.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{adm_predict_s, idx, Control, EgoState, ReferencePath, StateControlBounds, VehicleParams};
use crate::error::{Error, Result};
use crate::scalar::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingWeights {
    pub lateral: f64,
    pub heading: f64,
    pub speed: f64,
    pub effort: f64,
    /// Weight of the squared state-limit excess.
    pub limit_penalty: f64,
}

impl Default for TrackingWeights {
    fn default() -> Self {
        TrackingWeights {
            lateral: 1.0,
            heading: 1.0,
            speed: 1.0,
            effort: 0.05,
            limit_penalty: 100.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NlpProblem<'a> {
    pub path: &'a ReferencePath,
    pub params: VehicleParams,
    pub x0: EgoState,
    pub dt: f64,
    pub horizon: usize,
    pub target_offset_m: f64,
    pub desired_speed_mps: f64,
    pub bounds: StateControlBounds,
    pub weights: TrackingWeights,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Starting sequence; zero controls when absent.
    pub initial: Option<Vec<Control>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NlpSolution {
    pub controls: Vec<Control>,
    /// Predicted states `x(1..=H)`.
    pub states: Vec<EgoState>,
    pub cost: f64,
    /// Infinity norm of the projected-gradient step.
    pub stationarity: f64,
    pub iterations: usize,
    /// `false` when the iteration or line-search budget ran out first.
    pub converged: bool,
}

const NX: usize = 7;

impl NlpProblem<'_> {
    fn lo_hi(&self) -> ([f64; 2], [f64; 2]) {
        let b = self.bounds.control_box();
        ([b[0].0, b[1].0], [b[0].1, b[1].1])
    }

    fn project(&self, u: &mut [f64]) {
        let (lo, hi) = self.lo_hi();
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(lo[i % 2], hi[i % 2]);
        }
    }

    fn step(&self, x: &[f64; NX], u: [f64; 2]) -> Result<[f64; NX]> {
        let kappa = self.path.curvature(x[idx::S]);
        adm_predict_s(x, &u, kappa, self.dt, &self.params)
    }

    fn rollout(&self, u: &[f64]) -> Result<Vec<[f64; NX]>> {
        let mut xs = Vec::with_capacity(self.horizon + 1);
        xs.push(self.x0.to_array());
        for k in 0..self.horizon {
            let next = self.step(&xs[k], [u[2 * k], u[2 * k + 1]])?;
            xs.push(next);
        }
        Ok(xs)
    }

    /// Residuals of one predicted state and their gradient rows (sparse in
    /// the state index).
    fn state_residuals(&self, x: &[f64; NX], out: &mut Vec<f64>, rows: Option<&mut Vec<[f64; NX]>>) {
        let w = &self.weights;
        let b = &self.bounds;
        let mut grads = Vec::new();
        let mut push = |val: f64, index: usize, scale: f64| {
            out.push(val);
            let mut g = [0.0; NX];
            g[index] = scale;
            grads.push(g);
        };
        let (sd, sm, sv) = (w.lateral.sqrt(), w.heading.sqrt(), w.speed.sqrt());
        push(sd * (x[idx::D] - self.target_offset_m), idx::D, sd);
        push(sm * x[idx::MU], idx::MU, sm);
        push(sv * (x[idx::V] - self.desired_speed_mps), idx::V, sv);
        let sp = w.limit_penalty.sqrt();
        for (index, lo, hi) in [
            (idx::V, b.v_min_mps, b.v_max_mps),
            (idx::A, b.a_min_mps2, b.a_max_mps2),
            (idx::DELTA, b.delta_min_rad, b.delta_max_rad),
            (idx::OMEGA, b.omega_min_radps, b.omega_max_radps),
        ] {
            let v = x[index];
            if v > hi {
                push(sp * (v - hi), index, sp);
            } else if v < lo {
                push(sp * (v - lo), index, sp);
            } else {
                push(0.0, index, 0.0);
            }
        }
        if let Some(rows) = rows {
            rows.extend(grads);
        }
    }

    fn residuals(&self, u: &[f64], xs: &[[f64; NX]]) -> Vec<f64> {
        let mut r = Vec::new();
        for x in &xs[1..] {
            self.state_residuals(x, &mut r, None);
        }
        let se = self.weights.effort.sqrt();
        r.extend(u.iter().map(|v| se * v));
        r
    }

    fn cost(&self, u: &[f64]) -> Option<f64> {
        let xs = self.rollout(u).ok()?;
        let c: f64 = self.residuals(u, &xs).iter().map(|v| v * v).sum();
        c.is_finite().then_some(c)
    }

    /// State and control Jacobians of one model step.
    fn step_jacobian(&self, x: &[f64; NX], u: [f64; 2]) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let mut a = DMatrix::zeros(NX, NX);
        let mut bm = DMatrix::zeros(NX, 2);
        for dir in 0..NX + 2 {
            let xd: Vec<Jet<2>> = (0..NX)
                .map(|i| Jet {
                    c: [x[i], if i == dir { 1.0 } else { 0.0 }],
                })
                .collect();
            let ud: Vec<Jet<2>> = (0..2)
                .map(|i| Jet {
                    c: [u[i], if NX + i == dir { 1.0 } else { 0.0 }],
                })
                .collect();
            let kappa = self.path.curvature(xd[idx::S]);
            let out = adm_predict_s(&xd, &ud, kappa, self.dt, &self.params)?;
            for i in 0..NX {
                if dir < NX {
                    a[(i, dir)] = out[i].c[1];
                } else {
                    bm[(i, dir - NX)] = out[i].c[1];
                }
            }
        }
        Ok((a, bm))
    }

    /// Residual vector and its Jacobian with respect to the control sequence.
    fn linearize(&self, u: &[f64], xs: &[[f64; NX]]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let h = self.horizon;
        let n = 2 * h;
        let r = self.residuals(u, xs);
        let mut jac = DMatrix::zeros(r.len(), n);
        let mut sens = DMatrix::<f64>::zeros(NX, n);
        let mut row = 0;
        for k in 0..h {
            let (a, b) = self.step_jacobian(&xs[k], [u[2 * k], u[2 * k + 1]])?;
            let mut next = &a * &sens;
            for i in 0..NX {
                next[(i, 2 * k)] += b[(i, 0)];
                next[(i, 2 * k + 1)] += b[(i, 1)];
            }
            sens = next;
            let mut vals = Vec::new();
            let mut grads = Vec::new();
            self.state_residuals(&xs[k + 1], &mut vals, Some(&mut grads));
            for g in &grads {
                for (si, gs) in g.iter().enumerate() {
                    if *gs != 0.0 {
                        for j in 0..=(2 * k + 1) {
                            jac[(row, j)] += gs * sens[(si, j)];
                        }
                    }
                }
                row += 1;
            }
        }
        let se = self.weights.effort.sqrt();
        for j in 0..n {
            jac[(row + j, j)] = se;
        }
        Ok((DVector::from_vec(r), jac))
    }
}

fn projected_step(p: &NlpProblem<'_>, u: &[f64], g: &DVector<f64>) -> f64 {
    let mut w: Vec<f64> = u.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
    p.project(&mut w);
    w.iter().zip(u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

pub fn solve_tracking_nlp(p: &NlpProblem<'_>) -> Result<NlpSolution> {
    if p.horizon == 0 {
        return Err(Error::invalid("horizon must be at least one step"));
    }
    if !(p.dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    let n = 2 * p.horizon;
    let (lo, hi) = p.lo_hi();
    let mut u = vec![0.0; n];
    p.project(&mut u);
    let zero_cost = p
        .cost(&u)
        .ok_or_else(|| Error::SolverFailure("prediction leaves the model domain".into()))?;
    let mut cost = zero_cost;
    if let Some(init) = &p.initial {
        let mut w: Vec<f64> = (0..n)
            .map(|i| {
                init.get(i / 2)
                    .map(|c| if i % 2 == 0 { c.jerk_mps3 } else { c.steer_radps2 })
                    .unwrap_or(0.0)
            })
            .collect();
        p.project(&mut w);
        if let Some(c) = p.cost(&w) {
            if c < cost {
                u = w;
                cost = c;
            }
        }
    }
    let mut converged = false;
    let mut stationarity = f64::INFINITY;
    let mut iterations = 0;
    while iterations < p.max_iterations {
        let xs = p.rollout(&u)?;
        let (r, jac) = p.linearize(&u, &xs)?;
        // gradient of ½‖r‖²
        let g = jac.transpose() * &r;
        stationarity = projected_step(p, &u, &g);
        if stationarity <= p.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let eps = stationarity.min(1e-3);
        let active: Vec<bool> = (0..n)
            .map(|i| (u[i] <= lo[i % 2] + eps && g[i] > 0.0) || (u[i] >= hi[i % 2] - eps && g[i] < 0.0))
            .collect();
        let hess = jac.transpose() * &jac;
        let free: Vec<usize> = (0..n).filter(|i| !active[*i]).collect();
        let mut d = vec![0.0; n];
        if !free.is_empty() {
            let m = free.len();
            let mut hf = DMatrix::zeros(m, m);
            let mut gf = DVector::zeros(m);
            for (a, &i) in free.iter().enumerate() {
                gf[a] = g[i];
                for (b, &j) in free.iter().enumerate() {
                    hf[(a, b)] = hess[(i, j)];
                }
                hf[(a, a)] += 1e-9 * (1.0 + hess[(i, i)]);
            }
            let sol = hf
                .cholesky()
                .map(|c| c.solve(&(-&gf)))
                .ok_or_else(|| Error::SolverFailure("singular Gauss-Newton system".into()))?;
            for (a, &i) in free.iter().enumerate() {
                d[i] = sol[a];
            }
        }
        for i in 0..n {
            if active[i] {
                d[i] = -g[i] / hess[(i, i)].max(1e-9);
            }
        }
        // Armijo search along the projection arc
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut trial: Vec<f64> = u.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            p.project(&mut trial);
            let decrease: f64 = (0..n)
                .map(|i| {
                    if active[i] {
                        g[i] * (u[i] - trial[i])
                    } else {
                        -alpha * g[i] * d[i]
                    }
                })
                .sum();
            if let Some(c) = p.cost(&trial) {
                // cost is ‖r‖², twice the model objective
                if c <= cost - 2.0 * 1e-4 * decrease {
                    accepted = Some((trial, c));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, c)) => {
                u = trial;
                cost = c;
            }
            None => break,
        }
    }
    let xs = p.rollout(&u)?;
    Ok(NlpSolution {
        controls: u.chunks(2).map(|c| Control::new(c[0], c[1])).collect(),
        states: xs[1..].iter().map(|x| EgoState::from_slice(x)).collect(),
        cost,
        stationarity,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> ReferencePath {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 * 10.0, 0.0)).collect();
        ReferencePath::build(&pts).unwrap()
    }

    fn problem(path: &ReferencePath, x0: EgoState, h: usize) -> NlpProblem<'_> {
        NlpProblem {
            path,
            params: VehicleParams {
                rear_to_cog_m: 1.5,
                front_to_cog_m: 1.5,
            },
            x0,
            dt: 0.1,
            horizon: h,
            target_offset_m: 0.0,
            desired_speed_mps: 5.0,
            bounds: StateControlBounds::default(),
            weights: TrackingWeights::default(),
            max_iterations: 50,
            tolerance: 1e-4,
            initial: None,
        }
    }

    #[test]
    fn on_reference_stays_put() {
        let path = straight();
        let x0 = EgoState {
            s_m: 5.0,
            v_mps: 5.0,
            ..Default::default()
        };
        let s = solve_tracking_nlp(&problem(&path, x0, 20)).unwrap();
        assert!(s.converged);
        let m = s
            .controls
            .iter()
            .map(|c| c.jerk_mps3.abs().max(c.steer_radps2.abs()))
            .fold(0.0, f64::max);
        assert!(m <= 1e-3, "{m}");
    }

    #[test]
    fn steers_back_toward_path() {
        let path = straight();
        let x0 = EgoState {
            s_m: 5.0,
            d_m: 0.5,
            v_mps: 5.0,
            ..Default::default()
        };
        let p = problem(&path, x0, 20);
        let s = solve_tracking_nlp(&p).unwrap();
        assert!(s.controls[0].steer_radps2 < 0.0);
        let zero = p.cost(&vec![0.0; 40]).unwrap();
        assert!(s.cost <= zero);
    }
}
