//! Parameter tuning on rules-free rollouts.

use crate::control::config::ControllerConfig;
use crate::control::offline::run_tracking_only;
use crate::error::Result;
use crate::scenario::{Scenario, World};

/// Root-mean-square of `d - d_target` over a trajectory.
pub fn rms_lateral_error(samples: &[crate::trajectory::Sample], target_m: f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| (s.state.d_m - target_m).powi(2)).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Coordinate-wise finite-difference descent on positive parameters, in log
/// space. `cost` returns `None` for an infeasible parameter vector; such
/// points are never accepted. Returns the best point and its cost.
pub fn coordinate_descent<F>(start: &[f64], budget: usize, mut cost: F) -> (Vec<f64>, Option<f64>)
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let mut x = start.to_vec();
    let mut best = cost(&x);
    if best.is_none() {
        return (x, None);
    }
    let mut step = vec![0.5f64; x.len()];
    for _ in 0..budget {
        let mut moved = false;
        for i in 0..x.len() {
            let probe = |sign: f64, x: &[f64]| {
                let mut y = x.to_vec();
                y[i] *= (sign * step[i]).exp();
                y
            };
            let up = probe(1.0, &x);
            let down = probe(-1.0, &x);
            let (fu, fd) = (cost(&up), cost(&down));
            let current = best.expect("feasible start");
            // central difference picks the descent direction; one-sided when a
            // probe is infeasible
            let pick = match (fu, fd) {
                (Some(a), Some(b)) if a < b => Some((up, a)),
                (Some(_), Some(b)) => Some((down, b)),
                (Some(a), None) => Some((up, a)),
                (None, Some(b)) => Some((down, b)),
                (None, None) => None,
            };
            match pick {
                Some((y, f)) if f < current => {
                    x = y;
                    best = Some(f);
                    moved = true;
                }
                _ => step[i] *= 0.5,
            }
        }
        if !moved && step.iter().all(|s| *s < 1e-3) {
            break;
        }
    }
    (x, best)
}

fn pack(c: &ControllerConfig) -> Vec<f64> {
    let g = &c.barrier_gains;
    vec![
        c.tracking.rate_per_s,
        c.tracking.relax_weight,
        g.clearance,
        g.lane,
        g.speed,
        g.comfort,
        g.state_limit,
    ]
}

fn unpack(c: &ControllerConfig, p: &[f64]) -> ControllerConfig {
    let mut out = c.clone();
    out.tracking.rate_per_s = p[0];
    out.tracking.relax_weight = p[1];
    let g = &mut out.barrier_gains;
    g.clearance = p[2];
    g.lane = p[3];
    g.speed = p[4];
    g.comfort = p[5];
    g.state_limit = p[6];
    out
}

/// Tunes the Lyapunov rate, its relaxation weight and the class-K gains for
/// the smallest RMS lateral error of a rules-free run on `scenario`, with
/// `config.tuning_budget` descent sweeps.
pub fn tune_parameters(scenario: &Scenario, config: &ControllerConfig) -> Result<ControllerConfig> {
    config.validate()?;
    let mut empty = scenario.clone();
    empty.instances.clear();
    let world = World::build(&empty, config.spline_smoothing)?;
    let target = world.lane.offset_m;
    let (p, _) = coordinate_descent(&pack(config), config.tuning_budget, |p| {
        let c = unpack(config, p);
        match run_tracking_only(&world, &c) {
            Ok(Some(traj)) => Some(rms_lateral_error(&traj.samples, target)),
            _ => None,
        }
    });
    Ok(unpack(config, &p))
}
