//! Pass/fail judgement of candidate trajectories.

use serde::{Deserialize, Serialize};

use crate::control::assembly::{Objective, StepBuilder, StepResult};
use crate::control::offline::{run_pass, PassOutcome};
use crate::control::ControllerConfig;
use crate::dynamics::{integrate_step, Control, EgoState, ReferencePath};
use crate::error::{Error, Result};
use crate::geometry::normalize_angle;
use crate::rules::{
    compare_trajectories, score_trajectory, sorted_power_set, ClassSet, Preference, RuleDef, Torq, ViolationReport,
};
use crate::scenario::{Scenario, World};
use crate::trajectory::{ego_pose, Sample, TrajectoryRecord};

/// A hand-drawn path in world coordinates, optionally with a speed at each
/// point. Without speeds the ego's desired speed is tracked throughout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub points: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speeds_mps: Option<Vec<f64>>,
}

impl Candidate {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 4 {
            return Err(Error::validation("/points", "need at least 4 points"));
        }
        for (i, p) in self.points.iter().enumerate() {
            if !(p.0.is_finite() && p.1.is_finite()) {
                return Err(Error::validation(format!("/points/{i}"), "coordinates must be finite"));
            }
            if i > 0 {
                let q = self.points[i - 1];
                if (p.0 - q.0).hypot(p.1 - q.1) < 1e-9 {
                    return Err(Error::validation(format!("/points/{i}"), "repeats the previous point"));
                }
            }
        }
        if let Some(v) = &self.speeds_mps {
            if v.len() != self.points.len() {
                return Err(Error::validation("/speeds_mps", "needs one speed per point"));
            }
            if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::validation(format!("/speeds_mps/{i}"), "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    /// Speed at the fraction `u` of the polyline's length, interpolated
    /// linearly between points.
    pub fn speed_at(&self, u: f64) -> Option<f64> {
        let v = self.speeds_mps.as_ref()?;
        let mut cum = vec![0.0];
        for w in self.points.windows(2) {
            cum.push(cum.last().unwrap() + (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1));
        }
        let target = u.clamp(0.0, 1.0) * cum.last().unwrap();
        let i = cum.partition_point(|c| *c <= target).clamp(1, cum.len() - 1);
        let f = ((target - cum[i - 1]) / (cum[i] - cum[i - 1])).clamp(0.0, 1.0);
        Some(v[i - 1] + f * (v[i] - v[i - 1]))
    }
}

/// Drives the ego along `candidate` with the tracking controller alone and
/// records the result; fails when the lateral deviation exceeds the
/// configured limit or the tracking QP becomes infeasible.
pub fn realize_candidate(candidate: &Candidate, scenario: &Scenario, config: &ControllerConfig) -> Result<TrajectoryRecord> {
    candidate.validate()?;
    config.validate()?;
    let world = World::build(scenario, config.spline_smoothing)?;
    let path = ReferencePath::build(&candidate.points).map_err(|e| Error::validation("/points", e.to_string()))?;
    let sc = &world.scenario;
    let fp = sc.ego.footprint;
    let limit = config.candidate_max_deviation_m;

    // initial state re-expressed relative to the candidate
    let x0 = sc.ego.initial_state;
    let road = &world.road.path;
    let cog = road.to_global(x0.s_m, x0.d_m);
    let heading = road.heading(x0.s_m) + x0.mu_rad;
    let (s, d) = path.project(cog);
    let mut x = EgoState {
        s_m: s,
        d_m: d,
        mu_rad: normalize_angle(heading - path.heading(s)),
        ..x0
    };
    if d.abs() > limit {
        return Err(Error::Untrackable {
            max_deviation_m: d.abs(),
            limit_m: limit,
        });
    }

    let mut builder = StepBuilder::for_path(&path, fp, sc.bounds, config, sc.ego.desired_speed_mps)?;
    let vehicle = builder.vehicle();
    let dt = sc.timing.step_s;
    let end_s = path.length() - fp.front_to_cog_m;
    let mut traj = TrajectoryRecord::new(dt);
    let mut worst = d.abs();
    let mut t = 0.0;
    for k in 0..sc.timing.steps() {
        t = k as f64 * dt;
        if x.s_m >= end_s {
            break;
        }
        if let Some(v) = candidate.speed_at(x.s_m / path.length()) {
            builder.desired_speed_mps = v;
        }
        let u = match builder.solve(t, &x, &[], &[], Objective::Effort) {
            Ok(StepResult::Solved(s)) => s.control,
            Ok(StepResult::Infeasible) | Err(Error::Singularity { .. }) => {
                return Err(Error::Untrackable {
                    max_deviation_m: worst,
                    limit_m: limit,
                })
            }
            Err(e) => return Err(e),
        };
        traj.samples.push(Sample {
            t_s: t,
            state: x,
            pose: ego_pose(&path, &fp, &x),
            control: u,
        });
        x = match integrate_step(&x, &u, &vehicle, dt) {
            Ok(x) if x.is_finite() => x,
            Ok(_) | Err(Error::Singularity { .. }) => {
                return Err(Error::Untrackable {
                    max_deviation_m: f64::INFINITY,
                    limit_m: limit,
                })
            }
            Err(e) => return Err(e),
        };
        t += dt;
        worst = worst.max(x.d_m.abs());
        if worst > limit {
            return Err(Error::Untrackable {
                max_deviation_m: worst,
                limit_m: limit,
            });
        }
    }
    traj.samples.push(Sample {
        t_s: t,
        state: x,
        pose: ego_pose(&path, &fp, &x),
        control: Control::default(),
    });
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
}

/// One relaxation set tried while looking for a better trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub relaxed_priorities: Vec<usize>,
    pub feasible: bool,
    /// Comparison of the synthesized trajectory against the candidate.
    pub preference: Option<Preference>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub trajectory: TrajectoryRecord,
    pub report: ViolationReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    pub candidate_report: ViolationReport,
    /// Present exactly when the outcome is `Fail`.
    pub alternative: Option<Alternative>,
    pub trace: Vec<SearchStep>,
}

/// Relaxation sets over the classes `0..=top`, sets holding higher
/// priorities first, ties broken as in the offline order.
pub fn search_order(top: usize) -> Result<Vec<ClassSet>> {
    let mut sets = sorted_power_set(top + 1)?;
    // stable sort keeps the offline order inside each group
    sets.sort_by_key(|s| std::cmp::Reverse(s.highest().map(|h| h + 1).unwrap_or(0)));
    Ok(sets)
}

/// Scores `candidate` and tries to synthesize a trajectory the priority
/// structure prefers; failing the candidate when one is found.
pub fn evaluate_candidate(
    candidate: &TrajectoryRecord,
    scenario: &Scenario,
    torq: &Torq,
    config: &ControllerConfig,
) -> Result<Verdict> {
    config.validate()?;
    torq.validate()?;
    let world = World::build(scenario, config.spline_smoothing)?;
    let ctx = world.scoring_context();
    let candidate_report = score_trajectory(torq, candidate, &ctx)?;
    let top = candidate_report
        .violated()
        .iter()
        .filter_map(|id| torq.class_of(id))
        .max();
    let Some(top) = top else {
        return Ok(Verdict {
            outcome: Outcome::Pass,
            candidate_report,
            alternative: None,
            trace: Vec::new(),
        });
    };
    let rules: Vec<RuleDef> = torq.ordered_rules().into_iter().cloned().collect();
    let builder = StepBuilder::for_world(&world, config, &rules)?;
    let mut trace = Vec::new();
    for set in search_order(top)? {
        let out = run_pass(&world, &builder, torq, set, config)?;
        let PassOutcome::Feasible { trajectory, .. } = out else {
            trace.push(SearchStep {
                relaxed_priorities: set.priorities(),
                feasible: false,
                preference: None,
            });
            continue;
        };
        let report = score_trajectory(torq, &trajectory, &ctx)?;
        let pref = compare_trajectories(torq, &report, &candidate_report)?;
        trace.push(SearchStep {
            relaxed_priorities: set.priorities(),
            feasible: true,
            preference: Some(pref),
        });
        if pref == Preference::FirstBetter {
            return Ok(Verdict {
                outcome: Outcome::Fail,
                candidate_report,
                alternative: Some(Alternative { trajectory, report }),
                trace,
            });
        }
    }
    Ok(Verdict {
        outcome: Outcome::Pass,
        candidate_report,
        alternative: None,
        trace,
    })
}
