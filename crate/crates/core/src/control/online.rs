//! Receding-horizon control with local sensing.
//!
//! Each step solves the tracking problem for a reference control sequence,
//! then rolls the barrier QPs forward over the feasibility horizon against the
//! predicted motion of the sensed instances, growing the relaxed set from the
//! bottom of the online rule structure until the roll is feasible.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::control::assembly::{ActiveRule, Objective, StepBuilder, StepResult, StepSolution};
use crate::control::config::ControllerConfig;
use crate::dynamics::{integrate_step, Control, EgoState, StateControlBounds};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::rules::{build_otorq, score_trajectory, ClassSet, RuleDef, RuleId, Torq, ViolationReport};
use crate::scenario::{Scenario, World};
use crate::solvers::nlp::{solve_tracking_nlp, NlpProblem};
use crate::trajectory::{ego_pose, Sample, TrajectoryRecord};
use crate::world::{Instance, InstanceKind, Motion};

/// A sensed participant.
#[derive(Clone, Debug, PartialEq)]
pub struct Detection<'a> {
    pub instance: &'a Instance,
    pub pose: Pose,
    pub speed_mps: f64,
}

/// Instances whose center lies in the closed disk of `radius_m` around
/// `ego_xy` at time `t`.
pub fn sense<'a>(instances: &'a [Instance], ego_xy: (f64, f64), t: f64, radius_m: f64) -> Vec<Detection<'a>> {
    instances
        .iter()
        .filter_map(|i| {
            let pose = i.pose_at(t);
            let dist = (pose.x_m - ego_xy.0).hypot(pose.y_m - ego_xy.1);
            (dist <= radius_m).then(|| Detection {
                instance: i,
                pose,
                speed_mps: i.speed_at(t),
            })
        })
        .collect()
}

/// Poses of each detection over `steps + 1` samples spaced `dt`, holding the
/// sensed speed and heading; scripted instances follow their script.
pub fn predict_instances(detections: &[Detection<'_>], t: f64, steps: usize, dt: f64) -> Vec<Vec<Pose>> {
    detections
        .iter()
        .map(|d| {
            (0..=steps)
                .map(|k| {
                    let tau = k as f64 * dt;
                    match d.instance.motion {
                        Motion::Scripted { .. } => d.instance.pose_at(t + tau),
                        _ => {
                            let h = d.pose.heading_rad;
                            Pose::new(
                                d.pose.x_m + d.speed_mps * tau * h.cos(),
                                d.pose.y_m + d.speed_mps * tau * h.sin(),
                                h,
                            )
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Hardest braking the bounds allow, with zero steering acceleration.
pub fn emergency_control(x: &EgoState, bounds: &StateControlBounds, dt: f64) -> Control {
    let target = if x.v_mps > 0.0 {
        bounds.a_min_mps2.max(-x.v_mps / dt)
    } else {
        0.0
    };
    Control::new(
        ((target - x.a_mps2) / dt).clamp(bounds.jerk_min_mps3, bounds.jerk_max_mps3),
        0.0,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t_s: f64,
    pub detected: Vec<String>,
    /// Rules of the online structure at this step.
    pub active_rules: Vec<RuleId>,
    /// Priorities, in the full structure, of the classes relaxed after the step.
    pub relaxed_priorities: Vec<usize>,
    /// Priorities relaxed in the feasible roll (all of them on an emergency).
    pub rolled_priorities: Vec<usize>,
    /// Feasibility rolls run before one succeeded.
    pub roll_attempts: usize,
    /// Highest priority whose hard barrier went negative during the roll.
    pub audit_violation: Option<usize>,
    /// The first-step QP with the audited set was infeasible, so the control
    /// of the feasible roll was applied.
    pub fallback: bool,
    pub emergency: bool,
    pub tracking_converged: bool,
}

#[derive(Clone, Debug)]
pub struct OnlineStep {
    pub control: Control,
    /// Relaxed classes in the full structure, downward closed.
    pub relaxed: ClassSet,
    pub reference: Vec<Control>,
    pub log: StepLog,
    pub qp_count: usize,
}

/// Everything that stays fixed over a run.
pub struct OnlineContext<'a> {
    pub world: &'a World,
    pub torq: &'a Torq,
    pub config: &'a ControllerConfig,
    pub builder: StepBuilder<'a>,
}

impl<'a> OnlineContext<'a> {
    pub fn new(world: &'a World, torq: &'a Torq, config: &'a ControllerConfig) -> Result<Self> {
        let rules: Vec<RuleDef> = torq.ordered_rules().into_iter().cloned().collect();
        let builder = StepBuilder::for_world(world, config, &rules)?;
        Ok(OnlineContext {
            world,
            torq,
            config,
            builder,
        })
    }
}

enum Roll {
    Feasible {
        first: StepSolution,
        /// Smallest barrier value per rule over the roll.
        lowest: Vec<f64>,
    },
    Infeasible,
}

struct Structure<'t> {
    /// Rules with their online class index.
    rules: Vec<(&'t RuleDef, usize)>,
    /// Online class index to full class index.
    origin: Vec<usize>,
}

impl Structure<'_> {
    fn active(&self, relaxed: ClassSet, config: &ControllerConfig) -> Vec<ActiveRule<'_>> {
        self.rules
            .iter()
            .map(|(rule, c)| ActiveRule {
                rule,
                relax_weight: relaxed.contains(*c).then(|| config.relax_weight(self.origin[*c] + 1)),
            })
            .collect()
    }
}

fn roll(
    ctx: &OnlineContext<'_>,
    st: &Structure<'_>,
    instances: &[&Instance],
    t: f64,
    x: &EgoState,
    relaxed: ClassSet,
    reference: &[Control],
    qps: &mut usize,
) -> Result<Roll> {
    let dt = ctx.world.scenario.timing.step_s;
    let active = st.active(relaxed, ctx.config);
    let vehicle = ctx.builder.vehicle();
    let mut lowest = vec![f64::INFINITY; active.len()];
    let mut first = None;
    let mut xs = *x;
    for k in 0..ctx.config.online.feasibility_steps {
        let tk = t + k as f64 * dt;
        let u_ref = reference.get(k).copied().unwrap_or_default();
        *qps += 1;
        let sol = match ctx.builder.solve(tk, &xs, &active, instances, Objective::Reference(u_ref))? {
            StepResult::Solved(s) => s,
            StepResult::Infeasible => return Ok(Roll::Infeasible),
        };
        for (l, b) in lowest.iter_mut().zip(&sol.barrier_min) {
            *l = l.min(*b);
        }
        xs = integrate_step(&xs, &sol.control, &vehicle, dt)?;
        if first.is_none() {
            first = Some(sol);
        }
    }
    Ok(Roll::Feasible {
        first: first.expect("at least one feasibility step"),
        lowest,
    })
}

/// One step of the online procedure from state `x` at time `t` with the
/// relaxed set `relaxed` (full class indices) carried over from the last step.
pub fn online_step(
    ctx: &OnlineContext<'_>,
    t: f64,
    x: &EgoState,
    relaxed: ClassSet,
    warm_start: Option<Vec<Control>>,
) -> Result<OnlineStep> {
    let world = ctx.world;
    let sc = &world.scenario;
    let cfg = &ctx.config.online;
    let dt = sc.timing.step_s;

    let nlp = solve_tracking_nlp(&NlpProblem {
        path: &world.road.path,
        params: sc.vehicle_params(),
        x0: *x,
        dt,
        horizon: cfg.horizon_steps,
        target_offset_m: world.lane.offset_m,
        desired_speed_mps: sc.ego.desired_speed_mps,
        bounds: sc.bounds,
        weights: cfg.weights,
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        initial: warm_start,
    })?;
    let reference = nlp.controls;

    let ego_xy = world.road.path.to_global(x.s_m, x.d_m);
    let detections = sense(&sc.instances, ego_xy, t, cfg.sensing_radius_m);
    let kinds: BTreeSet<InstanceKind> = detections.iter().map(|d| d.instance.kind).collect();
    let instances: Vec<&Instance> = detections.iter().map(|d| d.instance).collect();
    let (otorq, origin) = build_otorq(ctx.torq, &kinds);
    let mut rules = Vec::new();
    for (ci, class) in otorq.classes.iter().enumerate() {
        for id in class {
            let rule = ctx
                .torq
                .rule(id)
                .ok_or_else(|| Error::invalid(format!("unknown rule {id}")))?;
            rules.push((rule, ci));
        }
    }
    let st = Structure { rules, origin };
    let n = st.origin.len();

    // carried-over set in online indices, closed downward
    let mut level = (0..n).filter(|c| relaxed.contains(st.origin[*c])).map(|c| c + 1).max().unwrap_or(0);
    let mut qp_count = 0;
    let mut attempts = 0;
    let feasible = loop {
        attempts += 1;
        match roll(ctx, &st, &instances, t, x, ClassSet::below(level), &reference, &mut qp_count)? {
            Roll::Feasible { first, lowest } => break Some((first, lowest)),
            Roll::Infeasible if level < n => level += 1,
            Roll::Infeasible => break None,
        }
    };

    let mut log = StepLog {
        t_s: t,
        detected: detections.iter().map(|d| d.instance.id.clone()).collect(),
        active_rules: st.rules.iter().map(|(r, _)| r.id.clone()).collect(),
        relaxed_priorities: Vec::new(),
        rolled_priorities: Vec::new(),
        roll_attempts: attempts,
        audit_violation: None,
        fallback: false,
        emergency: false,
        tracking_converged: nlp.converged,
    };
    let to_full = |set: ClassSet| ClassSet::from_indices(&set.members().iter().map(|c| st.origin[*c]).collect::<Vec<_>>());

    let Some((roll_first, lowest)) = feasible else {
        let all = ClassSet::below(n);
        log.emergency = true;
        log.relaxed_priorities = to_full(all).priorities();
        log.rolled_priorities = log.relaxed_priorities.clone();
        return Ok(OnlineStep {
            control: emergency_control(x, &sc.bounds, dt),
            relaxed: to_full(all),
            reference,
            log,
            qp_count,
        });
    };

    // audit the hard rules over the roll
    let rolled = ClassSet::below(level);
    log.rolled_priorities = to_full(rolled).priorities();
    let violated = st
        .rules
        .iter()
        .zip(&lowest)
        .filter(|((_, c), l)| !rolled.contains(*c) && **l < -cfg.audit_tolerance)
        .map(|((_, c), _)| *c)
        .max();
    let next = match violated {
        None => ClassSet::EMPTY,
        Some(c) => {
            log.audit_violation = Some(st.origin[c] + 1);
            ClassSet::below(c)
        }
    };
    qp_count += 1;
    let control = match ctx.builder.solve(t, x, &st.active(next, ctx.config), &instances, Objective::Reference(reference[0]))? {
        StepResult::Solved(s) => s.control,
        StepResult::Infeasible => {
            log.fallback = true;
            roll_first.control
        }
    };
    let relaxed = to_full(next);
    log.relaxed_priorities = relaxed.priorities();
    Ok(OnlineStep {
        control,
        relaxed,
        reference,
        log,
        qp_count,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineResult {
    pub trajectory: TrajectoryRecord,
    pub report: ViolationReport,
    pub history: Vec<StepLog>,
    pub emergency_steps: usize,
    pub qp_count: usize,
}

/// Runs the online procedure until the horizon ends or the path runs out.
pub fn run_online(scenario: &Scenario, torq: &Torq, config: &ControllerConfig) -> Result<OnlineResult> {
    config.validate()?;
    torq.validate()?;
    let world = World::build(scenario, config.spline_smoothing)?;
    let ctx = OnlineContext::new(&world, torq, config)?;
    let sc = &world.scenario;
    let dt = sc.timing.step_s;
    let fp = sc.ego.footprint;
    let path = &world.road.path;
    let vehicle = world.vehicle();
    let end_s = path.length() - fp.front_to_cog_m;
    let mut traj = TrajectoryRecord::new(dt);
    let mut history = Vec::new();
    let mut x = sc.ego.initial_state;
    let mut relaxed = ClassSet::EMPTY;
    let mut warm: Option<Vec<Control>> = None;
    let mut qp_count = 0;
    let mut t = 0.0;
    for k in 0..sc.timing.steps() {
        t = k as f64 * dt;
        if x.s_m >= end_s {
            break;
        }
        let step = online_step(&ctx, t, &x, relaxed, warm.take())?;
        qp_count += step.qp_count;
        relaxed = step.relaxed;
        traj.samples.push(Sample {
            t_s: t,
            state: x,
            pose: ego_pose(path, &fp, &x),
            control: step.control,
        });
        history.push(step.log);
        let mut shifted = step.reference[1..].to_vec();
        shifted.push(Control::default());
        warm = Some(shifted);
        x = integrate_step(&x, &step.control, &vehicle, dt)?;
        if !x.is_finite() {
            return Err(Error::SolverFailure(format!("state diverged at t = {:.3} s", t + dt)));
        }
        t += dt;
    }
    traj.samples.push(Sample {
        t_s: t,
        state: x,
        pose: ego_pose(path, &fp, &x),
        control: Control::default(),
    });
    let report = score_trajectory(torq, &traj, &world.scoring_context())?;
    Ok(OnlineResult {
        emergency_steps: history.iter().filter(|h| h.emergency).count(),
        trajectory: traj,
        report,
        history,
        qp_count,
    })
}
