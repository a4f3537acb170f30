//! Full-information control with iterative rule relaxation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::control::assembly::{ActiveRule, Objective, StepBuilder, StepResult};
use crate::control::config::ControllerConfig;
use crate::dynamics::{integrate_step, Control, EgoState};
use crate::error::{Error, Result};
use crate::rules::{score_trajectory, sorted_power_set, ClassSet, RuleDef, RuleId, Torq, ViolationReport};
use crate::scenario::{Scenario, World};
use crate::trajectory::{ego_pose, Sample, TrajectoryRecord};
use crate::world::Instance;

/// One pass over `[0, T]` with a fixed relaxation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// One-based position in the relaxation order.
    pub k: usize,
    /// Priorities of the relaxed classes.
    pub relaxed_priorities: Vec<usize>,
    pub feasible: bool,
    /// First time at which the QP was infeasible.
    pub infeasible_at_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineResult {
    pub trajectory: TrajectoryRecord,
    pub report: ViolationReport,
    /// Rules whose relaxation was actually used.
    pub relaxed_rules: Vec<RuleId>,
    /// Relaxation value per relaxed-class rule, per step.
    pub relaxation: BTreeMap<RuleId, Vec<f64>>,
    /// Relaxation of the tracking row per step.
    pub tracking_relaxation: Vec<f64>,
    /// One-based index of the winning relaxation set.
    pub iteration: usize,
    pub attempts: Vec<Attempt>,
    pub qp_count: usize,
}

/// Outcome of a pass with a fixed relaxation set.
#[derive(Clone, Debug)]
pub enum PassOutcome {
    Feasible {
        trajectory: TrajectoryRecord,
        relaxation: BTreeMap<RuleId, Vec<f64>>,
        tracking_relaxation: Vec<f64>,
        qp_count: usize,
    },
    Infeasible {
        at_s: f64,
        qp_count: usize,
    },
}

/// Runs the step QPs from 0 to T with the rules of the classes in `relaxed`
/// softened and every other rule hard.
pub fn run_pass(
    world: &World,
    builder: &StepBuilder<'_>,
    torq: &Torq,
    relaxed: ClassSet,
    config: &ControllerConfig,
) -> Result<PassOutcome> {
    let sc = &world.scenario;
    let mut active: Vec<ActiveRule<'_>> = Vec::new();
    for (ci, class) in torq.classes.iter().enumerate() {
        for id in class {
            let rule = torq
                .rule(id)
                .ok_or_else(|| Error::invalid(format!("unknown rule {id}")))?;
            let relax_weight = relaxed.contains(ci).then(|| config.relax_weight(ci + 1));
            active.push(ActiveRule { rule, relax_weight });
        }
    }
    let instances: Vec<&Instance> = sc.instances.iter().collect();
    let dt = sc.timing.step_s;
    let steps = sc.timing.steps();
    let vehicle = builder.vehicle();
    let fp = sc.ego.footprint;
    let mut traj = TrajectoryRecord::new(dt);
    let mut relaxation: BTreeMap<RuleId, Vec<f64>> = active
        .iter()
        .filter(|a| a.relax_weight.is_some())
        .map(|a| (a.rule.id.clone(), Vec::with_capacity(steps)))
        .collect();
    let mut tracking = Vec::with_capacity(steps);
    let mut x: EgoState = sc.ego.initial_state;
    for k in 0..steps {
        let t = k as f64 * dt;
        let sol = match builder.solve(t, &x, &active, &instances, Objective::Effort)? {
            StepResult::Solved(s) => s,
            StepResult::Infeasible => return Ok(PassOutcome::Infeasible { at_s: t, qp_count: k + 1 }),
        };
        for (a, r) in active.iter().zip(&sol.relax) {
            if let Some(v) = r {
                relaxation.get_mut(&a.rule.id).expect("relaxed rule").push(*v);
            }
        }
        tracking.push(sol.clf_relax.unwrap_or(0.0));
        traj.samples.push(Sample {
            t_s: t,
            state: x,
            pose: ego_pose(builder.path, &fp, &x),
            control: sol.control,
        });
        x = integrate_step(&x, &sol.control, &vehicle, dt)?;
        if !x.is_finite() {
            return Err(Error::SolverFailure(format!("state diverged at t = {:.3} s", t + dt)));
        }
    }
    traj.samples.push(Sample {
        t_s: steps as f64 * dt,
        state: x,
        pose: ego_pose(builder.path, &fp, &x),
        control: Control::default(),
    });
    Ok(PassOutcome::Feasible {
        trajectory: traj,
        relaxation,
        tracking_relaxation: tracking,
        qp_count: steps,
    })
}

/// Searches `order` for the first relaxation set giving a feasible pass.
/// Returns the pass, its one-based index, and the attempt log.
pub fn relaxation_search(
    world: &World,
    builder: &StepBuilder<'_>,
    torq: &Torq,
    order: &[ClassSet],
    config: &ControllerConfig,
) -> Result<(Option<(usize, PassOutcome)>, Vec<Attempt>, usize)> {
    let mut attempts = Vec::new();
    let mut qps = 0;
    for (i, set) in order.iter().enumerate() {
        let out = run_pass(world, builder, torq, *set, config)?;
        let (feasible, at) = match &out {
            PassOutcome::Feasible { qp_count, .. } => {
                qps += qp_count;
                (true, None)
            }
            PassOutcome::Infeasible { at_s, qp_count } => {
                qps += qp_count;
                (false, Some(*at_s))
            }
        };
        attempts.push(Attempt {
            k: i + 1,
            relaxed_priorities: set.priorities(),
            feasible,
            infeasible_at_s: at,
        });
        if feasible {
            return Ok((Some((i + 1, out)), attempts, qps));
        }
    }
    Ok((None, attempts, qps))
}

/// Rules whose relaxation exceeded `threshold` at some step.
pub fn used_relaxations(relaxation: &BTreeMap<RuleId, Vec<f64>>, torq: &Torq, threshold: f64) -> Vec<RuleId> {
    torq.ordered_rules()
        .into_iter()
        .filter(|r| {
            relaxation
                .get(&r.id)
                .is_some_and(|s| s.iter().any(|v| v.abs() > threshold))
        })
        .map(|r| r.id.clone())
        .collect()
}

fn all_rules(torq: &Torq) -> Vec<RuleDef> {
    torq.ordered_rules().into_iter().cloned().collect()
}

/// Offline optimal control over the sorted power set of classes, after
/// parameter tuning when the config asks for it.
pub fn run_offline(scenario: &Scenario, torq: &Torq, config: &ControllerConfig) -> Result<OfflineResult> {
    config.validate()?;
    torq.validate()?;
    let tuned;
    let config = if config.tuning_budget > 0 {
        tuned = crate::control::tune::tune_parameters(scenario, config)?;
        &tuned
    } else {
        config
    };
    let world = World::build(scenario, config.spline_smoothing)?;
    let rules = all_rules(torq);
    let builder = StepBuilder::for_world(&world, config, &rules)?;
    let order = sorted_power_set(torq.class_count())?;
    let (found, attempts, qp_count) = relaxation_search(&world, &builder, torq, &order, config)?;
    let Some((iteration, PassOutcome::Feasible {
        trajectory,
        relaxation,
        tracking_relaxation,
        ..
    })) = found
    else {
        return Err(Error::NoSolution);
    };
    let report = score_trajectory(torq, &trajectory, &world.scoring_context())?;
    Ok(OfflineResult {
        relaxed_rules: used_relaxations(&relaxation, torq, config.relax_zero_threshold),
        trajectory,
        report,
        relaxation,
        tracking_relaxation,
        iteration,
        attempts,
        qp_count,
    })
}

/// Rules-free run used for tuning and tracking comparisons.
pub fn run_tracking_only(world: &World, config: &ControllerConfig) -> Result<Option<TrajectoryRecord>> {
    let builder = StepBuilder::for_world(world, config, &[])?;
    let torq = Torq {
        classes: Vec::new(),
        rules: Vec::new(),
    };
    match run_pass(world, &builder, &torq, ClassSet::EMPTY, config)? {
        PassOutcome::Feasible { trajectory, .. } => Ok(Some(trajectory)),
        PassOutcome::Infeasible { .. } => Ok(None),
    }
}
