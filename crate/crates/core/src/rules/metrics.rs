//! Violation metrics: instantaneous, per instance, and total.
//!
//! Every instantaneous metric is a squared, normalized hinge, clamped to
//! `[0, 1]`, and zero exactly when the rule statement holds.

use serde::{Deserialize, Serialize};

use crate::dynamics::slip_angle;
use crate::geometry::{lane_infringement, rect_distance, ClearanceLaw, Footprint, Pose};
use crate::rules::{RuleDef, RuleKind, Torq};
use crate::trajectory::TrajectoryRecord;
use crate::world::{Boundaries, Instance, InstanceKind};
use crate::Result;

/// Everything besides the trajectory that scoring needs.
#[derive(Clone, Copy, Debug)]
pub struct ScoringContext<'a> {
    pub footprint: Footprint,
    pub instances: &'a [Instance],
    pub lane_edges: &'a Boundaries,
    pub drivable_edges: &'a Boundaries,
    /// Largest feasible speed (clearance and speed normalizer).
    pub v_max_mps: f64,
    /// Largest feasible acceleration magnitude (comfort normalizer).
    pub a_max_mps2: f64,
    /// Largest feasible lateral acceleration (comfort normalizer).
    pub lat_accel_max_mps2: f64,
    /// Infringement depth that scores 1 for lane and drivable-area rules.
    pub infringement_max_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceScore {
    /// `None` for rules that do not depend on other participants.
    pub instance_id: Option<String>,
    pub score: f64,
    pub series: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleScore {
    pub rule_id: String,
    pub total: f64,
    /// `false` for an instance-dependent rule with no matching instance.
    pub active: bool,
    pub instances: Vec<InstanceScore>,
}

impl RuleScore {
    /// Whether the rule is violated at sample `k`.
    pub fn violated_at(&self, k: usize) -> bool {
        self.instances.iter().any(|i| i.series.get(k).is_some_and(|v| *v > 0.0))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub rules: Vec<RuleScore>,
}

impl ViolationReport {
    pub fn total(&self, id: &str) -> Option<f64> {
        self.rules.iter().find(|r| r.rule_id == id).map(|r| r.total)
    }

    pub fn violated(&self) -> Vec<String> {
        self.rules.iter().filter(|r| r.total > 0.0).map(|r| r.rule_id.clone()).collect()
    }

    pub fn is_clean(&self) -> bool {
        self.rules.iter().all(|r| r.total == 0.0)
    }

    /// A report with the given totals and no series, for comparator use.
    pub fn from_totals(totals: &[(&str, f64)]) -> Self {
        ViolationReport {
            rules: totals
                .iter()
                .map(|(id, t)| RuleScore {
                    rule_id: id.to_string(),
                    total: *t,
                    active: true,
                    instances: Vec::new(),
                })
                .collect(),
        }
    }
}

fn hinge_sq(excess: f64, norm: f64) -> f64 {
    (excess.max(0.0) / norm).powi(2).min(1.0)
}

/// Clearance metric: `max(0, (h(v) - dist) / h(v_max))²`.
pub fn clearance_violation(law: &ClearanceLaw, v: f64, v_max: f64, dist: f64) -> f64 {
    let need = law.at(v);
    let norm = law.at(v_max);
    if norm <= 0.0 {
        return if dist < 0.0 { 1.0 } else { 0.0 };
    }
    hinge_sq(need - dist, norm)
}

/// `((left + right) / (2 d_max))²`.
pub fn lane_violation(left: f64, right: f64, d_max: f64) -> f64 {
    hinge_sq(left + right, 2.0 * d_max)
}

pub fn speed_max_violation(v: f64, limit: f64, v_max: f64) -> f64 {
    hinge_sq(v - limit, v_max)
}

pub fn speed_min_violation(v: f64, limit: f64) -> f64 {
    hinge_sq(limit - v, limit)
}

pub fn comfort_violation(a: f64, a_lat: f64, a_limit: f64, lat_limit: f64, a_norm: f64, lat_norm: f64) -> f64 {
    (0.5 * (hinge_sq(a.abs() - a_limit, a_norm) + hinge_sq(a_lat.abs() - lat_limit, lat_norm))).min(1.0)
}

/// Lateral acceleration of the CoG path: `v² sin(β) / l_r`.
pub fn lateral_acceleration(v: f64, delta: f64, fp: &Footprint) -> f64 {
    v * v * slip_angle(delta, fp.rear_to_cog_m, fp.wheelbase_m()).sin() / fp.rear_to_cog_m
}

/// Gaps from the ego footprint to `other` on its left, right and front.
///
/// A side has a gap only when the other footprint's bounding box in the ego
/// frame lies beside (left/right) or ahead of (front) the ego box; otherwise
/// that side is unconstrained. Overlapping footprints give the (negative)
/// penetration distance on every side.
pub fn directional_gaps(ego: &Pose, efp: &Footprint, other: &Pose, ofp: &Footprint) -> [f64; 3] {
    let d = rect_distance(ego, efp, other, ofp);
    if d < 0.0 {
        return [d; 3];
    }
    let (s, c) = ego.heading_rad.sin_cos();
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in crate::geometry::corners(other, ofp) {
        let (dx, dy) = (p.0 - ego.x_m, p.1 - ego.y_m);
        let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
        lo = (lo.0.min(lx), lo.1.min(ly));
        hi = (hi.0.max(lx), hi.1.max(ly));
    }
    let (hl, hw) = (efp.length_m / 2.0, efp.width_m / 2.0);
    let lon_overlap = lo.0 < hl && hi.0 > -hl;
    let lat_overlap = lo.1 < hw && hi.1 > -hw;
    let inf = f64::INFINITY;
    let left = if lon_overlap && lo.1 >= hw { lo.1 - hw } else { inf };
    let right = if lon_overlap && hi.1 <= -hw { -hw - hi.1 } else { inf };
    let front = if lat_overlap && lo.0 >= hl { lo.0 - hl } else { inf };
    [left, right, front]
}

pub fn directional_violation(laws: [&ClearanceLaw; 3], v: f64, v_max: f64, gaps: [f64; 3]) -> f64 {
    let mut acc = 0.0;
    for (law, gap) in laws.iter().zip(gaps) {
        acc += clearance_violation(law, v, v_max, gap);
    }
    (acc / 3.0).min(1.0)
}

fn rms(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().sum::<f64>() / series.len() as f64).sqrt().min(1.0)
}

fn mean(series: &[f64]) -> f64 {
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().sum::<f64>() / series.len() as f64).min(1.0)
}

fn peak(series: &[f64]) -> f64 {
    series.iter().copied().fold(0.0, f64::max)
}

/// Root-mean over instance scores.
fn root_mean(scores: &[f64]) -> f64 {
    rms(scores)
}

fn targets<'a>(ctx: &ScoringContext<'a>, kind: InstanceKind) -> Vec<&'a Instance> {
    ctx.instances.iter().filter(|i| i.kind == kind).collect()
}

pub fn score_rule(rule: &RuleDef, traj: &TrajectoryRecord, ctx: &ScoringContext<'_>) -> Result<RuleScore> {
    let fp = &ctx.footprint;
    let single = |series: Vec<f64>| {
        let score = rms(&series);
        RuleScore {
            rule_id: rule.id.clone(),
            total: score,
            active: true,
            instances: vec![InstanceScore {
                instance_id: None,
                score,
                series,
            }],
        }
    };
    let per_instance = |kind: InstanceKind, f: &dyn Fn(&Instance) -> (f64, Vec<f64>)| {
        let ts = targets(ctx, kind);
        let instances: Vec<InstanceScore> = ts
            .iter()
            .map(|i| {
                let (score, series) = f(i);
                InstanceScore {
                    instance_id: Some(i.id.clone()),
                    score,
                    series,
                }
            })
            .collect();
        let scores: Vec<f64> = instances.iter().map(|i| i.score).collect();
        RuleScore {
            rule_id: rule.id.clone(),
            total: root_mean(&scores),
            active: !instances.is_empty(),
            instances,
        }
    };
    let out = match &rule.kind {
        RuleKind::Clearance { target, law } => per_instance(*target, &|inst| {
            let ifp = inst.footprint();
            let series: Vec<f64> = traj
                .samples
                .iter()
                .map(|s| {
                    let d = rect_distance(&s.pose, fp, &inst.pose_at(s.t_s), &ifp);
                    clearance_violation(law, s.state.v_mps, ctx.v_max_mps, d)
                })
                .collect();
            (peak(&series), series)
        }),
        RuleKind::DirectionalClearance {
            target,
            left,
            right,
            front,
        } => per_instance(*target, &|inst| {
            let ifp = inst.footprint();
            let series: Vec<f64> = traj
                .samples
                .iter()
                .map(|s| {
                    let gaps = directional_gaps(&s.pose, fp, &inst.pose_at(s.t_s), &ifp);
                    directional_violation([left, right, front], s.state.v_mps, ctx.v_max_mps, gaps)
                })
                .collect();
            (mean(&series), series)
        }),
        RuleKind::DrivableArea | RuleKind::LaneKeeping => {
            let edges = if matches!(rule.kind, RuleKind::LaneKeeping) {
                ctx.lane_edges
            } else {
                ctx.drivable_edges
            };
            let cap = 2.0 * ctx.infringement_max_m;
            let mut series = Vec::with_capacity(traj.len());
            for s in &traj.samples {
                let (l, r) = lane_infringement(&s.pose, fp, &edges.left, &edges.right, cap)?;
                series.push(lane_violation(l, r, ctx.infringement_max_m));
            }
            single(series)
        }
        RuleKind::SpeedMax { limit_mps } => single(
            traj.samples
                .iter()
                .map(|s| speed_max_violation(s.state.v_mps, *limit_mps, ctx.v_max_mps))
                .collect(),
        ),
        RuleKind::SpeedMin { limit_mps } => single(
            traj.samples
                .iter()
                .map(|s| speed_min_violation(s.state.v_mps, *limit_mps))
                .collect(),
        ),
        RuleKind::Comfort {
            accel_limit_mps2,
            lat_accel_limit_mps2,
        } => single(
            traj.samples
                .iter()
                .map(|s| {
                    let lat = lateral_acceleration(s.state.v_mps, s.state.delta_rad, fp);
                    comfort_violation(
                        s.state.a_mps2,
                        lat,
                        *accel_limit_mps2,
                        *lat_accel_limit_mps2,
                        ctx.a_max_mps2,
                        ctx.lat_accel_max_mps2,
                    )
                })
                .collect(),
        ),
    };
    Ok(out)
}

/// Scores every rule of the structure, in class order.
pub fn score_trajectory(torq: &Torq, traj: &TrajectoryRecord, ctx: &ScoringContext<'_>) -> Result<ViolationReport> {
    let mut rules = Vec::new();
    for r in torq.ordered_rules() {
        rules.push(score_rule(r, traj, ctx)?);
    }
    Ok(ViolationReport { rules })
}
