//! Per-step QP: control effort or reference tracking, the tracking Lyapunov
//! row, rule barriers (hard or relaxed) and state-limit barriers.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::cbf::families::{EgoShape, Family};
use crate::cbf::{clf_row, psi_sequence, BarrierSpec, ClfSpec, ConstraintRow, Expansion, Sense};
use crate::control::config::ControllerConfig;
use crate::control::tracking::TrackingClf;
use crate::dynamics::{idx, Control, EgoState, ReferencePath, StateControlBounds, Vehicle, VehicleParams};
use crate::error::{Error, Result};
use crate::geometry::{optimize_coverage, ClearanceBox, ClearanceLaw, ClearanceSpec, Footprint};
use crate::rules::{RuleDef, RuleKind};
use crate::scenario::World;
use crate::solvers::{solve_qp, QpProblem, QpStatus};
use crate::world::{Instance, Lane};

/// A rule taking part in a step, hard when `relax_weight` is `None`.
#[derive(Clone, Copy, Debug)]
pub struct ActiveRule<'r> {
    pub rule: &'r RuleDef,
    pub relax_weight: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Objective {
    /// `‖u‖² + p_e·δ_e²` with the tracking Lyapunov row.
    Effort,
    /// `‖u - u_ref‖²`, no Lyapunov row.
    Reference(Control),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepSolution {
    pub control: Control,
    /// Relaxation of the Lyapunov row, when present.
    pub clf_relax: Option<f64>,
    pub lyapunov: Option<f64>,
    /// Relaxation value per active rule (`None` for hard rules).
    pub relax: Vec<Option<f64>>,
    /// Smallest barrier value per active rule (`+∞` when it has no barrier).
    pub barrier_min: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StepResult {
    Solved(StepSolution),
    Infeasible,
}

/// Disk counts chosen once per run.
#[derive(Clone, Debug, Default)]
struct DiskPlan {
    ego_plain: usize,
    ego_by_rule: HashMap<String, usize>,
    by_instance: HashMap<String, usize>,
}

fn zero_box() -> ClearanceBox {
    ClearanceBox {
        front: (0.0, 0.0),
        back: (0.0, 0.0),
        left: (0.0, 0.0),
        right: (0.0, 0.0),
    }
}

/// Clearance region the barrier of a clearance rule keeps free.
pub fn rule_clearance(rule: &RuleDef, margin_m: f64) -> Option<ClearanceSpec> {
    let pad = |l: &ClearanceLaw| ClearanceLaw::new(l.base_m + margin_m, l.slope_s);
    match &rule.kind {
        RuleKind::Clearance { law, .. } => {
            let l = pad(law);
            Some(ClearanceSpec {
                front: l,
                back: l,
                left: l,
                right: l,
            })
        }
        RuleKind::DirectionalClearance { left, right, front, .. } => Some(ClearanceSpec {
            front: pad(front),
            back: ClearanceLaw::new(margin_m, 0.0),
            left: pad(left),
            right: pad(right),
        }),
        _ => None,
    }
}

/// Everything needed to build step problems for one ego on one path.
#[derive(Clone, Debug)]
pub struct StepBuilder<'a> {
    pub path: &'a ReferencePath,
    pub footprint: Footprint,
    pub bounds: StateControlBounds,
    pub config: &'a ControllerConfig,
    pub lane: Lane,
    pub drivable: (f64, f64),
    /// Lateral offset and speed the Lyapunov function tracks.
    pub target_offset_m: f64,
    pub desired_speed_mps: f64,
    disks: DiskPlan,
}

impl<'a> StepBuilder<'a> {
    /// Builder on the road of `world`, tracking the ego lane.
    pub fn for_world(world: &'a World, config: &'a ControllerConfig, rules: &[RuleDef]) -> Result<Self> {
        let sc = &world.scenario;
        let mut b = StepBuilder {
            path: &world.road.path,
            footprint: sc.ego.footprint,
            bounds: sc.bounds,
            config,
            lane: world.lane.clone(),
            drivable: (world.road.drivable.left_m, world.road.drivable.right_m),
            target_offset_m: world.lane.offset_m,
            desired_speed_mps: sc.ego.desired_speed_mps,
            disks: DiskPlan::default(),
        };
        b.plan_disks(rules, &sc.instances)?;
        Ok(b)
    }

    /// Builder tracking an arbitrary path with no rules (lane data unused).
    pub fn for_path(
        path: &'a ReferencePath,
        footprint: Footprint,
        bounds: StateControlBounds,
        config: &'a ControllerConfig,
        desired_speed_mps: f64,
    ) -> Result<Self> {
        let mut b = StepBuilder {
            path,
            footprint,
            bounds,
            config,
            lane: Lane {
                id: String::new(),
                offset_m: 0.0,
                width_m: 1.0,
            },
            drivable: (0.5, -0.5),
            target_offset_m: 0.0,
            desired_speed_mps,
            disks: DiskPlan::default(),
        };
        b.plan_disks(&[], &[])?;
        Ok(b)
    }

    fn plan_disks(&mut self, rules: &[RuleDef], instances: &[Instance]) -> Result<()> {
        let cov = &self.config.coverage;
        self.disks.ego_plain = optimize_coverage(&self.footprint, &zero_box(), cov.beta, cov.z_max)?.disk_count;
        for r in rules {
            if let Some(spec) = rule_clearance(r, self.config.barrier_margin_m) {
                let bx = spec.bounds(self.bounds.v_min_mps, self.bounds.v_max_mps);
                let z = optimize_coverage(&self.footprint, &bx, cov.beta, cov.z_max)?.disk_count;
                self.disks.ego_by_rule.insert(r.id.clone(), z);
            }
        }
        for i in instances {
            let z = optimize_coverage(&i.footprint(), &zero_box(), cov.beta, cov.z_max)?.disk_count;
            self.disks.by_instance.insert(i.id.clone(), z);
        }
        Ok(())
    }

    /// Disk count of the ego for the clearance region of `rule`, or of the
    /// bare footprint.
    pub fn ego_disks(&self, rule: Option<&str>) -> usize {
        rule.and_then(|r| self.disks.ego_by_rule.get(r).copied())
            .unwrap_or(self.disks.ego_plain)
    }

    pub fn vehicle_params(&self) -> VehicleParams {
        VehicleParams {
            rear_to_cog_m: self.footprint.rear_to_cog_m,
            front_to_cog_m: self.footprint.front_to_cog_m,
        }
    }

    pub fn vehicle(&self) -> Vehicle<'a> {
        Vehicle {
            params: self.vehicle_params(),
            path: self.path,
        }
    }

    pub fn tracking_clf(&self) -> TrackingClf<'a> {
        TrackingClf {
            path: self.path,
            wheelbase_m: self.footprint.wheelbase_m(),
            rear_to_cog_m: self.footprint.rear_to_cog_m,
            target_offset_m: self.target_offset_m,
            desired_speed_mps: self.desired_speed_mps,
            gains: self.config.tracking,
        }
    }

    fn shape(&self) -> EgoShape<'a> {
        EgoShape {
            path: self.path,
            footprint: self.footprint,
        }
    }

    /// Barrier functions of a rule with their class-K gain.
    pub fn rule_barriers<'i>(&self, rule: &RuleDef, instances: &[&'i Instance]) -> Vec<(Family<'i>, f64)>
    where
        'a: 'i,
    {
        let g = &self.config.barrier_gains;
        let m = self.config.barrier_margin_m;
        let lim = self.config.limit_margin;
        let ego = self.shape();
        let mut out = Vec::new();
        let lateral = |out: &mut Vec<(Family<'i>, f64)>, left: f64, right: f64| {
            let z = self.disks.ego_plain;
            for disk in 0..z {
                out.push((
                    Family::LateralMax {
                        ego,
                        disks: z,
                        disk,
                        bound_m: left - m,
                    },
                    g.lane,
                ));
                out.push((
                    Family::LateralMin {
                        ego,
                        disks: z,
                        disk,
                        bound_m: right + m,
                    },
                    g.lane,
                ));
            }
        };
        match &rule.kind {
            RuleKind::Clearance { target, .. } | RuleKind::DirectionalClearance { target, .. } => {
                let spec = rule_clearance(rule, m).expect("clearance rule");
                let ze = self.ego_disks(Some(&rule.id));
                for inst in instances.iter().filter(|i| i.kind == *target) {
                    let zo = self.disks.by_instance.get(&inst.id).copied().unwrap_or(1);
                    for ed in 0..ze {
                        for od in 0..zo {
                            out.push((
                                Family::DiskSeparation {
                                    ego,
                                    clearance: spec,
                                    ego_disks: ze,
                                    ego_disk: ed,
                                    other: inst,
                                    other_disks: zo,
                                    other_disk: od,
                                },
                                g.clearance,
                            ));
                        }
                    }
                }
            }
            RuleKind::LaneKeeping => lateral(&mut out, self.lane.left_m(), self.lane.right_m()),
            RuleKind::DrivableArea => lateral(&mut out, self.drivable.0, self.drivable.1),
            RuleKind::SpeedMax { limit_mps } => out.push((
                Family::StateMax {
                    index: idx::V,
                    bound: limit_mps - lim,
                },
                g.speed,
            )),
            RuleKind::SpeedMin { limit_mps } => out.push((
                Family::StateMin {
                    index: idx::V,
                    bound: limit_mps + lim,
                },
                g.speed,
            )),
            RuleKind::Comfort {
                accel_limit_mps2,
                lat_accel_limit_mps2,
            } => {
                let (a, l) = (accel_limit_mps2 - lim, lat_accel_limit_mps2 - lim);
                out.push((Family::StateMax { index: idx::A, bound: a }, g.comfort));
                out.push((Family::StateMin { index: idx::A, bound: -a }, g.comfort));
                let fp = self.footprint;
                out.push((Family::LateralAccelMax { footprint: fp, limit: l }, g.comfort));
                out.push((Family::LateralAccelMin { footprint: fp, limit: l }, g.comfort));
            }
        }
        out
    }

    /// Hard barriers for the physical state limits.
    pub fn state_limit_barriers(&self) -> Vec<(Family<'static>, f64)> {
        let b = &self.bounds;
        let g = self.config.barrier_gains.state_limit;
        let mut out = Vec::new();
        for (index, lo, hi) in [
            (idx::V, b.v_min_mps, b.v_max_mps),
            (idx::A, b.a_min_mps2, b.a_max_mps2),
            (idx::DELTA, b.delta_min_rad, b.delta_max_rad),
            (idx::OMEGA, b.omega_min_radps, b.omega_max_radps),
        ] {
            out.push((Family::StateMin { index, bound: lo }, g));
            out.push((Family::StateMax { index, bound: hi }, g));
        }
        out
    }

    /// Smallest barrier value of each rule at a state (statement-level
    /// satisfaction check, up to the disk over-approximation).
    pub fn barrier_values(&self, t: f64, x: &EgoState, rules: &[&RuleDef], instances: &[&Instance]) -> Result<Vec<f64>> {
        let xs = x.to_array();
        rules
            .iter()
            .map(|r| {
                let mut m = f64::INFINITY;
                for (f, _) in self.rule_barriers(r, instances) {
                    m = m.min(crate::cbf::StateFn::eval(&f, t, &xs)?);
                }
                Ok(m)
            })
            .collect()
    }

    /// Builds and solves the QP at one sample.
    pub fn solve(
        &self,
        t: f64,
        x: &EgoState,
        rules: &[ActiveRule<'_>],
        instances: &[&Instance],
        objective: Objective,
    ) -> Result<StepResult> {
        let exp = Expansion::new(&self.vehicle(), t, &x.to_array())?;
        let mut rows: Vec<ConstraintRow> = Vec::new();
        let mut weights = vec![1.0, 1.0];
        let clf_col = match objective {
            Objective::Effort => {
                weights.push(self.config.tracking.relax_weight);
                Some(2)
            }
            Objective::Reference(_) => None,
        };
        let mut lyapunov = None;
        if let Some(col) = clf_col {
            let spec = ClfSpec {
                function: self.tracking_clf(),
                rate: self.config.tracking.rate_per_s,
            };
            let (row, v) = clf_row(&spec, &exp, Some(col))?;
            rows.push(row);
            lyapunov = Some(v);
        }
        let mut relax_cols = Vec::with_capacity(rules.len());
        let mut barrier_min = Vec::with_capacity(rules.len());
        for ar in rules {
            let col = ar.relax_weight.map(|w| {
                weights.push(w);
                weights.len() - 1
            });
            relax_cols.push(col);
            let mut lowest = f64::INFINITY;
            for (fam, gain) in self.rule_barriers(ar.rule, instances) {
                let deg = fam.degree();
                let spec = BarrierSpec {
                    function: fam,
                    degree: deg,
                    gains: vec![gain; deg],
                };
                let ps = psi_sequence(&spec, &exp, col)
                    .map_err(|e| Error::SolverFailure(format!("rule {}: {e}", ar.rule.id)))?;
                lowest = lowest.min(ps.values[0]);
                rows.push(ps.row);
            }
            barrier_min.push(lowest);
        }
        for (fam, gain) in self.state_limit_barriers() {
            let deg = fam.degree();
            let spec = BarrierSpec {
                function: fam,
                degree: deg,
                gains: vec![gain; deg],
            };
            rows.push(psi_sequence(&spec, &exp, None)?.row);
        }

        let n = weights.len();
        let q = DMatrix::from_diagonal(&DVector::from_iterator(n, weights.iter().map(|w| 2.0 * w)));
        let mut c = DVector::zeros(n);
        if let Objective::Reference(u) = objective {
            c[0] = -2.0 * u.jerk_mps3;
            c[1] = -2.0 * u.steer_radps2;
        }
        let mut qp = QpProblem::new(q, c);
        let [(jl, jh), (sl, sh)] = self.bounds.control_box();
        qp.add_bounds(0, jl, jh);
        qp.add_bounds(1, sl, sh);
        let mut a = vec![0.0; n];
        for row in &rows {
            a.iter_mut().for_each(|v| *v = 0.0);
            let sign = match row.sense {
                Sense::Ge => 1.0,
                Sense::Le => -1.0,
            };
            for (j, cj) in row.coeffs.iter().enumerate() {
                a[j] = sign * cj;
            }
            if let Some(col) = row.relax {
                a[col] = -sign;
            }
            qp.add_row(&a, -sign * row.constant);
        }
        let out = solve_qp(&qp);
        match out.status {
            QpStatus::Infeasible => Ok(StepResult::Infeasible),
            QpStatus::NumericalFailure => Err(Error::SolverFailure(format!(
                "QP at t = {t:.3} s did not converge (residual {:.2e})",
                out.max_violation
            ))),
            QpStatus::Optimal => {
                let xv = &out.x;
                Ok(StepResult::Solved(StepSolution {
                    control: self.bounds.clamp_control(Control::new(xv[0], xv[1])),
                    clf_relax: clf_col.map(|c| xv[c]),
                    lyapunov,
                    relax: relax_cols.iter().map(|c| c.map(|c| xv[c])).collect(),
                    barrier_min,
                }))
            }
        }
    }
}
