//! Rules, the priority structure over them, and trajectory comparison.

pub mod compare;
pub mod metrics;
pub mod torq;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ClearanceLaw;
use crate::world::InstanceKind;

pub use compare::{compare_trajectories, Preference};
pub use metrics::{score_trajectory, RuleScore, ScoringContext, ViolationReport};
pub use torq::{build_otorq, sorted_power_set, ClassSet, Torq, MAX_CLASSES_FOR_POWER_SET};

pub type RuleId = String;

/// What a rule constrains. Each kind has a fixed statement, violation metric
/// and barrier family; thresholds are parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleKind {
    /// Footprint distance to every instance of `target` at least `law(v)`.
    Clearance { target: InstanceKind, law: ClearanceLaw },
    /// Left, right and front footprint distances to every instance of `target`.
    DirectionalClearance {
        target: InstanceKind,
        left: ClearanceLaw,
        right: ClearanceLaw,
        front: ClearanceLaw,
    },
    /// Footprint inside the drivable area.
    DrivableArea,
    /// Footprint inside the ego lane.
    LaneKeeping,
    SpeedMax { limit_mps: f64 },
    SpeedMin { limit_mps: f64 },
    /// `|a| ≤ accel_limit` and `|a_lat| ≤ lat_accel_limit`.
    Comfort {
        accel_limit_mps2: f64,
        lat_accel_limit_mps2: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Clearance,
    NonClearance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleDef {
    pub id: RuleId,
    #[serde(default)]
    pub description: String,
    #[serde(flatten)]
    pub kind: RuleKind,
}

impl RuleDef {
    pub fn new(id: &str, description: &str, kind: RuleKind) -> Self {
        RuleDef {
            id: id.to_string(),
            description: description.to_string(),
            kind,
        }
    }

    pub fn category(&self) -> Category {
        match self.kind {
            RuleKind::SpeedMax { .. } | RuleKind::SpeedMin { .. } | RuleKind::Comfort { .. } => Category::NonClearance,
            _ => Category::Clearance,
        }
    }

    /// The instance type this rule needs to be active, if any.
    pub fn target(&self) -> Option<InstanceKind> {
        match self.kind {
            RuleKind::Clearance { target, .. } | RuleKind::DirectionalClearance { target, .. } => Some(target),
            _ => None,
        }
    }

    pub fn instance_dependent(&self) -> bool {
        self.target().is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |v: f64| v.is_finite() && v >= 0.0;
        let law_ok = |l: &ClearanceLaw| nonneg(l.base_m) && nonneg(l.slope_s);
        let ok = match &self.kind {
            RuleKind::Clearance { law, .. } => law_ok(law) && law.base_m + law.slope_s > 0.0,
            RuleKind::DirectionalClearance { left, right, front, .. } => law_ok(left) && law_ok(right) && law_ok(front),
            RuleKind::DrivableArea | RuleKind::LaneKeeping => true,
            RuleKind::SpeedMax { limit_mps } => *limit_mps > 0.0,
            RuleKind::SpeedMin { limit_mps } => *limit_mps > 0.0,
            RuleKind::Comfort {
                accel_limit_mps2,
                lat_accel_limit_mps2,
            } => *accel_limit_mps2 > 0.0 && *lat_accel_limit_mps2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("rule {} has invalid parameters", self.id)))
        }
    }
}

/// The eight rules of the driving case study with the default thresholds.
pub fn standard_rules() -> Vec<RuleDef> {
    use InstanceKind::*;
    vec![
        RuleDef::new(
            "r1",
            "Maintain clearance with pedestrians",
            RuleKind::Clearance {
                target: Pedestrian,
                law: ClearanceLaw::new(1.0, 0.067),
            },
        ),
        RuleDef::new("r2", "Stay in the drivable area", RuleKind::DrivableArea),
        RuleDef::new("r3", "Stay in lane", RuleKind::LaneKeeping),
        RuleDef::new("r4", "Satisfy the maximum speed limit", RuleKind::SpeedMax { limit_mps: 7.0 }),
        RuleDef::new("r5", "Satisfy the minimum speed limit", RuleKind::SpeedMin { limit_mps: 3.0 }),
        RuleDef::new(
            "r6",
            "Drive smoothly",
            RuleKind::Comfort {
                accel_limit_mps2: 2.5,
                lat_accel_limit_mps2: 1.75,
            },
        ),
        RuleDef::new(
            "r7",
            "Maintain clearance with parked vehicles",
            RuleKind::Clearance {
                target: Parked,
                law: ClearanceLaw::new(0.3, 0.13),
            },
        ),
        RuleDef::new(
            "r8",
            "Maintain clearance with active vehicles",
            RuleKind::DirectionalClearance {
                target: Active,
                left: ClearanceLaw::new(0.5, 0.036),
                right: ClearanceLaw::new(0.5, 0.036),
                front: ClearanceLaw::new(1.0, 2.0),
            },
        ),
    ]
}
