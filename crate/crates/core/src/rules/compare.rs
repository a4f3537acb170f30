use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{Torq, ViolationReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    FirstBetter,
    SecondBetter,
    Equivalent,
}

/// Compares two scored trajectories under the priority structure.
///
/// Classes are visited from the highest priority down. At each class the
/// largest total score among its rules is compared; the first class where
/// they differ decides, the smaller score being better.
pub fn compare_trajectories(torq: &Torq, a: &ViolationReport, b: &ViolationReport) -> Result<Preference> {
    let ids = |r: &ViolationReport| r.rules.iter().map(|s| s.rule_id.clone()).collect::<BTreeSet<_>>();
    let (ia, ib) = (ids(a), ids(b));
    if ia != ib {
        return Err(Error::invalid("reports cover different rule sets"));
    }
    for class in torq.classes.iter().rev() {
        let worst = |r: &ViolationReport| -> Result<f64> {
            let mut m: f64 = 0.0;
            for id in class {
                let s = r
                    .total(id)
                    .ok_or_else(|| Error::invalid(format!("report has no score for rule {id}")))?;
                m = m.max(s);
            }
            Ok(m)
        };
        let (ma, mb) = (worst(a)?, worst(b)?);
        if ma < mb {
            return Ok(Preference::FirstBetter);
        }
        if mb < ma {
            return Ok(Preference::SecondBetter);
        }
    }
    Ok(Preference::Equivalent)
}
