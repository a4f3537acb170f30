use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{RuleDef, RuleId};
use crate::world::InstanceKind;

/// Rules grouped into equivalence classes under a total order.
///
/// `classes[0]` has priority 1 (lowest), `classes[k]` priority `k + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Torq {
    pub classes: Vec<Vec<RuleId>>,
    pub rules: Vec<RuleDef>,
}

impl Torq {
    pub fn new(classes: Vec<Vec<RuleId>>, rules: Vec<RuleDef>) -> Result<Self> {
        let t = Torq { classes, rules };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let mut defined = HashSet::new();
        for (i, r) in self.rules.iter().enumerate() {
            if !defined.insert(r.id.as_str()) {
                return Err(Error::validation(format!("/rules/{i}/id"), format!("duplicate rule id {}", r.id)));
            }
            r.validate()
                .map_err(|e| Error::validation(format!("/rules/{i}"), e.to_string()))?;
        }
        let mut seen = HashSet::new();
        for (ci, class) in self.classes.iter().enumerate() {
            if class.is_empty() {
                return Err(Error::validation(format!("/classes/{ci}"), "equivalence class is empty"));
            }
            for (ri, id) in class.iter().enumerate() {
                if !defined.contains(id.as_str()) {
                    return Err(Error::validation(format!("/classes/{ci}/{ri}"), format!("unknown rule id {id}")));
                }
                if !seen.insert(id.as_str()) {
                    return Err(Error::validation(format!("/classes/{ci}/{ri}"), format!("rule {id} is in two classes")));
                }
            }
        }
        if let Some(r) = self.rules.iter().find(|r| !seen.contains(r.id.as_str())) {
            return Err(Error::validation("/classes", format!("rule {} is not in any class", r.id)));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn rule(&self, id: &str) -> Option<&RuleDef> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Zero-based class index of a rule.
    pub fn class_of(&self, id: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.iter().any(|r| r == id))
    }

    /// Priority (1 = lowest) of a rule.
    pub fn priority(&self, id: &str) -> Option<usize> {
        self.class_of(id).map(|c| c + 1)
    }

    /// Rules in class order, lowest priority first.
    pub fn ordered_rules(&self) -> Vec<&RuleDef> {
        self.classes
            .iter()
            .flatten()
            .filter_map(|id| self.rule(id))
            .collect()
    }

    /// Rules whose class is in `set`.
    pub fn rules_in(&self, set: ClassSet) -> Vec<RuleId> {
        set.members()
            .into_iter()
            .filter(|c| *c < self.classes.len())
            .flat_map(|c| self.classes[c].iter().cloned())
            .collect()
    }
}

/// A set of equivalence classes, bit `i` meaning class index `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassSet(pub u32);

impl ClassSet {
    pub const EMPTY: ClassSet = ClassSet(0);

    pub fn from_indices(idx: &[usize]) -> Self {
        ClassSet(idx.iter().fold(0, |acc, i| acc | (1 << i)))
    }

    /// All classes with index `< n`.
    pub fn below(n: usize) -> Self {
        if n == 0 {
            ClassSet(0)
        } else {
            ClassSet(((1u64 << n) - 1) as u32)
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1 << i;
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn members(&self) -> Vec<usize> {
        (0..32).filter(|i| self.contains(*i)).collect()
    }

    /// Largest class index, if any.
    pub fn highest(&self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(31 - self.0.leading_zeros() as usize)
        }
    }

    /// One-based priorities, ascending.
    pub fn priorities(&self) -> Vec<usize> {
        self.members().into_iter().map(|i| i + 1).collect()
    }
}

pub const MAX_CLASSES_FOR_POWER_SET: usize = 20;

/// All subsets of `n` classes, ordered by highest contained priority, then
/// by size, then lexicographically on ascending priorities.
pub fn sorted_power_set(n: usize) -> Result<Vec<ClassSet>> {
    if n > MAX_CLASSES_FOR_POWER_SET {
        return Err(Error::invalid(format!(
            "{n} equivalence classes would need 2^{n} relaxation sets; at most {MAX_CLASSES_FOR_POWER_SET} are supported"
        )));
    }
    let mut sets: Vec<ClassSet> = (0..(1u32 << n)).map(ClassSet).collect();
    sets.sort_by_key(|s| {
        let top = s.highest().map(|h| h + 1).unwrap_or(0);
        (top, s.len(), s.members())
    });
    Ok(sets)
}

/// Online rule set: instance-dependent rules without a detected target are
/// dropped, then empty classes are removed. Also returns, per remaining
/// class, its index in the original structure.
pub fn build_otorq(torq: &Torq, detected: &BTreeSet<InstanceKind>) -> (Torq, Vec<usize>) {
    let keep = |id: &RuleId| match torq.rule(id).and_then(|r| r.target()) {
        Some(kind) => detected.contains(&kind),
        None => true,
    };
    let mut classes = Vec::new();
    let mut origin = Vec::new();
    for (ci, class) in torq.classes.iter().enumerate() {
        let kept: Vec<RuleId> = class.iter().filter(|id| keep(id)).cloned().collect();
        if !kept.is_empty() {
            classes.push(kept);
            origin.push(ci);
        }
    }
    let rules = torq.rules.iter().filter(|r| keep(&r.id)).cloned().collect();
    (Torq { classes, rules }, origin)
}
