use serde::{Deserialize, Serialize};

use crate::rules::ViolationReport;

/// Maximal run of samples sharing the same set of violated rules.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub first_sample: usize,
    /// Inclusive.
    pub last_sample: usize,
    pub rules: Vec<String>,
}

/// Splits `sample_count` samples into segments by violated-rule set.
pub fn export_plot_data(report: &ViolationReport, sample_count: usize) -> Vec<Segment> {
    let flags = |k: usize| -> Vec<String> {
        report
            .rules
            .iter()
            .filter(|r| r.violated_at(k))
            .map(|r| r.rule_id.clone())
            .collect()
    };
    let mut out: Vec<Segment> = Vec::new();
    for k in 0..sample_count {
        let f = flags(k);
        match out.last_mut() {
            Some(seg) if seg.rules == f => seg.last_sample = k,
            _ => out.push(Segment {
                first_sample: k,
                last_sample: k,
                rules: f,
            }),
        }
    }
    out
}
