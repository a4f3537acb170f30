//! Self-contained run results, shared by the command line and the service.

use serde::{Deserialize, Serialize};

use crate::control::{run_offline, run_online, Attempt, ControllerConfig, OfflineResult, OnlineResult, StepLog};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_candidate, realize_candidate, Candidate, Verdict};
use crate::rules::{RuleId, Torq, ViolationReport};
use crate::scenario::{export_plot_data, sha256_hex, Scenario, Segment};
use crate::trajectory::TrajectoryRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Offline,
    Online,
    Evaluate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hashes {
    pub scenario_sha256: String,
    pub torq_sha256: String,
    pub config_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RunDetails {
    Offline {
        relaxed_rules: Vec<RuleId>,
        iteration: usize,
        attempts: Vec<Attempt>,
        relaxation: std::collections::BTreeMap<RuleId, Vec<f64>>,
        tracking_relaxation: Vec<f64>,
    },
    Online {
        history: Vec<StepLog>,
        emergency_steps: usize,
    },
    Evaluate {
        candidate: Candidate,
        verdict: Verdict,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub mode: RunMode,
    pub hashes: Hashes,
    pub scenario: Scenario,
    pub torq: Torq,
    pub config: ControllerConfig,
    /// Ego trajectory (the realized candidate when evaluating).
    pub trajectory: TrajectoryRecord,
    pub report: ViolationReport,
    pub segments: Vec<Segment>,
    pub qp_count: usize,
    pub details: RunDetails,
}

impl ResultFile {
    fn assemble(
        mode: RunMode,
        scenario: &Scenario,
        torq: &Torq,
        config: &ControllerConfig,
        trajectory: TrajectoryRecord,
        report: ViolationReport,
        qp_count: usize,
        details: RunDetails,
    ) -> Result<Self> {
        Ok(ResultFile {
            mode,
            hashes: Hashes {
                scenario_sha256: sha256_hex(scenario)?,
                torq_sha256: sha256_hex(torq)?,
                config_sha256: sha256_hex(config)?,
            },
            scenario: scenario.clone(),
            torq: torq.clone(),
            config: config.clone(),
            segments: export_plot_data(&report, trajectory.len()),
            trajectory,
            report,
            qp_count,
            details,
        })
    }

    pub fn from_offline(scenario: &Scenario, torq: &Torq, config: &ControllerConfig, r: OfflineResult) -> Result<Self> {
        Self::assemble(
            RunMode::Offline,
            scenario,
            torq,
            config,
            r.trajectory,
            r.report,
            r.qp_count,
            RunDetails::Offline {
                relaxed_rules: r.relaxed_rules,
                iteration: r.iteration,
                attempts: r.attempts,
                relaxation: r.relaxation,
                tracking_relaxation: r.tracking_relaxation,
            },
        )
    }

    pub fn from_online(scenario: &Scenario, torq: &Torq, config: &ControllerConfig, r: OnlineResult) -> Result<Self> {
        Self::assemble(
            RunMode::Online,
            scenario,
            torq,
            config,
            r.trajectory,
            r.report,
            r.qp_count,
            RunDetails::Online {
                history: r.history,
                emergency_steps: r.emergency_steps,
            },
        )
    }

    /// Emergency braking steps of an online run.
    pub fn emergency_steps(&self) -> usize {
        match &self.details {
            RunDetails::Online { emergency_steps, .. } => *emergency_steps,
            _ => 0,
        }
    }

    /// Re-runs the embedded inputs, checking the embedded hashes first.
    pub fn rerun(&self) -> Result<ResultFile> {
        let check = |name: &str, found: String, expected: &str| {
            if found == expected {
                Ok(())
            } else {
                Err(Error::validation(format!("/hashes/{name}"), "does not match the embedded input"))
            }
        };
        check("scenario_sha256", sha256_hex(&self.scenario)?, &self.hashes.scenario_sha256)?;
        check("torq_sha256", sha256_hex(&self.torq)?, &self.hashes.torq_sha256)?;
        check("config_sha256", sha256_hex(&self.config)?, &self.hashes.config_sha256)?;
        let candidate = match &self.details {
            RunDetails::Evaluate { candidate, .. } => Some(candidate),
            _ => None,
        };
        execute(self.mode, &self.scenario, &self.torq, &self.config, candidate)
    }
}

/// Runs one mode on validated inputs. The single engine entry point.
pub fn execute(
    mode: RunMode,
    scenario: &Scenario,
    torq: &Torq,
    config: &ControllerConfig,
    candidate: Option<&Candidate>,
) -> Result<ResultFile> {
    match mode {
        RunMode::Offline => ResultFile::from_offline(scenario, torq, config, run_offline(scenario, torq, config)?),
        RunMode::Online => ResultFile::from_online(scenario, torq, config, run_online(scenario, torq, config)?),
        RunMode::Evaluate => {
            let candidate = candidate.ok_or_else(|| Error::validation("/candidate", "required in evaluate mode"))?;
            let trajectory = realize_candidate(candidate, scenario, config)?;
            let verdict = evaluate_candidate(&trajectory, scenario, torq, config)?;
            let qp_count = trajectory.len().saturating_sub(1);
            ResultFile::assemble(
                RunMode::Evaluate,
                scenario,
                torq,
                config,
                trajectory,
                verdict.candidate_report.clone(),
                qp_count,
                RunDetails::Evaluate {
                    candidate: candidate.clone(),
                    verdict,
                },
            )
        }
    }
}
