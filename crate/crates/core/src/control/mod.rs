//! Controllers: per-step QP assembly, the offline relaxation search, the
//! receding-horizon controller and parameter tuning.

pub mod assembly;
pub mod comparison;
pub mod config;
pub mod offline;
pub mod online;
pub mod tracking;
pub mod tune;

pub use comparison::{compare_tracking, TrackingComparison, TrackingRun};
pub use assembly::{ActiveRule, Objective, StepBuilder, StepResult, StepSolution};
pub use config::{BarrierGains, ControllerConfig, CoverageConfig, OnlineConfig, TrackingGains};
pub use offline::{run_offline, run_tracking_only, Attempt, OfflineResult};
pub use online::{run_online, OnlineResult, StepLog};
pub use tune::tune_parameters;
