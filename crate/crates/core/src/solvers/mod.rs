pub mod nlp;
pub mod qp;

pub use qp::{solve_qp, solve_qp_with, QpOutcome, QpProblem, QpSettings, QpStatus};
