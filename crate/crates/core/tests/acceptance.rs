//! Prints one PASS/FAIL line per acceptance criterion; exits nonzero when
//! any fails.

mod common;

use std::time::{Duration, Instant};

use common::Check;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn coverage() -> Check {
    let a = common::disk_containment(200, 10_000, 1)?;
    let b = common::disk_separation(200, 2)?;
    Ok(format!("{a}; {b}"))
}

fn comparator() -> Check {
    let a = common::three_trajectory_order()?;
    let b = common::comparator_laws(10_000, 3)?;
    Ok(format!("{a}; {b}"))
}

fn main() {
    let criteria = [
        Criterion {
            name: "disk coverage soundness",
            budget: Some(Duration::from_secs(30)),
            run: coverage,
        },
        Criterion {
            name: "barrier forward invariance",
            budget: Some(Duration::from_secs(5)),
            run: common::wall_barrier_holds,
        },
        Criterion {
            name: "Lyapunov exponential decay",
            budget: None,
            run: common::lyapunov_decay_holds,
        },
        Criterion {
            name: "comparator fidelity",
            budget: None,
            run: comparator,
        },
        Criterion {
            name: "sorted power set",
            budget: None,
            run: common::three_class_power_set,
        },
        Criterion {
            name: "parked-car offline relaxation",
            budget: Some(Duration::from_secs(60)),
            run: common::parked_car_offline,
        },
        Criterion {
            name: "online conservativeness",
            budget: None,
            run: common::online_is_more_conservative,
        },
        Criterion {
            name: "pass/fail verdicts",
            budget: None,
            run: common::pass_fail_behaviour,
        },
        Criterion {
            name: "tracking comparison",
            budget: None,
            run: common::tracking_comparison,
        },
        Criterion {
            name: "numerical hygiene",
            budget: None,
            run: common::numerical_hygiene,
        },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut outcome = (c.run)();
        let took = start.elapsed();
        if let (Ok(_), Some(budget)) = (&outcome, c.budget) {
            if took > budget {
                outcome = Err(format!("took {:.1} s, budget {} s", took.as_secs_f64(), budget.as_secs()));
            }
        }
        let (tag, detail) = match &outcome {
            Ok(s) => ("PASS", s.as_str()),
            Err(s) => ("FAIL", s.as_str()),
        };
        if outcome.is_err() {
            failed += 1;
        }
        println!("{tag} {:>2} {} ({:.1} s): {detail}", i + 1, c.name, took.as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
