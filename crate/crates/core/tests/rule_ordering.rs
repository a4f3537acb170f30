use std::collections::BTreeSet;

use proptest::prelude::*;
use torq_core::rules::{
    build_otorq, compare_trajectories, sorted_power_set, standard_rules, ClassSet, Preference, Torq, ViolationReport,
};
use torq_core::world::InstanceKind;

/// Lowest class first: {r6} < {r3, r5} < {r7}.
fn example_torq() -> Torq {
    let rules = standard_rules()
        .into_iter()
        .filter(|r| ["r3", "r5", "r6", "r7"].contains(&r.id.as_str()))
        .collect();
    Torq::new(
        vec![vec!["r6".into()], vec!["r3".into(), "r5".into()], vec!["r7".into()]],
        rules,
    )
    .unwrap()
}

fn report(r7: f64, r3: f64, r5: f64, r6: f64) -> ViolationReport {
    ViolationReport::from_totals(&[("r7", r7), ("r3", r3), ("r5", r5), ("r6", r6)])
}

#[test]
fn three_trajectory_example_orders_b_over_c_over_a() {
    let torq = example_torq();
    // a violates the parked-vehicle clearance; b and c only lane keeping,
    // speed and comfort, with worst class-two scores 0.1 and 0.4
    let a = report(0.2, 0.0, 0.0, 0.0);
    let b = report(0.0, 0.1, 0.05, 0.3);
    let c = report(0.0, 0.4, 0.2, 0.0);
    assert_eq!(compare_trajectories(&torq, &b, &a).unwrap(), Preference::FirstBetter);
    assert_eq!(compare_trajectories(&torq, &c, &a).unwrap(), Preference::FirstBetter);
    assert_eq!(compare_trajectories(&torq, &b, &c).unwrap(), Preference::FirstBetter);
    assert_eq!(compare_trajectories(&torq, &a, &b).unwrap(), Preference::SecondBetter);
}

#[test]
fn sorted_power_set_of_three_classes() {
    let got: Vec<Vec<usize>> = sorted_power_set(3).unwrap().iter().map(|s| s.priorities()).collect();
    let want: Vec<Vec<usize>> = vec![
        vec![],
        vec![1],
        vec![2],
        vec![1, 2],
        vec![3],
        vec![1, 3],
        vec![2, 3],
        vec![1, 2, 3],
    ];
    assert_eq!(got, want);
}

#[test]
fn reports_over_different_rules_are_rejected() {
    let torq = example_torq();
    let a = report(0.0, 0.0, 0.0, 0.0);
    let b = ViolationReport::from_totals(&[("r7", 0.0)]);
    assert!(compare_trajectories(&torq, &a, &b).is_err());
}

fn score() -> impl Strategy<Value = f64> {
    // a small grid makes ties common
    prop_oneof![Just(0.0), Just(0.1), Just(0.5), 0.0..1.0f64]
}

fn reports() -> impl Strategy<Value = ViolationReport> {
    (score(), score(), score(), score()).prop_map(|(a, b, c, d)| report(a, b, c, d))
}

fn flip(p: Preference) -> Preference {
    match p {
        Preference::FirstBetter => Preference::SecondBetter,
        Preference::SecondBetter => Preference::FirstBetter,
        Preference::Equivalent => Preference::Equivalent,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn comparator_is_a_strict_weak_order(a in reports(), b in reports(), c in reports()) {
        let torq = example_torq();
        let ab = compare_trajectories(&torq, &a, &b).unwrap();
        let ba = compare_trajectories(&torq, &b, &a).unwrap();
        prop_assert_eq!(ab, flip(ba));
        prop_assert_eq!(compare_trajectories(&torq, &a, &a).unwrap(), Preference::Equivalent);
        let bc = compare_trajectories(&torq, &b, &c).unwrap();
        let ac = compare_trajectories(&torq, &a, &c).unwrap();
        if ab == Preference::FirstBetter && bc == Preference::FirstBetter {
            prop_assert_eq!(ac, Preference::FirstBetter);
        }
        if ab == Preference::Equivalent && bc == Preference::Equivalent {
            prop_assert_eq!(ac, Preference::Equivalent);
        }
        if ab == Preference::FirstBetter && bc == Preference::Equivalent {
            prop_assert_eq!(ac, Preference::FirstBetter);
        }
    }
}

proptest! {
    #[test]
    fn power_set_is_complete_and_sorted(n in 0usize..=8) {
        let sets = sorted_power_set(n).unwrap();
        prop_assert_eq!(sets.len(), 1 << n);
        let distinct: BTreeSet<_> = sets.iter().copied().collect();
        prop_assert_eq!(distinct.len(), sets.len());
        prop_assert_eq!(sets[0], ClassSet::EMPTY);
        let tops: Vec<usize> = sets.iter().map(|s| s.highest().map_or(0, |h| h + 1)).collect();
        prop_assert!(tops.windows(2).all(|w| w[0] <= w[1]));
        // every set relaxing up to class k comes before any set touching k+1
        for k in 0..n {
            let first_above = tops.iter().position(|t| *t > k + 1).unwrap_or(sets.len());
            prop_assert_eq!(first_above, 1 << (k + 1));
        }
    }

    #[test]
    fn relaxing_from_the_bottom_is_downward_closed(n in 0usize..20) {
        let s = ClassSet::below(n);
        prop_assert_eq!(s.members(), (0..n).collect::<Vec<_>>());
        for i in s.members() {
            for j in 0..i {
                prop_assert!(s.contains(j));
            }
        }
    }

    #[test]
    fn online_structure_keeps_order_and_drops_undetected(mask in 0u8..16) {
        let kinds = [InstanceKind::Pedestrian, InstanceKind::Parked, InstanceKind::Active, InstanceKind::Parked];
        let detected: BTreeSet<InstanceKind> = (0..4).filter(|i| mask & (1 << i) != 0).map(|i| kinds[i]).collect();
        let torq = Torq::new(
            vec![vec!["r5".into()], vec!["r3".into(), "r6".into()], vec!["r4".into()],
                 vec!["r7".into(), "r8".into()], vec!["r2".into()], vec!["r1".into()]],
            standard_rules(),
        ).unwrap();
        let (online, origin) = build_otorq(&torq, &detected);
        online.validate().unwrap();
        prop_assert!(origin.windows(2).all(|w| w[0] < w[1]));
        for (ci, class) in online.classes.iter().enumerate() {
            for id in class {
                prop_assert_eq!(torq.class_of(id), Some(origin[ci]));
                if let Some(kind) = torq.rule(id).unwrap().target() {
                    prop_assert!(detected.contains(&kind));
                }
            }
        }
        // rules without a target always survive
        for r in &torq.rules {
            if r.target().is_none() {
                prop_assert!(online.rule(&r.id).is_some());
            }
        }
    }
}
