mod common;

use common::*;
use proptest::prelude::*;
use sinkflow_core::detectors::{restriction_check, Restriction};
use sinkflow_core::feasibility::{encode_path, smt, with_skeleton};
use sinkflow_core::oracle::{oracle_feasible, DEFAULT_DOMAIN};
use sinkflow_core::paths::Step;
use sinkflow_core::pipeline::{evaluate, BugReport, GroundTruth, Metrics, Site};

fn prover_says(info: &sinkflow_core::paths::PathInfo) -> bool {
    let out = smt::run_script(&with_skeleton(&encode_path(info).expect("generated paths encode")));
    match out.lines().next().map(str::trim) {
        Some("sat") => true,
        Some("unsat") => false,
        other => panic!("prover answered {other:?}\n{out}"),
    }
}

fn reports_strategy() -> impl Strategy<Value = Vec<BugReport>> {
    prop::collection::vec((0..3usize, 1..4usize, 1..6usize), 0..8).prop_map(|v| {
        v.into_iter()
            .map(|(f, s, t)| {
                let file = ["A", "B", "C"][f];
                report("dbz", (file, s), (file, t + 3))
            })
            .collect()
    })
}

fn truth_strategy() -> impl Strategy<Value = GroundTruth> {
    prop::collection::vec((0..3usize, 1..6usize, prop::option::of(1..4usize)), 0..6).prop_map(|v| {
        let mut bugs: Vec<_> = v
            .into_iter()
            .map(|(f, t, s)| {
                let file = ["A", "B", "C"][f];
                label("dbz", &format!("{file}:{}", t + 3), s.map(|s| format!("{file}:{s}")).as_deref())
            })
            .collect();
        bugs.dedup();
        GroundTruth { bugs, ..GroundTruth::default() }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn encoder_and_prover_agree_with_enumeration(seed in any::<u64>()) {
        let info = random_path(&mut rng(seed));
        let truth = oracle_feasible(&info, DEFAULT_DOMAIN).unwrap();
        prop_assert_eq!(prover_says(&info), truth, "{}", info.render());
    }

    #[test]
    fn extra_guards_never_revive_a_refuted_path(seed in any::<u64>(), k in -4i64..=4) {
        let mut info = random_path(&mut rng(seed));
        let before = prover_says(&info);
        let sink = info.steps.len() - 1;
        let (frame, var) = match &info.steps[sink] {
            Step::Sink { frame, var, .. } => (*frame, var.clone()),
            _ => unreachable!(),
        };
        info.steps.insert(sink, Step::Guard { cond: format!("{var} != {k}"), taken: true, line: 90, frame });
        prop_assert!(before || !prover_says(&info));
    }

    #[test]
    fn value_equality_implies_dependence_and_ignores_guards(seed in any::<u64>()) {
        let mut info = random_path(&mut rng(seed));
        let eq = restriction_check(&info, Restriction::ValueEquality);
        prop_assert!(restriction_check(&info, Restriction::Dependence));
        let sink = info.steps.len() - 1;
        let frame = match &info.steps[sink] { Step::Sink { frame, .. } => *frame, _ => unreachable!() };
        info.steps.insert(sink, Step::Guard { cond: "x > 100".into(), taken: false, line: 90, frame });
        prop_assert_eq!(restriction_check(&info, Restriction::ValueEquality), eq);
    }

    #[test]
    fn overwriting_the_sink_breaks_value_equality(seed in any::<u64>()) {
        let mut info = random_path(&mut rng(seed));
        let sink = info.steps.len() - 1;
        let (frame, var) = match &info.steps[sink] {
            Step::Sink { frame, var, .. } => (*frame, var.clone()),
            _ => unreachable!(),
        };
        info.steps.insert(sink, Step::Assign { lhs: var.clone(), rhs: format!("{var} + 1"), line: 90, frame });
        prop_assert!(!restriction_check(&info, Restriction::ValueEquality));
    }

    #[test]
    fn evaluation_ignores_report_order(reports in reports_strategy(), truth in truth_strategy(), rot in 0usize..8) {
        let m = evaluate(&reports, &truth);
        let mut shuffled = reports.clone();
        if !shuffled.is_empty() {
            let n = rot % shuffled.len();
            shuffled.rotate_left(n);
            shuffled.reverse();
        }
        prop_assert_eq!(evaluate(&shuffled, &truth), m.clone());
        prop_assert_eq!(m.tp + m.fn_, truth.bugs.len());
        prop_assert!(m.fp + m.duplicates <= reports.len());
    }

    #[test]
    fn metrics_stay_consistent(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
        let m = Metrics::from_counts(tp, fp, fn_);
        for v in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        prop_assert!(m.f1 + 1e-12 >= m.precision.min(m.recall));
        if tp + fp + fn_ > 0 {
            let direct = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
            prop_assert!((m.f1 - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn sites_round_trip(file in "[A-Za-z][A-Za-z0-9_/]{0,12}\\.java", line in 1usize..10_000) {
        let s = Site { file, line };
        prop_assert_eq!(Site::parse(&s.to_string()).unwrap(), s);
    }
}
