use eclair_core::fm::{FmRequest, LiveBackend, ScriptedProvider};
use eclair_core::model::{score_binary, validate_trace, LabeledPrediction, Trace};
use eclair_core::oracle::{constraint_sources, fixture_evalset, fixture_sources, Oracle, OracleMode};
use eclair_core::sim::{fixtures, oracle_trace_complete};
use eclair_core::validate::*;
use std::sync::atomic::{AtomicUsize, Ordering};

fn seeds() -> Vec<u64> {
    (0..10).collect()
}

fn signatures(t: &Trace) -> Vec<Signature> {
    trace_signatures(t)
}

#[test]
fn completion_negatives_are_incomplete_prefixes() {
    let (sources, _) = fixture_sources(&seeds());
    assert_eq!(sources.len(), 100);
    let items = gen_negatives(&sources, Subject::Completion, 7, DEFAULT_RATIO).unwrap();
    let mut negatives = 0;
    for it in &items {
        assert!(validate_trace(&it.trace).is_empty(), "{}", it.id);
        let spec = fixtures::site_of(&it.trace.workflow_id).unwrap();
        let done = oracle_trace_complete(&it.trace, &spec).unwrap();
        assert_eq!(done, it.label, "{}", it.id);
        if !it.label {
            negatives += 1;
            let src = sources.iter().find(|s| it.id.starts_with(&format!("completion-{:03}", sources.iter().position(|x| std::ptr::eq(x, *s)).unwrap()))).unwrap();
            assert!(it.trace.state_count() < src.trace.state_count());
            assert!(it.trace.state_count() >= 1);
        }
    }
    assert_eq!(negatives, 100);
}

#[test]
fn trajectory_negatives_differ_from_the_source() {
    let (sources, _) = fixture_sources(&seeds());
    let items = gen_negatives(&sources, Subject::Trajectory, 11, DEFAULT_RATIO).unwrap();
    let mut shuffles = 0;
    for (i, src) in sources.iter().enumerate() {
        let neg = items.iter().find(|it| it.id == format!("trajectory-{i:03}-n0")).unwrap();
        assert!(validate_trace(&neg.trace).is_empty(), "{}", neg.id);
        assert_ne!(signatures(&neg.trace), signatures(&src.trace), "{}", neg.id);
        if neg.provenance.contains("shuffled") {
            shuffles += 1;
            let mut a = signatures(&neg.trace);
            let mut b = signatures(&src.trace);
            a.sort_by_key(|s| format!("{s:?}"));
            b.sort_by_key(|s| format!("{s:?}"));
            assert_eq!(a, b, "a shuffle keeps the same actions");
        }
    }
    assert!(shuffles > 0);
}

#[test]
fn shuffle_always_changes_order_with_two_distinct_actions() {
    let (sources, _) = fixture_sources(&seeds());
    for (i, src) in sources.iter().enumerate() {
        for seed in 0..20 {
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed * 1000 + i as u64);
            let t = shuffle_negative(&src.trace, &mut rng).expect("fixture traces have distinct actions");
            assert_ne!(signatures(&t), signatures(&src.trace));
            assert!(validate_trace(&t).is_empty());
        }
    }
}

#[test]
fn actuation_negatives_repeat_the_before_state() {
    let (sources, _) = fixture_sources(&seeds()[..2]);
    let items = gen_negatives(&sources, Subject::Actuation, 3, ACTUATION_RATIO).unwrap();
    let pos = items.iter().filter(|i| i.label).count();
    let neg = items.iter().filter(|i| !i.label).count();
    assert_eq!(neg, 3 * pos);
    for it in &items {
        assert!(validate_trace(&it.trace).is_empty(), "{}", it.id);
        let (s, _, s2) = it.trace.steps()[0];
        assert_eq!(s.screenshot_ref == s2.screenshot_ref, !it.label, "{}", it.id);
    }
}

#[test]
fn regeneration_is_byte_identical() {
    let a = fixture_evalset(42, &seeds()).unwrap().0;
    let b = fixture_evalset(42, &seeds()).unwrap().0;
    let c = fixture_evalset(43, &seeds()).unwrap().0;
    let json = |v: &[EvalItem]| v.iter().map(|i| serde_json::to_string(&(&i.id, &i.trace, i.label, &i.provenance)).unwrap()).collect::<Vec<_>>();
    assert_eq!(json(&a), json(&b));
    assert_ne!(json(&a), json(&c));
}

#[test]
fn constraint_items_are_labeled_by_the_constraint() {
    let (sources, _) = fixture_sources(&[0]);
    let items = gen_constraint_set(&constraint_sources(&sources), 5, 1).unwrap();
    assert!(items.iter().any(|i| i.label) && items.iter().any(|i| !i.label));
    for it in &items {
        let c: Constraint = it.constraint.as_deref().unwrap().parse().unwrap();
        let state = it.trace.states().next().unwrap();
        assert_eq!(c.evaluate(state).verdict, it.label, "{}: {}", it.id, c);
    }
}

#[test]
fn ratio_zero_is_rejected() {
    let (sources, _) = fixture_sources(&[0]);
    assert_eq!(gen_negatives(&sources, Subject::Completion, 0, 0).unwrap_err(), NegativeError::Ratio);
    assert_eq!(gen_negatives(&sources, Subject::Constraint, 0, 1).unwrap_err(), NegativeError::ConstraintTask);
}

fn all_perfect(report: &ValidateReport) {
    for row in &report.rows {
        let r = row.report.as_ref().unwrap_or_else(|| panic!("{} has no items", row.row));
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0), "{}", row.row);
    }
}

#[test]
fn deterministic_judge_scores_perfectly() {
    let (items, screens) = fixture_evalset(1, &[0, 1]).unwrap();
    all_perfect(&eval_judges(&items, &screens, Judge::Deterministic).unwrap());
}

#[test]
fn oracle_model_judge_scores_perfectly() {
    let (items, screens) = fixture_evalset(1, &[0]).unwrap();
    let backend = LiveBackend::new(Oracle::fixtures(OracleMode::Faithful).provider());
    let report = eval_judges(&items, &screens, Judge::Fm(&backend)).unwrap();
    all_perfect(&report);
    let titles: Vec<&str> = report.rows.iter().map(|r| r.row.as_str()).collect();
    assert_eq!(titles, ["Actuation", "Integrity Constraint", "Workflow Completion", "Workflow Trajectory"]);
}

#[test]
fn one_planted_false_negative() {
    let (sources, screens) = fixture_sources(&[0]);
    let all = gen_negatives(&sources, Subject::Completion, 9, 1).unwrap();
    let pos: Vec<EvalItem> = all.iter().filter(|i| i.label).take(10).cloned().collect();
    let neg: Vec<EvalItem> = all.iter().filter(|i| !i.label).take(10).cloned().collect();
    let items: Vec<EvalItem> = pos.into_iter().chain(neg).collect();
    let oracle = Oracle::fixtures(OracleMode::Faithful);
    let calls = AtomicUsize::new(0);
    let backend = LiveBackend::new(ScriptedProvider::new("planted", move |r: &FmRequest| {
        if calls.fetch_add(1, Ordering::SeqCst) == 0 {
            return Ok("NO\nplanted".into());
        }
        oracle.answer(r)
    }));
    let report = eval_judges(&items, &screens, Judge::Fm(&backend)).unwrap();
    let row = report.rows.iter().find(|r| r.task == Subject::Completion).unwrap().report.clone().unwrap();
    assert_eq!((row.tp, row.fp, row.fn_, row.tn), (9, 0, 1, 10));
    assert!((row.recall - 0.9).abs() < 1e-12);
    assert_eq!(row.precision, 1.0);
    // Same counts straight from the labels.
    let preds: Vec<_> = report.items.iter().map(|i| LabeledPrediction::new(i.predicted, i.label)).collect();
    assert_eq!(score_binary(&preds).unwrap(), row);
}

#[test]
fn evalset_round_trips_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let (items, _) = fixture_evalset(2, &[0]).unwrap();
    write_evalset(tmp.path(), &items).unwrap();
    let (dir, back) = read_evalset(tmp.path()).unwrap();
    assert_eq!(dir, tmp.path());
    assert_eq!(back.len(), items.len());
    for (a, b) in items.iter().zip(&back) {
        assert_eq!((&a.id, &a.trace, a.label, &a.constraint), (&b.id, &b.trace, b.label, &b.constraint));
    }
}

#[test]
fn unreadable_verdict_counts_as_no() {
    let (sources, screens) = fixture_sources(&[0]);
    let src = &sources[0];
    let backend = LiveBackend::new(ScriptedProvider::new("mumble", |_: &FmRequest| Ok("Hard to say.".into())));
    let j = check_completion(&src.trace, &src.description, &screens, Judge::Fm(&backend), None).unwrap();
    assert!(!j.verdict);
    assert!(j.rationale.contains("no verdict") || j.rationale.contains("verdict"), "{}", j.rationale);
}
