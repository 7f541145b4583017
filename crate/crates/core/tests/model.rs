use eclair_core::model::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Gen {
    State { ts: u64, focus_twice: bool },
    Action { ts: u64, kind: u8, malformed: bool },
}

fn gen_item() -> impl Strategy<Value = Gen> {
    prop_oneof![
        3 => (0u64..6, prop::bool::weighted(0.05)).prop_map(|(t, f)| Gen::State { ts: t * 100, focus_twice: f }),
        3 => (0u64..6, 0u8..6, prop::bool::weighted(0.05)).prop_map(|(t, k, m)| Gen::Action { ts: t * 100, kind: k, malformed: m }),
    ]
}

fn element(id: &str, focused: bool) -> Element {
    Element {
        element_id: id.into(),
        role: ElementRole::Textfield,
        label: id.into(),
        bbox: BoundingBox::new(10.0, 10.0, 100.0, 30.0).unwrap(),
        visible: true,
        enabled: true,
        focused,
        value: Some("v".into()),
    }
}

fn build(items: &[Gen]) -> Trace {
    let mut out = Vec::new();
    for (i, g) in items.iter().enumerate() {
        out.push(match g {
            Gen::State { ts, focus_twice } => TraceItem::State(State {
                index: i / 2,
                ts_ms: *ts,
                screenshot_ref: format!("screenshots/{i}.png"),
                viewport: Viewport::default(),
                elements: vec![element("a", true), element("b", *focus_twice)],
                url_or_screen_id: "page".into(),
            }),
            Gen::Action { ts, kind, malformed } => {
                let a = match (kind, malformed) {
                    (0, false) => Action::click_element("a"),
                    (0, true) => Action { target: None, ..Action::click_element("a") },
                    (1, false) => Action::click_at(Point::new(20.0, 20.0)),
                    (1, true) => Action::click_at(Point::new(f64::NAN, 1.0)),
                    (2, false) => Action::type_text("hello \"x\"\n"),
                    (2, true) => Action { text: None, ..Action::type_text("") },
                    (3, false) => Action::keypress("Enter"),
                    (3, true) => Action { text: None, ..Action::keypress("") },
                    (4, m) => Action { direction_or_url: (!m).then(|| "settings".into()), ..Action::navigate("") },
                    (_, false) => Action::stop(),
                    (_, true) => Action { target: Some("a".into()), ..Action::stop() },
                };
                TraceItem::Action(a.at(*ts))
            }
        });
    }
    Trace { workflow_id: "w".into(), items: out }
}

/// Independent statement of well-formedness.
fn expected_valid(items: &[Gen]) -> bool {
    if items.is_empty() || items.len() % 2 == 0 {
        return false;
    }
    let mut last = 0;
    for (i, g) in items.iter().enumerate() {
        let (ts, ok, is_state) = match g {
            Gen::State { ts, focus_twice } => (*ts, !focus_twice, true),
            Gen::Action { ts, malformed, .. } => (*ts, !malformed, false),
        };
        if is_state != (i % 2 == 0) || !ok || ts < last {
            return false;
        }
        last = ts;
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn validate_trace_accepts_exactly_well_formed(items in prop::collection::vec(gen_item(), 0..12)) {
        let t = build(&items);
        let violations = validate_trace(&t);
        prop_assert_eq!(violations.is_empty(), expected_valid(&items), "{:?}", violations);
        if violations.is_empty() {
            let back = Trace::from_jsonl(&t.to_jsonl()).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(back.to_jsonl(), t.to_jsonl());
        }
    }

    #[test]
    fn alternating_traces_are_accepted(n in 0usize..10, gaps in prop::collection::vec(0u64..500, 21)) {
        let mut ts = 0;
        let mut items = Vec::new();
        for i in 0..=2 * n {
            ts += gaps[i];
            items.push(if i % 2 == 0 {
                Gen::State { ts, focus_twice: false }
            } else {
                Gen::Action { ts, kind: (i % 6) as u8, malformed: false }
            });
        }
        let t = build(&items);
        prop_assert!(validate_trace(&t).is_empty());
        prop_assert_eq!(t.state_count(), n + 1);
        prop_assert_eq!(t.action_count(), n);
        for k in 1..=n + 1 {
            let p = t.truncated(k);
            prop_assert_eq!(p.state_count(), k);
            prop_assert!(validate_trace(&p).is_empty());
        }
    }

    #[test]
    fn binary_scores_match_counting(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let preds: Vec<LabeledPrediction> = pairs.iter().map(|&(p, a)| LabeledPrediction::new(p, a)).collect();
        let r = score_binary(&preds).unwrap();
        let count = |p: bool, a: bool| pairs.iter().filter(|x| **x == (p, a)).count() as u64;
        prop_assert_eq!((r.tp, r.fp, r.fn_, r.tn), (count(true, true), count(true, false), count(false, true), count(false, false)));
        prop_assert_eq!(r.total(), pairs.len() as u64);
        let p = if r.tp + r.fp == 0 { 0.0 } else { r.tp as f64 / (r.tp + r.fp) as f64 };
        let rc = if r.tp + r.fn_ == 0 { 0.0 } else { r.tp as f64 / (r.tp + r.fn_) as f64 };
        prop_assert!((r.precision - p).abs() < 1e-12);
        prop_assert!((r.recall - rc).abs() < 1e-12);
    }
}

#[test]
fn self_validation_rows_are_harmonic_means() {
    // (precision, recall, reported F1) per self-validation row.
    let rows = [
        ("Actuation", 0.95, 0.85, 0.90),
        ("Integrity Constraint", 0.67, 0.36, 0.47),
        ("Workflow Completion", 0.90, 0.84, 0.87),
        ("Workflow Trajectory", 0.88, 0.83, 0.85),
    ];
    for (name, p, r, f1) in rows {
        let h = harmonic_mean(p, r);
        let oracle = 1.0 / ((1.0 / p + 1.0 / r) / 2.0);
        assert!((h - oracle).abs() < 1e-12, "{name}");
        assert!((h - f1).abs() <= 0.005, "{name}: {h:.4} vs {f1}");
    }
}

#[test]
fn empty_trace_is_rejected() {
    let t = Trace { workflow_id: "w".into(), items: Vec::new() };
    assert_eq!(validate_trace(&t)[0].kind, ViolationKind::Empty);
}

#[test]
fn sop_round_trips_with_handoff_marks() {
    let sop = parse_sop("1. Search invoices\n2. Open INV-1042\n3. [HANDOFF] Click Mark as paid\n").unwrap();
    assert!(sop.step(3).unwrap().handoff);
    assert_eq!(sop.step(3).unwrap().text, "Click Mark as paid");
    assert_eq!(parse_sop(&sop.to_markdown()).unwrap(), sop);
    assert!(matches!(parse_sop("1. a\n3. b"), Err(SopError::NonContiguousNumbering { expected: 2, found: 3 })));
    assert!(matches!(parse_sop("no steps here"), Err(SopError::EmptySop)));
}
