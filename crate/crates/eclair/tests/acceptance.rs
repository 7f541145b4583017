//! Acceptance suite. Prints one PASS or FAIL line per criterion and exits
//! nonzero when any fails. Run with `cargo test -p eclair --test acceptance`.

use eclair::author::shipped_config;
use eclair::bench::{run_suite, Suite};
use eclair::config::{Config, DEFAULT_SEED};
use eclair_core::demonstrate::matching::best_matching;
use eclair_core::demonstrate::{extract_keyframes, score_sop, SopJudge};
use eclair_core::execute::{
    run_workflow, Event, EventBody, EventSink, RunDir, RunHooks, RunInputs, RunPolicy, RunResult, RunStatus,
    ScriptedDecisions, WhitelistEntry,
};
use eclair_core::fm::{Backend, BackendKind};
use eclair_core::ground::{
    center_hit, clip_box, render_set_of_marks, resolve_label, BoxCandidate, BoxSource, BoxSourceKind, LabelMap,
};
use eclair_core::model::{
    harmonic_mean, parse_sop, validate_trace, Action, ActionKind, BoundingBox, DirScreens, Element, ElementRole,
    Frame, Point, Sop, SopSource, SopStep, State, Trace, TraceItem, Viewport, Workflow,
};
use eclair_core::oracle::{fixture_sources, Oracle, OracleMode};
use eclair_core::raster::Canvas;
use eclair_core::sim::{fixtures, oracle_trace_complete, SimEnv};
use eclair_core::validate::{
    check_actuation, gen_negatives, shuffle_negative, trace_signatures, Judge, Subject, DEFAULT_RATIO,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{HashSet, VecDeque};
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

// ---------------------------------------------------------------- traces

#[derive(Debug, Clone)]
enum Gen {
    State { ts: u64, focus_twice: bool },
    Action { ts: u64, kind: u8, malformed: bool },
}

fn gen_item() -> impl Strategy<Value = Gen> {
    prop_oneof![
        (0u64..6, prop::bool::weighted(0.05)).prop_map(|(t, f)| Gen::State { ts: t * 100, focus_twice: f }),
        (0u64..6, 0u8..6, prop::bool::weighted(0.05)).prop_map(|(t, k, m)| Gen::Action {
            ts: t * 100,
            kind: k,
            malformed: m
        }),
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

/// Odd length, states at even positions, every item well formed, and
/// timestamps never decreasing.
fn expected_valid(items: &[Gen]) -> bool {
    if items.len() % 2 == 0 {
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

fn trace_model() -> Outcome {
    const CASES: u32 = 1000;
    let mut runner = TestRunner::new(RunnerConfig {
        cases: CASES,
        failure_persistence: None,
        ..RunnerConfig::default()
    });
    let valid = std::cell::Cell::new(0u32);
    runner
        .run(&prop::collection::vec(gen_item(), 0..12), |items| {
            let t = build(&items);
            let violations = validate_trace(&t);
            prop_assert_eq!(violations.is_empty(), expected_valid(&items), "{:?}", violations);
            if violations.is_empty() {
                valid.set(valid.get() + 1);
                let back = Trace::from_jsonl(&t.to_jsonl()).map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(&back, &t);
                prop_assert_eq!(back.to_jsonl(), t.to_jsonl());
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("{CASES} cases, {} valid and round-tripped", valid.get()))
}

// --------------------------------------------------------------- metrics

fn metric_arithmetic() -> Outcome {
    let rows = [
        ("Actuation", 0.95, 0.85, 0.90),
        ("Integrity Constraint", 0.67, 0.36, 0.47),
        ("Workflow Completion", 0.90, 0.84, 0.87),
        ("Workflow Trajectory", 0.88, 0.83, 0.85),
    ];
    let mut out = Vec::new();
    for (name, p, r, f1) in rows {
        let h = harmonic_mean(p, r);
        let oracle = 2.0 * p * r / (p + r);
        ensure!((h - oracle).abs() < 1e-12, "{name}: {h} vs {oracle}");
        ensure!((h - f1).abs() <= 0.005, "{name}: {h:.4} vs reported {f1}");
        out.push(format!("{h:.4}"));
    }
    Ok(format!("F1 {}", out.join(", ")))
}

// ------------------------------------------------------------- grounding

fn center_hit_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut boundary = 0;
    for i in 0..10_000 {
        // Doubled integer coordinates keep the center exact.
        let mut draw = |max: i64| {
            (
                rng.random_range(0..max),
                rng.random_range(0..max),
                rng.random_range(1..max),
                rng.random_range(1..max),
            )
        };
        let p = draw(40);
        let mut t = draw(40);
        let (cx2, cy2) = (2 * p.0 + p.2, 2 * p.1 + p.3);
        match i % 5 {
            0 if cx2 % 2 == 0 => t.0 = (cx2 / 2 - t.2).max(0),
            1 if cx2 % 2 == 0 => t.0 = cx2 / 2,
            2 if cy2 % 2 == 0 => t.1 = cy2 / 2,
            _ => {}
        }
        let brute = 2 * t.0 <= cx2 && cx2 <= 2 * (t.0 + t.2) && 2 * t.1 <= cy2 && cy2 <= 2 * (t.1 + t.3);
        if [2 * t.0, 2 * (t.0 + t.2)].contains(&cx2) || [2 * t.1, 2 * (t.1 + t.3)].contains(&cy2) {
            boundary += 1;
        }
        let bb = |v: (i64, i64, i64, i64)| BoundingBox::new(v.0 as f64, v.1 as f64, v.2 as f64, v.3 as f64).unwrap();
        ensure!(center_hit(&bb(p), &bb(t)) == brute, "pair {i}: predicted {p:?} target {t:?}");
    }
    ensure!(boundary >= 1000, "only {boundary} boundary cases");
    Ok(format!("10000 pairs agree, {boundary} on a boundary"))
}

fn badge_overlaps(map: &LabelMap, w: u32, h: u32) -> Result<usize, String> {
    let mut grid = vec![0u8; (w * h) as usize];
    let mut overlaps = 0;
    for e in &map.entries {
        let r = e.badge;
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                ensure!(x >= 0 && y >= 0 && x < w as i64 && y < h as i64, "badge {} leaves the image", e.label);
                let cell = &mut grid[(y as u32 * w + x as u32) as usize];
                overlaps += usize::from(*cell > 0);
                *cell = 1;
            }
        }
    }
    Ok(overlaps)
}

fn set_of_marks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut marks = 0;
    for layout in 0..200 {
        let (w, h) = (rng.random_range(200..=640u32), rng.random_range(150..=480u32));
        let n = rng.random_range(1..=12);
        let boxes: Vec<BoundingBox> = (0..n)
            .map(|_| {
                let (bw, bh) = (rng.random_range(24..=160) as f64, rng.random_range(24..=120) as f64);
                let x = (rng.random_range(0..w) as f64).min(w as f64 - 24.0);
                let y = (rng.random_range(0..h) as f64).min(h as f64 - 24.0);
                BoundingBox::new(x, y, bw, bh).unwrap()
            })
            .collect();
        let source = BoxSource {
            kind: BoxSourceKind::DetectorFile,
            boxes: boxes
                .iter()
                .map(|b| BoxCandidate { bbox: *b, role: None, label: None, element_id: None })
                .collect(),
        };
        let png = Canvas::new(w, h, [250, 250, 250]).to_png();
        let map = render_set_of_marks(&png, &source).map_err(|e| e.to_string())?;
        let again = render_set_of_marks(&png, &source).map_err(|e| e.to_string())?;
        ensure!(map.image == again.image, "layout {layout}: rendering differs between invocations");
        let labels: Vec<u32> = map.entries.iter().map(|e| e.label).collect();
        ensure!(labels == (1..=n as u32).collect::<Vec<_>>(), "layout {layout}: labels {labels:?}");
        for (e, b) in map.entries.iter().zip(&boxes) {
            ensure!(e.bbox.contains(e.anchor), "layout {layout}: anchor of {} outside its box", e.label);
            let resolved = resolve_label(e.label, &map).map_err(|x| x.to_string())?;
            ensure!(resolved.bbox == clip_box(b, w, h), "layout {layout}: label {} resolves elsewhere", e.label);
        }
        let overlaps = badge_overlaps(&map, w, h)?;
        ensure!(overlaps == 0, "layout {layout}: {overlaps} pixels shared by badges");
        marks += n;
    }
    Ok(format!("200 layouts, {marks} marks"))
}

// ------------------------------------------------------------ demonstrate

fn keyframes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pngs: Vec<Vec<u8>> = (0..4u8).map(|s| Canvas::new(4, 4, [s * 60, s * 60, s * 60]).to_png()).collect();
    let mut checked = 0;
    for e in 0..=20usize {
        for _ in 0..20 {
            let n_frames = rng.random_range(1..40);
            let frames: Vec<Frame> = (0..n_frames)
                .map(|i| Frame { ts_ms: i as u64 * 250, png: pngs[rng.random_range(0..4)].clone() })
                .collect();
            let mut times: Vec<u64> = (0..e).map(|_| rng.random_range(0..12_000)).collect();
            times.sort();
            let events: Vec<Action> = times.iter().map(|&t| Action::click_element("b").at(t)).collect();
            let settle = rng.random_range(0..1200);
            let k = extract_keyframes(&frames, &events, settle).map_err(|x| x.to_string())?;
            ensure!(!k.is_empty() && k.len() <= 2 * e + 1, "E={e}: {} keyframes", k.len());
            ensure!(e > 0 || k.len() == 1, "zero events gave {} keyframes", k.len());
            checked += 1;
        }
    }
    Ok(format!("{checked} recordings, E in 0..=20"))
}

fn sop_of(texts: &[String]) -> Sop {
    Sop {
        steps: texts
            .iter()
            .enumerate()
            .map(|(i, t)| SopStep { ordinal: i + 1, text: t.clone(), handoff: false })
            .collect(),
        source: SopSource::Human,
    }
}

/// Best (pairs, weight) over every partial injective assignment.
fn exhaustive(w: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn go(w: &[Vec<Option<f64>>], row: usize, used: &mut [bool]) -> (usize, f64) {
        if row == w.len() {
            return (0, 0.0);
        }
        let mut best = go(w, row + 1, used);
        for c in 0..used.len() {
            if let (false, Some(x)) = (used[c], w[row][c]) {
                used[c] = true;
                let (n, s) = go(w, row + 1, used);
                used[c] = false;
                if n + 1 > best.0 || (n + 1 == best.0 && s + x > best.1 + 1e-9) {
                    best = (n + 1, s + x);
                }
            }
        }
        best
    }
    let cols = w.first().map_or(0, Vec::len);
    go(w, 0, &mut vec![false; cols])
}

fn matching_agrees(w: &[Vec<Option<f64>>]) -> Result<(), String> {
    let pairs = best_matching(w);
    let (mut rows, mut cols, mut total) = (HashSet::new(), HashSet::new(), 0.0);
    for &(r, c) in &pairs {
        ensure!(rows.insert(r) && cols.insert(c), "{w:?}: row or column used twice");
        total += w[r][c].ok_or_else(|| format!("{w:?}: ineligible pair ({r}, {c})"))?;
    }
    let (n, best) = exhaustive(w);
    ensure!(pairs.len() == n && (total - best).abs() < 1e-9, "{w:?}: {} pairs / {total} vs {n} / {best}", pairs.len());
    Ok(())
}

fn sop_scoring() -> Outcome {
    const WORDS: &[&str] = &["click", "type", "the", "invoice", "customer", "field", "submit", "search", "open", "amount"];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..100 {
        let texts: Vec<String> = (0..rng.random_range(1..10))
            .map(|_| (0..rng.random_range(1..6)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" "))
            .collect();
        let s = sop_of(&texts);
        let score = score_sop(&s, &s, &SopJudge::Deterministic).map_err(|e| e.to_string())?;
        ensure!(
            score.n_missing == 0 && score.n_incorrect == 0 && score.precision == 1.0 && score.recall == 1.0 && score.correct,
            "SOP {i} scored against itself: {score:?}"
        );
    }
    // Every shape up to 5x5; every eligibility pattern up to 3x3.
    let mut matrices = 0;
    for r in 0..=5usize {
        for c in 0..=5usize {
            let cells = r * c;
            let patterns: Vec<u32> = if cells <= 9 {
                (0..1u32 << cells).collect()
            } else {
                (0..300).map(|_| rng.random::<u32>()).collect()
            };
            for mask in patterns {
                let w: Vec<Vec<Option<f64>>> = (0..r)
                    .map(|i| {
                        (0..c)
                            .map(|j| (mask >> ((i * c + j) % 32) & 1 == 1).then(|| rng.random_range(0..=20) as f64 / 20.0))
                            .collect()
                    })
                    .collect();
                matching_agrees(&w)?;
                matrices += 1;
            }
        }
    }
    Ok(format!("100 SOPs perfect; matcher optimal on {matrices} matrices up to 5x5"))
}

// -------------------------------------------------------------- validate

fn negative_generators() -> Outcome {
    let (sources, _) = fixture_sources(&(0..10).collect::<Vec<_>>());
    ensure!(sources.len() == 100, "{} fixture traces", sources.len());
    let completion = gen_negatives(&sources, Subject::Completion, 7, DEFAULT_RATIO).map_err(|e| e.to_string())?;
    let mut truncations = 0;
    for (i, src) in sources.iter().enumerate() {
        let spec = fixtures::site_of(&src.trace.workflow_id).ok_or("unknown fixture workflow")?;
        for neg in completion.iter().filter(|it| !it.label && it.id.starts_with(&format!("completion-{i:03}-"))) {
            ensure!(neg.trace.state_count() < src.trace.state_count(), "{}: prefix is not shorter", neg.id);
            let done = oracle_trace_complete(&neg.trace, &spec).map_err(|e| e.to_string())?;
            ensure!(!done, "{}: truncation still completes the workflow", neg.id);
            truncations += 1;
        }
    }
    ensure!(truncations == 100, "{truncations} truncations");

    let mut shuffles = 0;
    for (i, src) in sources.iter().enumerate() {
        let sigs = trace_signatures(&src.trace);
        let distinct: HashSet<String> = sigs.iter().map(|s| format!("{s:?}")).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        match shuffle_negative(&src.trace, &mut rng) {
            Some(t) => {
                ensure!(trace_signatures(&t) != sigs, "trace {i}: shuffle kept the order");
                ensure!(validate_trace(&t).is_empty(), "trace {i}: shuffle is malformed");
                shuffles += 1;
            }
            None => ensure!(distinct.len() < 2, "trace {i}: no shuffle despite {} distinct actions", distinct.len()),
        }
    }

    let mut total = 0;
    for task in [Subject::Actuation, Subject::Completion, Subject::Trajectory] {
        let a = gen_negatives(&sources, task, 42, DEFAULT_RATIO).map_err(|e| e.to_string())?;
        let b = gen_negatives(&sources, task, 42, DEFAULT_RATIO).map_err(|e| e.to_string())?;
        for it in &a {
            ensure!(validate_trace(&it.trace).is_empty(), "{}: malformed output", it.id);
        }
        let bytes = |v: &[eclair_core::validate::EvalItem]| serde_json::to_vec(v).unwrap();
        ensure!(bytes(&a) == bytes(&b), "{task:?}: regeneration differs");
        total += a.len();
    }
    Ok(format!("{truncations} truncations, {shuffles} shuffles, {total} items regenerated identically"))
}

// --------------------------------------------------------------- execute

fn replay_backend(config: &str) -> Result<Arc<dyn Backend>, String> {
    let c = Config::load(&shipped_config(config)).map_err(|e| e.to_string())?;
    c.fm.build(None).map_err(|e| e.to_string())
}

fn run_fixture(
    id: &str,
    backend: &dyn Backend,
    policy: &RunPolicy,
    decisions: &mut dyn eclair_core::execute::DecisionSource,
    dir: Option<&Path>,
) -> Result<(RunResult, Vec<Event>), String> {
    let spec = fixtures::site_of(id).ok_or("unknown workflow")?;
    let w = spec.workflow(id).ok_or("unknown workflow")?;
    let sop = parse_sop(w.sop.as_deref().ok_or("no SOP")?).map_err(|e| e.to_string())?;
    let workflow = Workflow::new(&w.id, &w.description, &spec.name);
    let constraints = fixtures::constraints(id).unwrap_or_default();
    let mut run_dir = match dir {
        Some(d) => Some(RunDir::create(d, id).map_err(|e| e.to_string())?),
        None => None,
    };
    let mut events: Vec<Event> = Vec::new();
    let mut env = SimEnv::new(spec.clone());
    let result = run_workflow(
        &RunInputs { run_id: id, workflow: &workflow, sop: Some(&sop), constraints: &constraints },
        &mut env,
        backend,
        policy,
        &mut RunHooks { events: &mut events as &mut dyn EventSink, decisions, dir: run_dir.as_mut() },
    );
    Ok((result, events))
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ids: Vec<String> = fixtures::workflows().into_iter().map(|(_, id)| id).collect();
    ensure!(ids.len() == 10, "{} fixture workflows", ids.len());
    let faithful = replay_backend("replay.toml")?;
    let omit = replay_backend("omit-final.toml")?;
    let mut completed = 0;
    for id in &ids {
        let mut approve = eclair_core::execute::AutoDecision(eclair_core::execute::DecisionKind::Approve);
        let (r, _) = run_fixture(id, faithful.as_ref(), &RunPolicy::default(), &mut approve, None)?;
        ensure!(r.status == RunStatus::Completed && r.oracle_goal == Some(true), "{id}: {:?} {:?}", r.status, r.detail);
        completed += 1;
    }
    let mut stalled = 0;
    for id in &ids {
        let dir = tmp.path().join(id);
        let mut approve = eclair_core::execute::AutoDecision(eclair_core::execute::DecisionKind::Approve);
        let (r, _) = run_fixture(id, omit.as_ref(), &RunPolicy::default(), &mut approve, Some(&dir))?;
        ensure!(!r.succeeded() && r.status != RunStatus::Completed, "{id}: omit-final run completed");
        ensure!(
            !r.detail.as_deref().unwrap_or("").contains("cassette has no entry"),
            "{id}: {:?}",
            r.detail
        );
        let n = fixtures::site_of(id).unwrap().workflow(id).unwrap().oracle.len();
        let stall = n - 1;
        ensure!(r.flagged_actions().first() == Some(&stall), "{id}: flagged {:?}, stall at {stall}", r.flagged_actions());
        let steps = r.trace.steps();
        let (s, a, s2) = steps.get(stall).ok_or_else(|| format!("{id}: trace too short"))?;
        let screens = DirScreens::new(&dir);
        let j = check_actuation(s, a, s2, &screens, Judge::Deterministic).map_err(|e| e.to_string())?;
        ensure!(!j.verdict, "{id}: deterministic actuation check passes the stalled step");
        stalled += 1;
    }
    Ok(format!("{completed}/10 complete from the oracle cassette; 0/10 from the omit cassette, {stalled} stalls flagged"))
}

fn sop_guidance() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = Config::load(&shipped_config("replay.toml")).map_err(|e| e.to_string())?;
    let out = run_suite(Suite::Execute, &config, DEFAULT_SEED, tmp.path(), None).map_err(|e| e.to_string())?;
    let report: serde_json::Value = serde_json::from_str(&out.json).map_err(|e| e.to_string())?;
    let rate = |sop: bool| {
        report["rows"]
            .as_array()
            .and_then(|rows| rows.iter().find(|r| r["sop"] == sop))
            .and_then(|r| r["completion_rate"].as_f64())
            .ok_or_else(|| "no completion row".to_string())
    };
    let (without, with) = (rate(false)?, rate(true)?);
    ensure!(with >= without, "completion with SOP {with} < without {without}");
    Ok(format!("completion {without:.2} without SOP, {with:.2} with"))
}

/// Case-insensitive `*` glob, for single-star and star-free patterns.
fn label_matches(pattern: &str, label: &str) -> bool {
    let (p, l) = (pattern.to_lowercase(), label.to_lowercase());
    match p.split_once('*') {
        None => p == l,
        Some((head, tail)) => l.len() >= head.len() + tail.len() && l.starts_with(head) && l.ends_with(tail),
    }
}

fn interrupt_soundness() -> Outcome {
    let oracle = {
        let mut c = Config::replay("unused.jsonl");
        c.fm.backend = BackendKind::Live;
        c.fm.build(Some(Arc::new(Oracle::fixtures(OracleMode::Faithful).provider()))).map_err(|e| e.to_string())?
    };
    let ids: Vec<String> = fixtures::workflows().into_iter().map(|(_, id)| id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let (mut gated, mut denied) = (0, 0);
    for run in 0..50 {
        let id = &ids[rng.random_range(0..ids.len())];
        let spec = fixtures::site_of(id).unwrap();
        let w = spec.workflow(id).unwrap();
        // Whitelist one or two of the workflow's own actions.
        let mut whitelist = Vec::new();
        for _ in 0..rng.random_range(1..=2) {
            let step = &w.oracle[rng.random_range(0..w.oracle.len())];
            let a = step.to_action();
            let template = step.target.as_deref().and_then(|t| spec.element_template(t)).map(|(_, t)| t.clone());
            let (role, label_pattern) = match (&template, rng.random_range(0..4)) {
                (Some(t), 1) => (Some(t.role), None),
                (Some(t), 2) => (Some(t.role), Some(format!("{}*", &t.label[..t.label.len().min(3)]))),
                (Some(t), 3) => (None, Some(t.label.to_uppercase())),
                _ => (None, None),
            };
            whitelist.push(WhitelistEntry { kind: a.kind, role, label_pattern });
        }
        let answers: VecDeque<_> = (0..8)
            .map(|_| {
                if rng.random_bool(0.7) {
                    eclair_core::execute::DecisionKind::Approve
                } else {
                    eclair_core::execute::DecisionKind::Deny
                }
            })
            .collect();
        let policy = RunPolicy { whitelist: whitelist.clone(), ..RunPolicy::default() };
        let mut decisions = ScriptedDecisions(answers);
        let (r, events) = run_fixture(id, oracle.as_ref(), &policy, &mut decisions, None)?;

        let mut approved = false;
        let mut deny_seen = false;
        for e in &events {
            match &e.body {
                EventBody::Interrupt(_) => approved = false,
                EventBody::Decision(d) => {
                    approved = d.decision == eclair_core::execute::DecisionKind::Approve;
                    deny_seen |= !approved;
                }
                EventBody::Actuated { action, element, .. } => {
                    ensure!(!deny_seen, "run {run} ({id}): actuation after a deny");
                    let listed = whitelist.iter().any(|w| {
                        w.kind == action.kind
                            && (w.role.is_none() && w.label_pattern.is_none()
                                || element.as_ref().is_some_and(|el| {
                                    w.role.is_none_or(|r| r == el.role)
                                        && w.label_pattern.as_deref().is_none_or(|p| label_matches(p, &el.label))
                                }))
                    });
                    if listed && action.kind != ActionKind::Stop {
                        ensure!(approved, "run {run} ({id}): whitelisted {:?} actuated without approval", action.kind);
                        gated += 1;
                    }
                    approved = false;
                }
                _ => {}
            }
        }
        if deny_seen {
            ensure!(r.status == RunStatus::AbortedByHuman, "run {run} ({id}): deny gave {:?}", r.status);
            denied += 1;
        }
    }
    ensure!(gated > 0 && denied > 0, "degenerate sample: {gated} gated actions, {denied} denials");
    Ok(format!("50 runs, {gated} gated actuations all approved, {denied} denials all aborted"))
}

// ------------------------------------------------------------ determinism

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_eclair"))
            .args(["eval", "validate", "--seed", "42", "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "eclair eval validate: {}", String::from_utf8_lossy(&status.stderr));
        reports.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure!(reports[0] == reports[1], "report.json differs between invocations");
    Ok(format!("report.json identical ({} bytes)", reports[0].len()))
}

// ------------------------------------------------------------------ main

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 11] = [
        ("trace model", 10, trace_model),
        ("metric arithmetic", 1, metric_arithmetic),
        ("center_hit equivalence", 5, center_hit_equivalence),
        ("set-of-marks", 30, set_of_marks),
        ("keyframes", 10, keyframes),
        ("SOP scoring", 30, sop_scoring),
        ("negative generators", 30, negative_generators),
        ("end-to-end runs", 120, end_to_end),
        ("SOP guidance direction", 120, sop_guidance),
        ("interrupt soundness", 60, interrupt_soundness),
        ("determinism", 60, determinism),
    ];
    // Keep failing criteria from printing panic backtraces.
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panic: {}", p.downcast_ref::<String>().cloned().unwrap_or_default())));
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(_) if elapsed > Duration::from_secs(limit) => Err(format!("took longer than {limit} s")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += usize::from(outcome.is_err());
        println!("{tag}  {name:<24} {:>7.2} s / {limit:>3} s  {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} of 11 criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
