use eclair_core::demonstrate::matching::best_matching;
use eclair_core::demonstrate::*;
use eclair_core::fm::{Backend, ReplayBackend};
use eclair_core::model::{Action, Frame, Sop, SopSource, SopStep};
use eclair_core::oracle::{record_with, Oracle, OracleMode};
use eclair_core::raster::{digest, Canvas};
use eclair_core::sim::{fixtures, record_demonstration};
use proptest::prelude::*;
use std::collections::HashMap;

fn frame_png(shade: u8) -> Vec<u8> {
    Canvas::new(4, 4, [shade, shade, shade]).to_png()
}

fn sop(texts: &[String]) -> Sop {
    Sop {
        steps: texts
            .iter()
            .enumerate()
            .map(|(i, t)| SopStep { ordinal: i + 1, text: t.clone(), handoff: false })
            .collect(),
        source: SopSource::Human,
    }
}

/// Best (cardinality, weight) over every partial injective assignment.
fn exhaustive(w: &[Vec<Option<f64>>]) -> (usize, f64) {
    fn go(w: &[Vec<Option<f64>>], row: usize, used: &mut Vec<bool>) -> (usize, f64) {
        if row == w.len() {
            return (0, 0.0);
        }
        let mut best = go(w, row + 1, used);
        for c in 0..used.len() {
            if let (false, Some(x)) = (used[c], w[row][c]) {
                used[c] = true;
                let (n, s) = go(w, row + 1, used);
                used[c] = false;
                let cand = (n + 1, s + x);
                if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1 + 1e-9) {
                    best = cand;
                }
            }
        }
        best
    }
    let cols = w.first().map_or(0, Vec::len);
    go(w, 0, &mut vec![false; cols])
}

fn weights() -> impl Strategy<Value = Vec<Vec<Option<f64>>>> {
    (0usize..=5, 0usize..=5).prop_flat_map(|(r, c)| {
        prop::collection::vec(
            prop::collection::vec(prop::option::weighted(0.6, (0u32..=20).prop_map(|k| k as f64 / 20.0)), c),
            r,
        )
    })
}

const WORDS: &[&str] = &["click", "type", "the", "invoice", "customer", "field", "submit", "search", "open", "amount", "net", "30", "save", "draft"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn matching_is_maximum(w in weights()) {
        let pairs = best_matching(&w);
        let mut rows = std::collections::HashSet::new();
        let mut cols = std::collections::HashSet::new();
        let mut total = 0.0;
        for &(r, c) in &pairs {
            prop_assert!(rows.insert(r) && cols.insert(c));
            total += w[r][c].expect("matched pairs are eligible");
        }
        let (n, best) = exhaustive(&w);
        prop_assert_eq!(pairs.len(), n);
        prop_assert!((total - best).abs() < 1e-9, "{} vs {}", total, best);
    }

    #[test]
    fn keyframe_count_is_bounded(
        shades in prop::collection::vec(0u8..4, 1..40),
        times in prop::collection::vec(0u64..12_000, 0..=20),
        settle in 0u64..1200,
    ) {
        let frames: Vec<Frame> = shades.iter().enumerate().map(|(i, &s)| Frame { ts_ms: i as u64 * 250, png: frame_png(s * 60) }).collect();
        let mut times = times;
        times.sort();
        let events: Vec<Action> = times.iter().map(|&t| Action::click_element("b").at(t)).collect();
        let k = extract_keyframes(&frames, &events, settle).unwrap();
        prop_assert!(!k.is_empty() && k.len() <= 2 * events.len() + 1);
        if events.is_empty() {
            prop_assert_eq!(k.len(), 1);
        }
        prop_assert_eq!(k[0].frame, 0);
        for pair in k.windows(2) {
            prop_assert!(pair[0].ts_ms <= pair[1].ts_ms);
            prop_assert_ne!(&pair[0].digest, &pair[1].digest);
        }
        for kf in &k {
            prop_assert_eq!(&kf.digest, &digest(&frames[kf.frame].png));
        }
    }

    #[test]
    fn identical_sop_scores_perfectly(texts in prop::collection::vec(prop::collection::vec(prop::sample::select(WORDS), 1..6).prop_map(|w| w.join(" ")), 1..10)) {
        let s = sop(&texts);
        let score = score_sop(&s, &s, &SopJudge::Deterministic).unwrap();
        prop_assert_eq!((score.n_missing, score.n_incorrect), (0, 0));
        prop_assert_eq!((score.precision, score.recall), (1.0, 1.0));
        prop_assert!(score.correct);
    }
}

#[test]
fn missing_and_extra_steps_are_counted() {
    let reference = sop(&["Click New invoice".into(), "Type Globex".into(), "Click Submit".into()]);
    let candidate = sop(&["Click New invoice".into(), "Wave at the camera".into(), "Click Submit".into()]);
    let s = score_sop(&candidate, &reference, &SopJudge::Deterministic).unwrap();
    assert_eq!((s.n_missing, s.n_incorrect, s.n_total), (1, 1, 3));
    assert!((s.precision - 2.0 / 3.0).abs() < 1e-12);
    assert!(!s.correct);
    assert!(score_sop(&candidate, &sop(&[]), &SopJudge::Deterministic).is_err());
}

#[test]
fn recorded_oracle_reproduces_the_reference_sop() {
    let spec = fixtures::site_of("invoice_net30").unwrap();
    let bundle = record_demonstration(&spec, "invoice_net30", None).unwrap();
    let reference = bundle.sop.clone().unwrap();
    assert_eq!(reference.len(), 8);
    let options = ContextOptions::default().with_site_labels(&spec);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("demo.jsonl");
    let mut recorded = HashMap::new();
    record_with(&Oracle::fixtures(OracleMode::Faithful), &path, |b: &dyn Backend| {
        for mode in DemoMode::ALL {
            recorded.insert(mode, generate_sop(&bundle, mode, &options, b).unwrap());
        }
    })
    .unwrap();

    let replay = ReplayBackend::load(&path).unwrap();
    for mode in DemoMode::ALL {
        let again = generate_sop(&bundle, mode, &options, &replay).unwrap();
        assert_eq!(again, recorded[&mode], "{mode}");
        assert_eq!(again.source, SopSource::Generated);
    }
    let full = score_sop(&recorded[&DemoMode::WdKfAct], &reference, &SopJudge::Deterministic).unwrap();
    assert!(full.correct && full.n_incorrect == 0);
    let partial = score_sop(&recorded[&DemoMode::WdKf], &reference, &SopJudge::Deterministic).unwrap();
    assert_eq!(partial.n_missing, 1);
    let bare = score_sop(&recorded[&DemoMode::Wd], &reference, &SopJudge::Deterministic).unwrap();
    assert!(!bare.correct);
}

#[test]
fn context_levels_add_images_then_the_action_log() {
    let spec = fixtures::site_of("create_invoice").unwrap();
    let bundle = record_demonstration(&spec, "create_invoice", Some(3)).unwrap();
    let options = ContextOptions::default();
    let wd = build_demo_context(&bundle, DemoMode::Wd, &options).unwrap();
    let kf = build_demo_context(&bundle, DemoMode::WdKf, &options).unwrap();
    let act = build_demo_context(&bundle, DemoMode::WdKfAct, &options).unwrap();
    assert_eq!(wd.image_count(), 0);
    let keyframes = extract_keyframes(&bundle.frames, &bundle.action_log, DEFAULT_SETTLE_MS).unwrap();
    assert_eq!(kf.image_count(), keyframes.len());
    assert_eq!(act.image_count(), kf.image_count());
    assert!(act.text_len() > kf.text_len());
    let again = build_demo_context(&bundle, DemoMode::WdKfAct, &options).unwrap();
    assert_eq!(eclair_core::fm::fingerprint(&again), eclair_core::fm::fingerprint(&act));
}

#[test]
fn fm_judge_agrees_with_the_deterministic_one_on_fixtures() {
    let backend = eclair_core::fm::LiveBackend::new(Oracle::fixtures(OracleMode::Faithful).provider());
    for (spec, id) in fixtures::workflows() {
        let bundle = record_demonstration(&spec, &id, None).unwrap();
        let Some(reference) = bundle.sop.clone() else { continue };
        let mut shorter = reference.clone();
        shorter.steps.pop();
        for cand in [&reference, &shorter] {
            if cand.is_empty() {
                continue;
            }
            let det = score_sop(cand, &reference, &SopJudge::Deterministic).unwrap();
            let fm = score_sop(cand, &reference, &SopJudge::Fm { backend: &backend, description: &bundle.workflow.description }).unwrap();
            assert_eq!((det.n_missing, det.n_incorrect, det.correct), (fm.n_missing, fm.n_incorrect, fm.correct), "{id}");
        }
    }
}
