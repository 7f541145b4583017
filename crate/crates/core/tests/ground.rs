use eclair_core::fm::{FmRequest, LiveBackend, ScriptedProvider};
use eclair_core::ground::*;
use eclair_core::model::{BoundingBox, Point};
use eclair_core::raster::Canvas;
use eclair_core::sim::{fixtures, Environment, SimEnv};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn scripted(reply: &'static str) -> LiveBackend<ScriptedProvider> {
    LiveBackend::new(ScriptedProvider::new("scripted", move |_: &FmRequest| Ok(reply.to_string())))
}

fn blank(w: u32, h: u32) -> Vec<u8> {
    Canvas::new(w, h, [250, 250, 250]).to_png()
}

fn detector(boxes: &[BoundingBox]) -> BoxSource {
    BoxSource {
        kind: BoxSourceKind::DetectorFile,
        boxes: boxes
            .iter()
            .map(|b| BoxCandidate {
                bbox: *b,
                role: None,
                label: None,
                element_id: None,
            })
            .collect(),
    }
}

fn random_layout(rng: &mut ChaCha8Rng) -> (u32, u32, Vec<BoundingBox>) {
    let (w, h) = (rng.random_range(200..=640u32), rng.random_range(150..=480u32));
    let n = rng.random_range(1..=12);
    let boxes = (0..n)
        .map(|_| {
            let bw = rng.random_range(24..=160) as f64;
            let bh = rng.random_range(24..=120) as f64;
            // Some boxes spill past the right/bottom edge and get clipped.
            let x = rng.random_range(0..w) as f64;
            let y = rng.random_range(0..h) as f64;
            BoundingBox::new(x.min(w as f64 - 24.0), y.min(h as f64 - 24.0), bw, bh).unwrap()
        })
        .collect();
    (w, h, boxes)
}

/// Counts pixels claimed by more than one badge.
fn badge_collisions(map: &LabelMap, w: u32, h: u32) -> usize {
    let mut grid = vec![0u8; (w * h) as usize];
    let mut collisions = 0;
    for e in &map.entries {
        let r = e.badge;
        for y in r.y..r.y + r.h {
            for x in r.x..r.x + r.w {
                assert!(x >= 0 && y >= 0 && x < w as i64 && y < h as i64, "badge off image");
                let cell = &mut grid[(y as u32 * w + x as u32) as usize];
                if *cell > 0 {
                    collisions += 1;
                }
                *cell += 1;
            }
        }
    }
    collisions
}

#[test]
fn set_of_marks_on_random_layouts() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (w, h, boxes) = random_layout(&mut rng);
        let png = blank(w, h);
        let source = detector(&boxes);
        let map = render_set_of_marks(&png, &source).unwrap();
        let again = render_set_of_marks(&png, &source).unwrap();
        assert_eq!(map.image, again.image);
        assert_eq!(map.entries.len(), boxes.len());
        for (i, (e, b)) in map.entries.iter().zip(&boxes).enumerate() {
            assert_eq!(e.label, i as u32 + 1);
            assert!(!e.crowded);
            assert!(e.bbox.contains(e.anchor), "anchor {:?} outside {:?}", e.anchor, e.bbox);
            assert_eq!(resolve_label(e.label, &map).unwrap().bbox, clip_box(b, w, h));
        }
        assert_eq!(badge_collisions(&map, w, h), 0);
        assert!(matches!(resolve_label(0, &map), Err(GroundError::UnknownLabel(0))));
        let past = boxes.len() as u32 + 1;
        assert!(matches!(resolve_label(past, &map), Err(GroundError::UnknownLabel(n)) if n == past));
    }
}

#[test]
fn empty_box_list_leaves_image_untouched() {
    let png = blank(64, 48);
    let map = render_set_of_marks(&png, &detector(&[])).unwrap();
    assert!(map.entries.is_empty());
    assert_eq!(map.image.as_slice(), png.as_slice());
}

#[test]
fn overlapping_boxes_get_disjoint_badges() {
    let b = BoundingBox::new(10.0, 10.0, 60.0, 40.0).unwrap();
    let map = render_set_of_marks(&blank(120, 80), &detector(&[b, b, b])).unwrap();
    assert_eq!(badge_collisions(&map, 120, 80), 0);
    assert_eq!(map.entries[0].anchor, Point::new(10.0, 10.0));
    for e in &map.entries {
        assert!(b.contains(e.anchor));
    }
}

#[test]
fn center_hit_matches_brute_force() {
    // Doubled integer coordinates make the center exact.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut boundary = 0;
    for i in 0..10_000 {
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
        if i % 4 == 0 {
            // Put the predicted center on one of the target's edges.
            let cx2 = 2 * p.0 + p.2;
            if cx2 % 2 == 0 {
                t.0 = (cx2 / 2 - t.2).max(0);
            }
        }
        let (cx2, cy2) = (2 * p.0 + p.2, 2 * p.1 + p.3);
        let brute = 2 * t.0 <= cx2 && cx2 <= 2 * (t.0 + t.2) && 2 * t.1 <= cy2 && cy2 <= 2 * (t.1 + t.3);
        if cx2 == 2 * (t.0 + t.2) || cx2 == 2 * t.0 {
            boundary += 1;
        }
        let bb = |v: (i64, i64, i64, i64)| BoundingBox::new(v.0 as f64, v.1 as f64, v.2 as f64, v.3 as f64).unwrap();
        assert_eq!(center_hit(&bb(p), &bb(t)), brute, "{p:?} {t:?}");
    }
    assert!(boundary > 100);
}

#[test]
fn report_overall_is_weighted_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<GroundingCase> = (0..500)
        .map(|_| {
            let s = rng.random_range(5.0..200.0);
            GroundingCase {
                predicted: BoundingBox::new(rng.random_range(0.0..100.0), 0.0, 10.0, 10.0).unwrap(),
                target: BoundingBox::new(0.0, 0.0, s, s).unwrap(),
            }
        })
        .collect();
    let r = grounding_report(&cases, &BucketThresholds::default()).unwrap();
    let weighted: f64 = SizeBucket::ALL
        .iter()
        .map(|b| r.get(*b))
        .filter(|c| c.cases > 0)
        .map(|c| c.accuracy().unwrap() * c.cases as f64)
        .sum::<f64>()
        / r.overall.cases as f64;
    assert!((weighted - r.overall.accuracy().unwrap()).abs() < 1e-12);
    assert_eq!(SizeBucket::ALL.iter().map(|b| r.get(*b).cases).sum::<usize>(), 500);
}

fn login_screen() -> (eclair_core::model::State, Arc<Vec<u8>>) {
    let mut env = SimEnv::new(fixtures::site("login_flow").unwrap());
    let obs = env.observe();
    (obs.state, obs.screenshot)
}

#[test]
fn som_answer_grounds_to_box_center() {
    let (state, png) = login_screen();
    let source = BoxSource::from_state(&state);
    let g = ground_action("Click the Username field", &state, &png, &scripted("label: 2"), GroundStrategy::Som, None)
        .unwrap();
    let second = &source.boxes[1];
    assert_eq!(g.label, Some(2));
    assert_eq!(g.element_id, second.element_id);
    assert_eq!(g.point, second.bbox.center());
}

#[test]
fn prose_answer_is_ungroundable() {
    let (state, png) = login_screen();
    for strategy in [GroundStrategy::Som, GroundStrategy::Direct] {
        let err = ground_action("Click Log in", &state, &png, &scripted("the blue button"), strategy, None)
            .unwrap_err();
        assert!(matches!(err, GroundError::UngroundableResponse(_)));
    }
    let err = ground_action("Click Log in", &state, &png, &scripted("99"), GroundStrategy::Som, None).unwrap_err();
    assert!(matches!(err, GroundError::UnknownLabel(99)));
}

#[test]
fn direct_answer_uses_box_center() {
    let (state, png) = login_screen();
    let g = ground_action("x", &state, &png, &scripted("(10,10,20,20)"), GroundStrategy::Direct, None).unwrap();
    assert_eq!(g.point, Point::new(20.0, 20.0));
    let username = state.element("username").unwrap().bbox;
    let reply: &'static str = Box::leak(
        format!("({},{},{},{})", username.x, username.y, username.width, username.height).into_boxed_str(),
    );
    let g = ground_action("x", &state, &png, &scripted(reply), GroundStrategy::Direct, None).unwrap();
    assert_eq!(g.element_id.as_deref(), Some("username"));
}

#[test]
fn dataset_round_trip_and_eval() {
    let (state, png) = login_screen();
    let dir = tempfile::tempdir().unwrap();
    let target = state.element("username").unwrap();
    let source = BoxSource::from_state(&state);
    let label = source.boxes.iter().position(|b| b.element_id.as_deref() == Some("username")).unwrap() + 1;
    let samples: Vec<GroundingSample> = ["0000", "0001"]
        .iter()
        .map(|id| GroundingSample {
            id: id.to_string(),
            screenshot: png.clone(),
            boxes: source.clone(),
            target: target.bbox,
            target_id: Some("username".into()),
            query: "Click the Username field".into(),
        })
        .collect();
    for s in &samples {
        write_case(dir.path(), s).unwrap();
    }
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded[0].boxes.boxes, samples[0].boxes.boxes);
    assert_eq!(loaded[0].target, samples[0].target);
    let reply: &'static str = Box::leak(format!("{label}").into_boxed_str());
    let rows = evaluate_grounding(&loaded, &scripted(reply), GroundStrategy::Som, &BucketThresholds::default()).unwrap();
    assert!(rows.iter().all(|r| r.hit));
    let miss = evaluate_grounding(&loaded, &scripted("none"), GroundStrategy::Som, &BucketThresholds::default()).unwrap();
    let report = rows_report(&miss).unwrap();
    assert_eq!(report.overall.accuracy(), Some(0.0));
    assert!(miss[0].error.is_some());
}

proptest! {
    #[test]
    fn marks_are_deterministic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h, boxes) = random_layout(&mut rng);
        let png = blank(w, h);
        let a = render_set_of_marks(&png, &detector(&boxes)).unwrap();
        let b = render_set_of_marks(&png, &detector(&boxes)).unwrap();
        prop_assert_eq!(a, b);
    }
}
