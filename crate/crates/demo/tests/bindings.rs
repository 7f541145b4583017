use eclair_demo::{mark_screen, reference_sop, score_sops, simulate_run, workflows};
use serde_json::Value;

#[test]
fn lists_every_fixture_workflow() {
    let list: Value = serde_json::from_str(&workflows()).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 10);
    assert!(list[0]["steps"].as_u64().unwrap() > 0);
}

#[test]
fn marks_follow_the_oracle_path() {
    let first = mark_screen("create_invoice", 0).unwrap();
    let later = mark_screen("create_invoice", 2).unwrap();
    assert!(first.png().starts_with(b"\x89PNG"));
    let legend: Value = serde_json::from_str(&later.legend()).unwrap();
    let labels: Vec<u64> = legend.as_array().unwrap().iter().map(|e| e["label"].as_u64().unwrap()).collect();
    assert_eq!(labels, (1..=labels.len() as u64).collect::<Vec<_>>());
    assert_ne!(first.png(), later.png());
    assert_eq!(mark_screen("create_invoice", 2).unwrap().png(), later.png());
}

#[test]
fn a_reference_sop_scores_perfectly_against_itself() {
    let sop = reference_sop("mark_paid");
    let score: Value = serde_json::from_str(&score_sops(&sop, &sop).unwrap()).unwrap();
    assert_eq!(score["correct"], true);
    assert_eq!(reference_sop("no_such_workflow"), "");
}

#[test]
fn simulated_runs_complete_only_with_the_faithful_oracle() {
    let ok: Value = serde_json::from_str(&simulate_run("login_basic", "faithful", true).unwrap()).unwrap();
    assert_eq!(ok["summary"]["status"], "completed");
    assert_eq!(ok["summary"]["oracle_goal"], true);
    let stalled: Value = serde_json::from_str(&simulate_run("login_basic", "omit-final", true).unwrap()).unwrap();
    assert_ne!(stalled["summary"]["status"], "completed");
    assert!(!stalled["flagged"].as_array().unwrap().is_empty());
}
