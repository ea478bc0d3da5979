mod common;

use std::fs;

use cfuqc_core::agents::{AgentKind, Quality};
use cfuqc_core::config::PipelineConfig;
use cfuqc_core::orchestrator::*;
use cfuqc_core::registry::{synthetic_training_set, train_and_promote, CandidateId};
use cfuqc_core::synthgen::ArtifactKind;
use cfuqc_core::{BoxClass, ClassCounts, Error};
use chrono::Utc;
use common::*;

fn verdict(plate_id: &str, count: u32, quality: Quality) -> ExpertVerdict {
    ExpertVerdict {
        plate_id: plate_id.into(),
        reviewer_id: "rev-1".into(),
        final_count: count,
        final_quality: quality,
        final_class_counts: ClassCounts::default(),
        note: String::new(),
        timestamp: Utc::now(),
    }
}

/// A plate whose counters disagree: a deeply fused pair (one for counter B)
/// that counter A splits at a low threshold.
fn disagreeing_orchestrator(dir: &std::path::Path) -> Orchestrator {
    let mut cfg = PipelineConfig::default();
    cfg.counter_a.threshold = 100;
    Orchestrator::open(dir, cfg).unwrap()
}

#[test]
fn clean_plate_auto_approves() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let (img, gt) = clean(21);
    let id = submit(&o, &img, Some(gt.clone()), "r1");
    let s = o.process_plate(&id).unwrap();
    assert_eq!(s.state, StateKind::AutoApproved);
    assert_eq!(s.final_count(), Some(gt.true_count));
    let d = s.decision.unwrap();
    assert_eq!((d.count_a, d.count_b, d.relative_delta), (gt.true_count, gt.true_count, 0.0));
    assert_eq!(
        s.transitions.iter().map(|t| t.state).collect::<Vec<_>>(),
        [StateKind::Received, StateKind::ScreenedValid, StateKind::Counted, StateKind::AutoApproved]
    );
    let outbox = fs::read_to_string(dir.path().join("qm_outbox.ndjson")).unwrap();
    assert!(outbox.contains(&id));
}

#[test]
fn glare_plate_escalates_without_counting() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let (img, gt) = with_artifact(4, ArtifactKind::Glare, 0.8);
    let id = submit(&o, &img, Some(gt), "r1");
    let s = o.process_plate(&id).unwrap();
    assert_eq!(s.state, StateKind::Escalated);
    let esc = s.escalation.clone().unwrap();
    assert_eq!((esc.cause, esc.reason.as_str()), (EscalationCause::Invalid, "glare"));
    assert_eq!(s.counter_verdicts().count(), 0);
    assert!(s.decision.is_none());
    let q = o.review_queue();
    assert_eq!(q.len(), 1);
    assert_eq!(q[0].screener_reason.as_deref(), Some("glare"));
    assert_eq!((q[0].count_a, q[0].count_b), (None, None));
}

#[test]
fn disagreement_escalates_and_expert_closes_it() {
    let dir = tempfile::tempdir().unwrap();
    let o = disagreeing_orchestrator(dir.path());
    let (img, _) = colonies_at(1, &[(252.5, 256.0, 8.0), (259.5, 256.0, 8.0)]);
    let id = submit(&o, &img, None, "r1");
    let s = o.process_plate(&id).unwrap();
    assert_eq!(s.state, StateKind::Escalated);
    let d = s.decision.unwrap();
    assert_eq!((d.count_a, d.count_b), (2, 1));
    assert_eq!(s.escalation.as_ref().unwrap().cause, EscalationCause::Mismatch);
    assert!(s.escalation.as_ref().unwrap().reason.contains("50.0%"));

    let item = &o.review_queue()[0];
    assert_eq!((item.count_a, item.count_b, item.relative_delta), (Some(2), Some(1), Some(0.5)));

    let done = o.submit_expert_verdict(verdict(&id, 2, Quality::Valid)).unwrap();
    assert_eq!(done.state, StateKind::HumanApproved);
    assert_eq!(done.final_count(), Some(2));
    assert!(o.review_queue().is_empty());
    let fb = o.feedback().unwrap();
    assert_eq!(fb.len(), 1);
    assert_eq!((fb[0].count_a, fb[0].count_b, fb[0].verdict.final_count), (Some(2), Some(1), 2));

    let again = o.submit_expert_verdict(verdict(&id, 2, Quality::Valid)).unwrap_err();
    assert!(matches!(again, Error::Conflict(_)));
}

#[test]
fn expert_rejection_forces_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let (img, _) = with_artifact(8, ArtifactKind::Condensation, 0.9);
    let id = submit(&o, &img, None, "r1");
    o.process_plate(&id).unwrap();
    let bad = o.submit_expert_verdict(verdict(&id, 3, Quality::Invalid)).unwrap_err();
    assert!(matches!(bad, Error::Validation { .. }));
    let s = o.submit_expert_verdict(verdict(&id, 0, Quality::Invalid)).unwrap();
    assert_eq!(s.state, StateKind::HumanRejected);
    assert_eq!(s.final_count(), Some(0));
}

#[test]
fn illegal_moves_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let (img, _) = clean(30);
    let id = submit(&o, &img, None, "r1");
    let early = o.submit_expert_verdict(verdict(&id, 1, Quality::Valid)).unwrap_err();
    assert!(matches!(early, Error::IllegalTransition { .. }));
    o.process_plate(&id).unwrap();
    let twice = o.process_plate(&id).unwrap_err();
    assert!(matches!(twice, Error::IllegalTransition { .. }));
    let late = o.submit_expert_verdict(verdict(&id, 1, Quality::Valid)).unwrap_err();
    assert!(matches!(late, Error::IllegalTransition { ref from, .. } if from == "AUTO_APPROVED"));
    assert!(matches!(o.process_plate("nope"), Err(Error::NotFound { .. })));
    assert!(matches!(
        o.submit_expert_verdict(verdict("nope", 1, Quality::Valid)),
        Err(Error::NotFound { .. })
    ));
}

#[test]
fn resubmission_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let (img, _) = clean(31);
    let bytes = png(&img);
    let (a, created) = o.submit_plate(&bytes, Submission::default()).unwrap();
    assert!(created);
    let audit_len = o.store().audit_len();
    let (b, created) = o.submit_plate(&bytes, Submission::default()).unwrap();
    assert!(!created);
    assert_eq!(a, b);
    assert_eq!(o.store().audit_len(), audit_len);
    assert!(o.submit_plate(b"not a png", Submission::default()).is_err());
}

#[test]
fn run_stats_partition_and_savings() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    for seed in 0..6 {
        let (img, gt) = clean(100 + seed);
        submit(&o, &img, Some(gt), "mix");
    }
    for seed in 0..4 {
        let (img, gt) = with_artifact(200 + seed, ArtifactKind::DEFECTS[seed as usize], 0.9);
        submit(&o, &img, Some(gt), "mix");
    }
    for id in o.run_plates("mix").unwrap() {
        o.process_plate(&id).unwrap();
    }
    let st = o.run_stats("mix").unwrap();
    assert_eq!(st.plates_total, 10);
    assert_eq!(st.escalated_invalid, 4);
    assert!(st.partition_holds());
    assert_eq!(st.counter_invocations, 12);
    assert_eq!(st.counter_invocations_without_prescreen, 20);
    assert!((st.savings_fraction - 0.4).abs() < 1e-12);
    assert!(st.p95_latency_ms >= st.mean_latency_ms * 0.0 && st.max_latency_ms >= st.p95_latency_ms);
    assert!(matches!(o.run_stats("missing"), Err(Error::NotFound { .. })));

    let report = o.run_report("mix").unwrap();
    assert_eq!(report.screening[0].samples, 10);
    assert_eq!(report.screening[0].rates.npdr, 1.0);
    assert_eq!(report.detection[0].summary.truths as u32, {
        let mut n = 0;
        for id in o.run_plates("mix").unwrap() {
            let r = o.plate_record(&id).unwrap();
            if r.ground_truth.as_ref().unwrap().valid {
                n += r.ground_truth.unwrap().true_count;
            }
        }
        n
    });
}

#[test]
fn export_needs_a_finished_run_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let (img, _) = clean(40);
    let ok_id = submit(&o, &img, None, "exp");
    let (img, _) = with_artifact(41, ArtifactKind::Blur, 0.9);
    let bad_id = submit(&o, &img, None, "exp");
    let (img, _) = with_artifact(42, ArtifactKind::Glare, 0.9);
    let rej_id = submit(&o, &img, None, "exp");
    for id in [&ok_id, &bad_id, &rej_id] {
        o.process_plate(id).unwrap();
    }
    let err = o.export_qm("exp", out.path()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));

    let mut v = verdict(&bad_id, 5, Quality::Valid);
    v.final_class_counts = ClassCounts { bacteria: 4, mold: 1 };
    o.submit_expert_verdict(v).unwrap();
    o.submit_expert_verdict(verdict(&rej_id, 0, Quality::Invalid)).unwrap();

    let first = o.export_qm("exp", out.path()).unwrap();
    assert_eq!(first.records, 2);
    let (j1, c1) = (fs::read(&first.ndjson).unwrap(), fs::read(&first.csv).unwrap());
    let second = o.export_qm("exp", out.path()).unwrap();
    assert_eq!((j1, c1), (fs::read(&second.ndjson).unwrap(), fs::read(&second.csv).unwrap()));

    let text = fs::read_to_string(&first.ndjson).unwrap();
    let human = text.lines().find(|l| l.contains(&bad_id)).unwrap();
    assert!(human.contains(r#""disposition":"human""#) && human.contains(r#""mold":1"#));
    assert!(!text.contains(&rej_id));

    o.open_run("empty").unwrap();
    let e = o.export_qm("empty", out.path()).unwrap();
    assert_eq!(e.records, 0);
    assert!(fs::read(&e.ndjson).unwrap().is_empty());
    assert_eq!(fs::read_to_string(&e.csv).unwrap().lines().count(), 1);
    assert!(matches!(o.export_qm("never", out.path()), Err(Error::NotFound { .. })));
}

#[test]
fn reopen_replays_the_same_states() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let o = disagreeing_orchestrator(dir.path());
        let (img, _) = colonies_at(2, &[(252.5, 256.0, 8.0), (259.5, 256.0, 8.0)]);
        let id = submit(&o, &img, None, "r");
        o.process_plate(&id).unwrap();
        o.submit_expert_verdict(verdict(&id, 2, Quality::Valid)).unwrap();
        let (img, _) = clean(50);
        let id = submit(&o, &img, None, "r");
        o.process_plate(&id).unwrap();
        let (img, _) = clean(51);
        submit(&o, &img, None, "r");
        o.states()
    };
    let o = disagreeing_orchestrator(dir.path());
    assert_eq!(o.states(), before);
    assert_eq!(replay_states(&o.store().read_audit().unwrap()).unwrap(), before);
    assert!(o.store().verify_audit().unwrap().ok);
    assert_eq!(o.run_plates("r").unwrap().len(), 3);
}

#[test]
fn latency_budget_overrun_escalates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        latency_budget_ms: 1,
        ..PipelineConfig::default()
    };
    let o = Orchestrator::open(dir.path(), cfg).unwrap();
    let (img, _) = clean(60);
    let id = submit(&o, &img, None, "r");
    let s = o.process_plate(&id).unwrap();
    assert_eq!(s.state, StateKind::Escalated);
    let esc = s.escalation.unwrap();
    assert_eq!(esc.cause, EscalationCause::Latency);
    assert!(esc.reason.starts_with("latency"));
    assert!(s.decision.is_none());
    assert!(o.run_stats("r").unwrap().partition_holds());
}

#[test]
fn promoted_classifier_labels_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    let data = synthetic_training_set(3, 20).unwrap();
    let (_, record) = train_and_promote(&data, &CandidateId::ALL, 3, Utc::now()).unwrap();
    o.record_promotion(record.clone()).unwrap();
    let (img, gt) = clean(70);
    let id = submit(&o, &img, None, "r");
    let s = o.process_plate(&id).unwrap();
    assert!(s.boxes.iter().all(|b| b.class != BoxClass::Unknown));
    assert_eq!(s.class_counts().total(), gt.true_count);
    drop(o);
    let o = orchestrator(dir.path());
    assert_eq!(o.promotions().len(), 1);
    assert_eq!(o.classifier(), record.model);
    assert!(o.plate(&id).unwrap().verdict(AgentKind::CounterA).unwrap().reason.contains(record.candidate_id.as_str()));
}

#[test]
fn recalibration_is_two_phase() {
    let dir = tempfile::tempdir().unwrap();
    let o = orchestrator(dir.path());
    assert!(matches!(o.propose_recalibration(), Err(Error::InsufficientData { .. })));
    // Lightly blurred plates are still countable; the screener flags them and
    // the reviewer overrules it with the true count.
    let mut reviewed = 0;
    for seed in 0..40 {
        let (img, gt) = with_artifact(500 + seed, ArtifactKind::Blur, 0.25);
        let id = submit(&o, &img, Some(gt.clone()), "cal");
        if o.process_plate(&id).unwrap().state == StateKind::Escalated {
            o.submit_expert_verdict(verdict(&id, gt.true_count, Quality::Valid)).unwrap();
            reviewed += 1;
        }
        if reviewed == MIN_FEEDBACK_ROWS {
            break;
        }
    }
    assert_eq!(reviewed, MIN_FEEDBACK_ROWS);

    let before = o.config();
    let up = o.propose_recalibration().unwrap();
    assert_eq!(up.rows, MIN_FEEDBACK_ROWS);
    assert!(up.loss_after.mean <= up.loss_before.mean);
    assert_eq!(up.from_version, before.version);
    assert_eq!(o.config(), before, "a proposal must not apply itself");

    let applied = o.apply_recalibration(up.version).unwrap();
    assert_eq!(applied.counter_a.threshold, up.counter_a_threshold.after);
    assert_eq!(applied.counter_b.peak_height, up.counter_b_peak_height.after);
    assert_eq!(applied.version, before.version + u32::from(up.changed));
    assert!(matches!(o.apply_recalibration(999), Err(Error::NotFound { .. })));
    drop(o);
    let o = orchestrator(dir.path());
    assert_eq!(o.config().counter_a.threshold, up.counter_a_threshold.after);
    assert_eq!(o.config().version, applied.version);
}
