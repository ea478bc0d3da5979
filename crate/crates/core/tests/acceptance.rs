//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any of them fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use cfuqc_core::agents::{count_primary, count_secondary, screen, AgentKind, CounterAConfig, CounterBConfig, Quality, ScreenerConfig};
use cfuqc_core::config::PipelineConfig;
use cfuqc_core::metrics::{consensus, map_at_iou, screen_rates, Outcome, ScreenConfusion, Table3Row};
use cfuqc_core::orchestrator::{recalibrate, replay_states, ExpertVerdict, FeedbackSample, Orchestrator, Submission};
use cfuqc_core::registry::{
    evaluate_candidates, promote, CandidateId, ColonyFeatures, LabeledFeatures,
};
use cfuqc_core::store::{verify_bytes, EventDraft, Store, AUDIT_FILE};
use cfuqc_core::synthgen::{generate_plate, plan_batch, render_plate, BatchPlan, Colony, GroundTruth, SceneSpec};
use cfuqc_core::vision::BBox;
use cfuqc_core::{ClassCounts, ColonyClass, PlateImage};
use chrono::Utc;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("screening rate identities (N=451)", screening_identities),
        ("count validation arithmetic (N=1152)", count_validation_arithmetic),
        ("consensus gate over 10^4 pairs", consensus_gate),
        ("mAP equals brute-force oracle", map_oracle),
        ("clean-suite counting", clean_suite),
        ("bypass accounting", bypass_accounting),
        ("workflow soundness", workflow_soundness),
        ("audit tamper detection", audit_tamper),
        ("recalibration monotonicity", recalibration_monotonicity),
        ("registry selection", registry_selection),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// Screening confusions over 451 plates (251 valid, 200 invalid) whose rates
// round to each published (FNR, FPR) pair.
fn screening_identities() -> Check {
    const ROWS: [(&str, f64, f64, f64, f64); 5] = [
        ("GPT-4o", 0.05, 0.95, 0.30, 0.70),
        ("Pixtral", 0.23, 0.77, 0.01, 0.99),
        ("Qwen2-Quant.", 0.24, 0.76, 0.01, 0.99),
        ("Qwen2-VL-7B", 0.14, 0.86, 0.08, 0.92),
        ("Qwen-VL-72B", 0.23, 0.77, 0.00, 1.00),
    ];
    let (pos, neg) = (251u64, 200u64);
    for (name, fnr, dr, fpr, npdr) in ROWS {
        let fn_ = (fnr * pos as f64).round() as u64;
        let fp = (fpr * neg as f64).round() as u64;
        let c = ScreenConfusion { tp: pos - fn_, fn_, fp, tn: neg - fp };
        ensure(c.tp + c.fn_ + c.fp + c.tn == 451, || format!("{name}: confusion does not sum to 451"))?;
        let r = screen_rates(&c).map_err(|e| e.to_string())?;
        for (label, got, want) in [("FNR", r.fnr, fnr), ("DR", r.dr, dr), ("FPR", r.fpr, fpr), ("NPDR", r.npdr, npdr)] {
            ensure((got - want).abs() <= 0.005, || format!("{name} {label} {got:.4} vs {want}"))?;
        }
    }
    Ok("5 rows within 0.005".into())
}

fn count_validation_arithmetic() -> Check {
    const N: u64 = 1152;
    let rows = [
        ("Pixtral", 313, 839, 27, 73),
        ("Qwen2-Quant.", 317, 835, 28, 72),
        ("Qwen2-VL-7B", 297, 854, 26, 74),
        ("Qwen-VL-72B", 308, 843, 27, 73),
    ];
    for (name, m, mm, appr, verify) in rows {
        let row = Table3Row::new(name, m, mm, N).map_err(|e| e.to_string())?;
        ensure((row.approval_pct, row.verify_pct) == (appr, verify), || {
            format!("{name}: {}%/{}% vs {appr}%/{verify}%", row.approval_pct, row.verify_pct)
        })?;
        ensure(row.consistent, || format!("{name} flagged inconsistent"))?;
    }
    let gpt = Table3Row::new("GPT-4o", 800, 573, N).map_err(|e| e.to_string())?;
    ensure(gpt.verify_pct == 50, || format!("GPT-4o verify {}%", gpt.verify_pct))?;
    ensure(!gpt.consistent, || "800 + 573 > 1152 was not flagged".into())?;
    Ok("approval 27/28/26/27%, verify 50%, 800+573 > 1152 flagged".into())
}

fn consensus_gate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let d = 0.05;
    for _ in 0..10_000 {
        let (a, b) = (rng.random_range(0..3000i64), rng.random_range(0..3000i64));
        let x = consensus(a, b, d).map_err(|e| e.to_string())?;
        let y = consensus(b, a, d).map_err(|e| e.to_string())?;
        ensure(x.outcome == y.outcome, || format!("asymmetric at ({a}, {b})"))?;
        // |a - b| / max(a, b, 1) <= 1/20, in integers.
        let approve = 20 * (a - b).abs() <= a.max(b).max(1);
        let expect = if approve { Outcome::AutoApprove } else { Outcome::Escalate };
        ensure(x.outcome == expect, || format!("({a}, {b}) gave {:?}", x.outcome))?;
        if a.max(b) >= 1 {
            let k = rng.random_range(2..50i64);
            let z = consensus(k * a, k * b, d).map_err(|e| e.to_string())?;
            ensure(z.outcome == x.outcome, || format!("scaling ({a}, {b}) by {k} changed the outcome"))?;
        }
    }
    let edge = |a, b| consensus(a, b, d).map(|c| c.outcome).map_err(|e| e.to_string());
    ensure(edge(20, 21)? == Outcome::AutoApprove, || "(20, 21) escalated".into())?;
    ensure(edge(100, 110)? == Outcome::Escalate, || "(100, 110) approved".into())?;
    ensure(edge(0, 0)? == Outcome::AutoApprove, || "(0, 0) escalated".into())?;
    ensure(consensus(-1, 3, d).is_err(), || "negative count accepted".into())?;
    Ok("symmetry, rational oracle, scaling, (20,21) approve, (100,110) escalate".into())
}

// Integer boxes keep every IoU an exact rational.
#[derive(Clone, Copy)]
struct IBox {
    x0: i64,
    y0: i64,
    x1: i64,
    y1: i64,
    score_tenths: i64,
}

impl IBox {
    fn to_bbox(self) -> BBox {
        BBox::new(self.x0 as f64, self.y0 as f64, self.x1 as f64, self.y1 as f64).with_score(self.score_tenths as f64 / 10.0)
    }
}

fn exact_iou(a: &IBox, b: &IBox) -> Ratio<i64> {
    let ix = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0);
    let iy = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0);
    let inter = ix * iy;
    let area = |q: &IBox| (q.x1 - q.x0) * (q.y1 - q.y0);
    Ratio::new(inter, area(a) + area(b) - inter)
}

struct OracleResult {
    ap: Ratio<i64>,
    tp: usize,
}

fn oracle_ap(dets: &[Vec<IBox>], truths: &[Vec<IBox>]) -> OracleResult {
    let cut = Ratio::new(1, 2);
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (i, ds) in dets.iter().enumerate() {
        for d in 0..ds.len() {
            order.push((i, d));
        }
    }
    // Stable sort: equal scores keep image, then detection, order.
    order.sort_by_key(|&(i, d)| -dets[i][d].score_tenths);
    let mut used: Vec<Vec<bool>> = truths.iter().map(|t| vec![false; t.len()]).collect();
    let mut hits = Vec::new();
    for &(i, d) in &order {
        let candidates: Vec<(usize, Ratio<i64>)> = (0..truths[i].len())
            .filter(|&t| !used[i][t])
            .map(|t| (t, exact_iou(&dets[i][d], &truths[i][t])))
            .filter(|(_, o)| *o >= cut)
            .collect();
        let best = candidates.iter().max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0))).map(|c| c.0);
        if let Some(t) = best {
            used[i][t] = true;
        }
        hits.push(best.is_some());
    }
    let n_truth: usize = truths.iter().map(Vec::len).sum();
    let tp = hits.iter().filter(|&&h| h).count();
    if n_truth == 0 {
        let one = if hits.is_empty() { 1 } else { 0 };
        return OracleResult { ap: Ratio::from_integer(one), tp };
    }
    // Every PR point, then for each recall level the best precision at or beyond it.
    let mut points = Vec::new();
    let mut cum = 0i64;
    for (k, &h) in hits.iter().enumerate() {
        cum += h as i64;
        points.push((Ratio::new(cum, n_truth as i64), Ratio::new(cum, k as i64 + 1)));
    }
    let mut levels: Vec<Ratio<i64>> = points.iter().map(|p| p.0).filter(|r| *r > Ratio::from_integer(0)).collect();
    levels.sort();
    levels.dedup();
    let mut ap = Ratio::from_integer(0);
    let mut prev = Ratio::from_integer(0);
    for r in levels {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).max().unwrap();
        ap += (r - prev) * best;
        prev = r;
    }
    OracleResult { ap, tp }
}

fn random_box(rng: &mut ChaCha8Rng) -> IBox {
    let (x0, y0) = (rng.random_range(0..16), rng.random_range(0..16));
    IBox {
        x0,
        y0,
        x1: x0 + rng.random_range(2..10),
        y1: y0 + rng.random_range(2..10),
        score_tenths: rng.random_range(1..=10),
    }
}

fn jitter(rng: &mut ChaCha8Rng, b: &IBox) -> IBox {
    let mut j = |v: i64| v + rng.random_range(-1..=1);
    let (x0, y0) = (j(b.x0), j(b.y0));
    let (x1, y1) = (j(b.x1).max(x0 + 1), j(b.y1).max(y0 + 1));
    IBox { x0, y0, x1, y1, score_tenths: rng.random_range(1..=10) }
}

fn map_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for inst in 0..100 {
        let images = rng.random_range(1..4);
        let mut dets = Vec::new();
        let mut truths = Vec::new();
        for _ in 0..images {
            let t: Vec<IBox> = (0..rng.random_range(0..=5)).map(|_| random_box(&mut rng)).collect();
            let mut d = Vec::new();
            for _ in 0..rng.random_range(0..=5) {
                if !t.is_empty() && rng.random_bool(0.6) {
                    let src = t[rng.random_range(0..t.len())];
                    d.push(jitter(&mut rng, &src));
                } else {
                    d.push(random_box(&mut rng));
                }
            }
            dets.push(d);
            truths.push(t);
        }
        let want = oracle_ap(&dets, &truths);
        let as_f = |v: &Vec<Vec<IBox>>| -> Vec<Vec<BBox>> { v.iter().map(|b| b.iter().map(|x| x.to_bbox()).collect()).collect() };
        let got = map_at_iou(&as_f(&dets), &as_f(&truths), 0.5).map_err(|e| e.to_string())?;
        let want_ap = *want.ap.numer() as f64 / *want.ap.denom() as f64;
        ensure(got.true_positives as usize == want.tp, || format!("instance {inst}: tp {} vs {}", got.true_positives, want.tp))?;
        ensure((got.map - want_ap).abs() <= 1e-12, || format!("instance {inst}: AP {} vs {}", got.map, want.ap))?;
    }
    Ok("100 instances, matching identical, AP within 1e-12 of the exact rational".into())
}

fn clean_suite() -> Check {
    let screener = ScreenerConfig::default();
    let (mut exact_a, mut exact_b) = (0, 0);
    let (mut all_dets, mut all_truths) = (Vec::new(), Vec::new());
    let n = 200;
    for seed in 0..n {
        let (img, gt) = generate_plate(&SceneSpec::with_seed(10_000 + seed)).map_err(|e| e.to_string())?;
        let v = screen("clean", &img, &screener).map_err(|e| e.to_string())?;
        if v.quality != Quality::Valid {
            all_dets.push(Vec::new());
            all_truths.push(gt.colonies.iter().map(Colony::bbox).collect());
            continue;
        }
        let (a, boxes) = count_primary(&img, &v, &CounterAConfig::default(), None).map_err(|e| e.to_string())?;
        let b = count_secondary(&img, &v, &CounterBConfig::default()).map_err(|e| e.to_string())?;
        exact_a += (a.count == gt.true_count) as u32;
        exact_b += (b.count == gt.true_count) as u32;
        all_dets.push(boxes);
        all_truths.push(gt.colonies.iter().map(Colony::bbox).collect::<Vec<_>>());
    }
    let map = map_at_iou(&all_dets, &all_truths, 0.5).map_err(|e| e.to_string())?.map;
    let (ra, rb) = (exact_a as f64 / n as f64, exact_b as f64 / n as f64);
    let detail = format!("counter_a exact {:.1}%, counter_b exact {:.1}%, mAP@0.5 {map:.4}", 100.0 * ra, 100.0 * rb);
    ensure(ra >= 0.99 && rb >= 0.99 && map >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn run_batch(o: &Orchestrator, run: &str, plan: &BatchPlan) -> Result<Vec<(String, GroundTruth)>, String> {
    let entries = plan_batch(plan).map_err(|e| e.to_string())?;
    let mut ids = Vec::with_capacity(entries.len());
    for e in entries {
        let (img, gt) = generate_plate(&e.spec).map_err(|e| e.to_string())?;
        let sub = Submission {
            run_id: Some(run.into()),
            label: Some(e.plate_id.clone()),
            ground_truth: Some(gt.clone()),
        };
        let (rec, _) = o.submit_plate(&img.to_png().map_err(|e| e.to_string())?, sub).map_err(|e| e.to_string())?;
        o.process_plate(&rec.plate_id).map_err(|e| e.to_string())?;
        ids.push((rec.plate_id, gt));
    }
    Ok(ids)
}

fn bypass_accounting() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let o = Orchestrator::open(dir.path(), PipelineConfig::default()).map_err(|e| e.to_string())?;
    run_batch(&o, "bypass", &BatchPlan::new(404, 500, 0.4))?;
    let s = o.run_stats("bypass").map_err(|e| e.to_string())?;
    let detail = format!(
        "{} counter calls vs {} without prescreen, savings {:.3}",
        s.counter_invocations, s.counter_invocations_without_prescreen, s.savings_fraction
    );
    ensure((s.savings_fraction - 0.40).abs() <= 0.02, || detail.clone())?;
    Ok(detail)
}

fn expert(plate_id: &str, gt: &GroundTruth) -> ExpertVerdict {
    ExpertVerdict {
        plate_id: plate_id.into(),
        reviewer_id: "qa-1".into(),
        final_count: if gt.valid { gt.true_count } else { 0 },
        final_quality: if gt.valid { Quality::Valid } else { Quality::Invalid },
        final_class_counts: ClassCounts::default(),
        note: String::new(),
        timestamp: Utc::now(),
    }
}

fn workflow_soundness() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let o = Orchestrator::open(dir.path(), PipelineConfig::default()).map_err(|e| e.to_string())?;
    let mut plan = BatchPlan::new(1000, 1000, 0.3);
    plan.base.overlap_allowed = true;
    let plates = run_batch(&o, "load", &plan)?;
    let truth: BTreeMap<String, GroundTruth> = plates.into_iter().collect();
    for item in o.review_queue() {
        o.submit_expert_verdict(expert(&item.plate_id, &truth[&item.plate_id])).map_err(|e| e.to_string())?;
    }
    let states = o.states();
    ensure(states.len() == 1000, || format!("{} plates tracked", states.len()))?;
    let mut max_ms: f64 = 0.0;
    for (id, s) in &states {
        ensure(s.state.is_terminal(), || format!("{id} left in {}", s.state.as_str()))?;
        let screened_invalid = s.verdict(AgentKind::Screener).is_some_and(|v| v.quality == Quality::Invalid);
        ensure(!screened_invalid || s.counter_verdicts().count() == 0, || format!("{id} counted after failing screening"))?;
        let ms = s.pipeline_ms().ok_or_else(|| format!("{id} has no latency"))?;
        max_ms = max_ms.max(ms);
    }
    ensure(max_ms < 10_000.0, || format!("slowest plate {max_ms:.0} ms"))?;

    // Terminal states refuse further moves and stay as they were.
    for (id, s) in states.iter().take(50) {
        ensure(o.process_plate(id).is_err(), || format!("{id} reprocessed"))?;
        ensure(o.submit_expert_verdict(expert(id, &truth[id])).is_err(), || format!("{id} re-adjudicated"))?;
        ensure(o.plate(id).map_err(|e| e.to_string())? == *s, || format!("{id} changed"))?;
    }

    let replayed = replay_states(&o.store().read_audit().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(replayed == states, || "audit replay differs from live state".into())?;
    drop(o);
    let reopened = Orchestrator::open(dir.path(), PipelineConfig::default()).map_err(|e| e.to_string())?;
    ensure(reopened.states() == states, || "reopened store differs".into())?;
    let stats = reopened.run_stats("load").map_err(|e| e.to_string())?;
    ensure(stats.partition_holds(), || "run stats do not partition".into())?;
    Ok(format!(
        "1000 terminal ({} auto, {} human-approved, {} rejected), replay exact, max latency {max_ms:.0} ms",
        stats.auto_approved, stats.human_approved, stats.human_rejected
    ))
}

fn audit_tamper() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    for i in 0..50 {
        let payload = json!({"plate_id": format!("p{i:03}"), "count": i * 7, "note": "tamper fixture"});
        store.append_audit(EventDraft::new("system", "tick", payload)).map_err(|e| e.to_string())?;
    }
    let bytes = std::fs::read(dir.path().join(AUDIT_FILE)).map_err(|e| e.to_string())?;
    ensure(verify_bytes(&bytes, 50).ok, || "pristine log fails".into())?;
    let mut line_of = Vec::with_capacity(bytes.len());
    let mut line = 0u64;
    for &b in &bytes {
        line_of.push(line);
        if b == b'\n' {
            line += 1;
        }
    }
    let mut flips = 0;
    for mask in [0x01u8, 0x80] {
        for i in 0..bytes.len() {
            let mut t = bytes.clone();
            t[i] ^= mask;
            let r = verify_bytes(&t, 50);
            ensure(!r.ok && r.first_bad_sequence_no == Some(line_of[i]), || {
                format!("flip {mask:#04x} at byte {i} (event {}) gave {:?}", line_of[i], r.first_bad_sequence_no)
            })?;
            flips += 1;
        }
    }
    Ok(format!("{flips} single-byte flips over 50 events, all located"))
}

fn colonies_plate(seed: u64, discs: &[(f64, f64, f64)]) -> Result<(PlateImage, GroundTruth), String> {
    let spec = SceneSpec {
        overlap_allowed: true,
        ..SceneSpec::with_seed(seed)
    };
    let cols = discs
        .iter()
        .map(|&(x, y, r)| Colony { center: (x, y), radius: r, class: ColonyClass::Bacteria })
        .collect();
    render_plate(&spec, cols).map_err(|e| e.to_string())
}

fn recalibration_monotonicity() -> Check {
    let cfg = PipelineConfig::default();
    // Deeply fused pairs: the default threshold merges each pair, so both
    // counters undercount.
    let mut biased = Vec::new();
    for seed in 0..30u64 {
        let discs = [
            (172.5, 256.0, 8.0),
            (179.5, 256.0, 8.0),
            (332.5, 256.0, 8.0),
            (339.5, 256.0, 8.0),
            (256.0, 176.0, 10.0),
            (256.0, 336.0, 10.0),
        ];
        let (image, gt) = colonies_plate(seed, &discs)?;
        biased.push(FeedbackSample { plate_id: format!("b{seed}"), image, expert_count: gt.true_count });
    }
    let up = recalibrate(&biased, &cfg, None).map_err(|e| e.to_string())?;
    let (b0, b1) = (up.loss_before.mean, up.loss_after.mean);
    ensure(b1 < b0, || format!("biased loss {b0:.4} -> {b1:.4}"))?;

    let mut unbiased = Vec::new();
    for seed in 0..30u64 {
        let (image, gt) = generate_plate(&SceneSpec::with_seed(20_000 + seed)).map_err(|e| e.to_string())?;
        unbiased.push(FeedbackSample { plate_id: format!("u{seed}"), image, expert_count: gt.true_count });
    }
    let un = recalibrate(&unbiased, &cfg, None).map_err(|e| e.to_string())?;
    let (u0, u1) = (un.loss_before.mean, un.loss_after.mean);
    ensure(u1 <= u0, || format!("unbiased loss {u0:.4} -> {u1:.4}"))?;
    Ok(format!(
        "biased {b0:.4} -> {b1:.4} (threshold {} -> {}), unbiased {u0:.4} -> {u1:.4}",
        up.counter_a_threshold.before, up.counter_a_threshold.after
    ))
}

fn separable_fixture(seed: u64, n_per_class: usize) -> Vec<LabeledFeatures> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for class in ColonyClass::ALL {
        let mold = class == ColonyClass::Mold;
        for _ in 0..n_per_class {
            let area = if mold { rng.random_range(1500.0..2500.0) } else { rng.random_range(150.0..600.0) };
            let features = ColonyFeatures {
                area,
                circularity: if mold { rng.random_range(0.55..0.8) } else { rng.random_range(0.95..1.05) },
                mean_intensity: rng.random_range(200.0..240.0),
                intensity_variance: if mold { rng.random_range(300.0..500.0) } else { rng.random_range(10.0..80.0) },
                edge_density: if mold { rng.random_range(20.0..40.0) } else { rng.random_range(1.0..6.0) },
            };
            out.push(LabeledFeatures { features, label: class });
        }
    }
    out
}

fn registry_selection() -> Check {
    let data = separable_fixture(5, 100);
    let reports = evaluate_candidates(&data, &CandidateId::ALL, 9).map_err(|e| e.to_string())?;
    let now = Utc::now();
    let chosen = promote(&reports, now).map_err(|e| e.to_string())?;
    ensure(chosen.report.balanced_f1 == 1.0, || format!("promoted F1 {}", chosen.report.balanced_f1))?;

    // Same data, same seed: same choice and scores; report order is irrelevant.
    let again = evaluate_candidates(&data, &CandidateId::ALL, 9).map_err(|e| e.to_string())?;
    let scores = |rs: &[cfuqc_core::registry::CandidateReport]| -> Vec<(CandidateId, f64, f64)> {
        rs.iter().map(|r| (r.candidate_id, r.balanced_f1, r.roc_auc)).collect()
    };
    ensure(scores(&reports) == scores(&again), || "cross-validation is not deterministic".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let mut shuffled = reports.clone();
        shuffled.shuffle(&mut rng);
        let pick = promote(&shuffled, now).map_err(|e| e.to_string())?;
        ensure(pick.candidate_id == chosen.candidate_id, || "promotion depends on report order".into())?;
    }

    let mut null = data.clone();
    let mut labels: Vec<ColonyClass> = null.iter().map(|d| d.label).collect();
    labels.shuffle(&mut rng);
    for (d, l) in null.iter_mut().zip(labels) {
        d.label = l;
    }
    let null_reports = evaluate_candidates(&null, &CandidateId::ALL, 9).map_err(|e| e.to_string())?;
    for r in &null_reports {
        ensure((r.roc_auc - 0.5).abs() <= 0.15, || format!("{} null AUC {:.3}", r.candidate_id.as_str(), r.roc_auc))?;
    }
    let aucs: Vec<String> = null_reports.iter().map(|r| format!("{:.2}", r.roc_auc)).collect();
    Ok(format!(
        "promoted {} with F1 1.0, deterministic, order-free; null AUCs [{}]",
        chosen.candidate_id.as_str(),
        aucs.join(", ")
    ))
}
