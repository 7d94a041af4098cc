//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::time::Instant;

use cad_core::coreset::{covering_radius, greedy_kcenter, random_sample, EmbeddingPool, MemoryBank, StepKind};
use cad_core::distance::{pairwise_distances, reference::naive_pairwise};
use cad_core::metrics::{aupr, auroc, forgetting, MetricKind, MetricMatrix, ScoredSet};
use cad_core::pipeline::{
    generate_synthetic, run_sequence, RunConfig, SequenceRunner, SyntheticSpec, REPORT_JSON_FILE, REPORT_TABLE_FILE,
};
use cad_core::scoring::{image_score_detail, score_patches};
use cad_core::tensor_io::EmbeddingBatch;
use common::*;
use ndarray::Array2;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let mut r = rng(1);
    let x = gaussian(&mut r, 512, 128, 1.0);
    let c = gaussian(&mut r, 1024, 128, 1.0);
    let start = Instant::now();
    let fast = pairwise_distances(x.view(), c.view()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let slow = naive_pairwise(x.view(), c.view());
    let err = fast
        .values()
        .iter()
        .zip(slow.iter())
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0, f64::max);
    outcome(err <= 1e-4 && secs < 5.0, format!("max |err| = {err:.3e} (<= 1e-4), {secs:.3} s (< 5 s)"))
}

/// Streams 100 seeded sequences through both implementations. Returns
/// `(mismatching streams, monotonicity violations, replacement steps, seconds)`.
fn coreset_streams() -> (usize, usize, usize, f64) {
    let start = Instant::now();
    let (mut mismatches, mut violations, mut replacements) = (0, 0, 0);
    for seed in 0..100 {
        let (dim, capacity, batches) = random_stream(seed);
        let mut bank = MemoryBank::new(capacity, dim).unwrap();
        let mut reference = ReferenceBank::new(capacity);
        let mut floor: Option<f32> = None;
        let mut same = true;
        for b in &batches {
            let stats = bank
                .update_observed(&batch(b.clone()), |step| {
                    if step.kind == StepKind::Replace {
                        replacements += 1;
                        let after = step.min_pair_after.expect("full bank has a pair");
                        if floor.is_some_and(|f| after < f) || after < step.min_pair_before.unwrap() {
                            violations += 1;
                        }
                        floor = Some(after);
                    }
                })
                .unwrap();
            if bank.is_full() {
                if let Some((d, _, _)) = bank.min_pair() {
                    if floor.is_some_and(|f| d < f) {
                        violations += 1;
                    }
                    floor = Some(d);
                }
            }
            let expected = reference.update(&rows_of(b));
            same &= expected == (stats.inserted, stats.evicted, stats.iterations) && bank_rows(&bank) == reference.rows;
        }
        mismatches += usize::from(!same);
    }
    (mismatches, violations, replacements, start.elapsed().as_secs_f64())
}

fn criterion_4() -> Outcome {
    let (mut incremental_ok, mut random_worse) = (0, 0);
    for seed in 0..100u64 {
        let pool = EmbeddingPool::anonymous(blob_pool(seed, 5000, 10));
        let greedy = covering_radius(&greedy_kcenter(&pool, 64, 0).unwrap(), &pool).unwrap();
        let random = covering_radius(&random_sample(&pool, 64, seed).unwrap(), &pool).unwrap();
        let mut bank = MemoryBank::new(64, 2).unwrap();
        for chunk in batch(pool.embeddings().to_owned()).chunks(784) {
            bank.update(&chunk).unwrap();
        }
        let incremental = covering_radius(&bank, &pool).unwrap();
        incremental_ok += usize::from(incremental <= 1.5 * greedy);
        random_worse += usize::from(random > greedy);
    }
    outcome(
        incremental_ok >= 95 && random_worse >= 95,
        format!("incremental <= 1.5x greedy on {incremental_ok}/100 (>= 95), random > greedy on {random_worse}/100 (>= 95)"),
    )
}

fn pair_count_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &sp) in scores.iter().enumerate().filter(|(i, _)| labels[*i] == 1) {
        let _ = i;
        for (_, &sn) in scores.iter().enumerate().filter(|(j, _)| labels[*j] == 0) {
            pairs += 1.0;
            wins += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

fn threshold_ap(scores: &[f64], labels: &[u8]) -> f64 {
    let positives = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut ap, mut prev_recall) = (0.0, 0.0);
    for t in thresholds {
        let (mut tp, mut predicted) = (0.0, 0.0);
        for (s, l) in scores.iter().zip(labels) {
            if *s >= t {
                predicted += 1.0;
                tp += f64::from(*l);
            }
        }
        let recall = tp / positives;
        ap += (recall - prev_recall) * (tp / predicted);
        prev_recall = recall;
    }
    ap
}

fn criterion_5() -> Outcome {
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.random_range(2..=1000);
        let quantized = r.random_bool(0.5);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.3))).collect();
        labels[0] = 0;
        labels[1] = 1;
        let scores: Vec<f64> = labels
            .iter()
            .map(|&l| {
                let s = r.random::<f64>() + 0.3 * f64::from(l);
                if quantized {
                    (s * 10.0).floor() / 10.0
                } else {
                    s
                }
            })
            .collect();
        let set = ScoredSet::image(scores.clone(), labels.clone()).unwrap();
        worst = worst.max((auroc(&set).unwrap() - pair_count_auroc(&scores, &labels)).abs());
        worst = worst.max((aupr(&set).unwrap() - threshold_ap(&scores, &labels)).abs());
    }
    let auc = auroc(&ScoredSet::image(vec![0.1, 0.4, 0.35, 0.8], vec![0, 0, 1, 1]).unwrap()).unwrap();
    let ap = aupr(&ScoredSet::image(vec![0.9, 0.8, 0.7], vec![1, 0, 1]).unwrap()).unwrap();
    let ap_expected = 0.5 * 1.0 + 0.5 * (2.0 / 3.0);
    outcome(
        worst <= 1e-9 && auc == 0.75 && ap == ap_expected,
        format!("max oracle gap {worst:.2e} (<= 1e-9), worked AUROC {auc}, worked AP {ap:.6}"),
    )
}

struct EndToEnd {
    report_json: String,
    report_table: String,
    bank: MemoryBank,
    cfg: RunConfig,
}

fn synthetic_config(root: &std::path::Path, out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig {
        dataset_root: root.to_path_buf(),
        coreset_capacity: 2000,
        output_dir: Some(out.to_path_buf()),
        ..Default::default()
    };
    cfg.resolve_tasks().unwrap();
    cfg
}

fn end_to_end(cfg: &RunConfig) -> EndToEnd {
    let outcome = run_sequence(cfg.clone()).unwrap();
    let out = cfg.output_dir.as_ref().unwrap();
    EndToEnd {
        report_json: fs::read_to_string(out.join(REPORT_JSON_FILE)).unwrap(),
        report_table: fs::read_to_string(out.join(REPORT_TABLE_FILE)).unwrap(),
        bank: outcome.bank.unwrap(),
        cfg: cfg.clone(),
    }
}

fn criterion_6(tmp: &std::path::Path) -> (Outcome, EndToEnd) {
    let spec = SyntheticSpec::default();
    let start = Instant::now();
    generate_synthetic(tmp.join("data"), &spec).unwrap();
    let cfg = synthetic_config(&tmp.join("data"), &tmp.join("run_a"));
    let run = end_to_end(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let report = cadreport(&run.report_json);
    let finals = &report.image.final_values;
    let fm = report.image.fm().unwrap_or(f64::NAN);
    let pass = spec.anomaly_margin >= 6.0 && finals.iter().all(|&a| a >= 0.99) && fm <= 0.01 && secs < 60.0;
    let detail = format!(
        "I-AUROC after stage 2 = {:?} (>= 0.99), FM = {fm:.4} (<= 0.01), margin {}σ, {secs:.2} s (< 60 s)",
        finals.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
        spec.anomaly_margin
    );
    (outcome(pass, detail), run)
}

fn cadreport(json: &str) -> cad_core::pipeline::MetricReport {
    cad_core::pipeline::MetricReport::from_json(json).unwrap()
}

fn criterion_7() -> Outcome {
    let mut worst: f64 = 0.0;
    for b in [2usize, 3, 5, 9, 16] {
        for radius in [0.5f32, 1.0, 3.0, 10.0] {
            let bank_rows = Array2::from_shape_fn((b, b), |(i, j)| if i == j { radius } else { 0.0 });
            let mut bank = MemoryBank::new(b, b).unwrap();
            bank.update(&batch(bank_rows)).unwrap();
            let x = EmbeddingBatch::new(Array2::zeros((1, b)), Some((1, 1)), "t", "x").unwrap();
            let ps = score_patches(&bank, &x).unwrap();
            let detail = image_score_detail(&bank, &ps, &x, b).unwrap();
            let expected = (1.0 - 1.0 / b as f64) * radius as f64;
            worst = worst.max((detail.score as f64 - expected).abs());
        }
    }
    let mut r = rng(7);
    let mut out_of_range = 0;
    for _ in 0..10_000 {
        let dim = r.random_range(1..=8);
        let m = r.random_range(2..=40);
        let b = r.random_range(2..=m.min(12));
        let (gh, gw) = (r.random_range(1..=4), r.random_range(1..=4));
        let mut bank = MemoryBank::new(m, dim).unwrap();
        bank.update(&batch(gaussian(&mut r, m, dim, 1.0))).unwrap();
        if bank.len() < b {
            continue;
        }
        let x = EmbeddingBatch::new(gaussian(&mut r, gh * gw, dim, 1.5), Some((gh, gw)), "t", "x").unwrap();
        let ps = score_patches(&bank, &x).unwrap();
        let w = image_score_detail(&bank, &ps, &x, b).unwrap().weight;
        out_of_range += usize::from(!(0.0..1.0).contains(&w));
    }
    outcome(
        worst <= 1e-6 && out_of_range == 0,
        format!("symmetric case max |err| = {worst:.2e} (<= 1e-6), w outside [0,1) on {out_of_range}/10000"),
    )
}

fn criterion_8(tmp: &std::path::Path, first: &EndToEnd) -> Outcome {
    let cfg_b = synthetic_config(&first.cfg.dataset_root, &tmp.join("run_b"));
    let second = end_to_end(&cfg_b);
    let rerun_same = second.report_json == first.report_json
        && second.report_table == first.report_table
        && second.bank.snapshot().bitwise_eq(&first.bank.snapshot());

    let cfg_c = synthetic_config(&first.cfg.dataset_root, &tmp.join("run_c"));
    let ckpt = tmp.join("checkpoint");
    let mut runner = SequenceRunner::new(cfg_c.clone()).unwrap();
    runner.run_next_stage().unwrap();
    runner.checkpoint(&ckpt).unwrap();
    drop(runner);
    let mut resumed = SequenceRunner::resume(cfg_c, &ckpt).unwrap();
    resumed.run_to_end().unwrap();
    let resume_same = resumed.report().unwrap().to_json() == first.report_json
        && resumed.bank().unwrap().snapshot().bitwise_eq(&first.bank.snapshot());
    outcome(
        rerun_same && resume_same,
        format!("re-run byte-identical: {rerun_same}, checkpoint/resume identical: {resume_same}"),
    )
}

fn criterion_9() -> Outcome {
    let mm = MetricMatrix::from_rows(MetricKind::ImageAuroc, vec![vec![0.9], vec![0.8, 0.7], vec![0.85, 0.6, 0.95]]).unwrap();
    let f = forgetting(&mm, 3).unwrap();
    let gaps = [(f.per_task[0] - 0.05).abs(), (f.per_task[1] - 0.1).abs(), (f.fm - 0.075).abs()];
    let pass = f.per_task.len() == 2 && gaps.iter().all(|&g| g <= 1e-12);
    outcome(pass, format!("f = {:?}, FM = {} (each within 1e-12)", f.per_task, f.fm))
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(usize, Outcome)> = Vec::new();

    results.push((1, criterion_1()));
    let (mismatches, violations, replacements, secs) = coreset_streams();
    results.push((
        2,
        outcome(
            mismatches == 0 && secs < 30.0,
            format!("{mismatches}/100 streams differ from the reference, {secs:.2} s (< 30 s)"),
        ),
    ));
    results.push((
        3,
        outcome(
            violations == 0 && replacements > 0,
            format!("{violations} violations over {replacements} replacement steps"),
        ),
    ));
    results.push((4, criterion_4()));
    results.push((5, criterion_5()));
    let (c6, run) = criterion_6(tmp.path());
    results.push((6, c6));
    results.push((7, criterion_7()));
    results.push((8, criterion_8(tmp.path(), &run)));
    results.push((9, criterion_9()));

    for (n, o) in &results {
        println!("criterion {n}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
