mod common;

use cad_core::coreset::{
    covering_radius, export_coreset, greedy_kcenter, random_sample, EmbeddingPool, MemoryBank, StepKind,
};
use cad_core::tensor_io::{load_bank, save_bank, EmbeddingBatch, Provenance};
use common::*;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn engine_matches_reference_on_fresh_streams() {
    for seed in 1000..1300 {
        let (dim, capacity, batches) = random_stream(seed);
        let mut bank = MemoryBank::new(capacity, dim).unwrap();
        let mut reference = ReferenceBank::new(capacity);
        for b in &batches {
            let stats = bank.update(&batch(b.clone())).unwrap();
            assert_eq!(reference.update(&rows_of(b)), (stats.inserted, stats.evicted, stats.iterations), "seed {seed}");
            assert_eq!(bank_rows(&bank), reference.rows, "seed {seed}");
        }
    }
}

#[test]
fn cache_and_stats_invariants_hold_after_every_update() {
    for seed in 0..150 {
        let (dim, capacity, batches) = random_stream(seed);
        let mut bank = MemoryBank::new(capacity, dim).unwrap();
        for b in &batches {
            let was_full = bank.is_full();
            let mut within_call: Option<f32> = None;
            let stats = bank
                .update_observed(&batch(b.clone()), |step| {
                    if step.kind == StepKind::Replace {
                        let after = step.min_pair_after.unwrap();
                        assert!(within_call.is_none_or(|f| after >= f));
                        within_call = Some(after);
                    }
                })
                .unwrap();
            assert!(bank.len() <= capacity);
            assert!(stats.iterations >= stats.inserted);
            assert!(stats.iterations <= b.nrows() + bank.len(), "seed {seed}: {stats:?}");
            if was_full {
                assert_eq!(stats.inserted, stats.evicted);
            }
            let rebuilt = bank.rebuilt_nn_cache();
            for (a, r) in bank.nn_cache().iter().zip(&rebuilt) {
                assert!(a.distance == r.distance || (a.distance - r.distance).abs() <= 1e-4, "seed {seed}: {a:?} vs {r:?}");
            }
            if bank.len() >= 2 {
                let (d, i, j) = bank.min_pair().unwrap();
                assert_eq!(cad_core::distance::min_pair(bank.elements()).unwrap(), (d, i, j));
            }
        }
    }
}

#[test]
fn same_stream_gives_identical_bank() {
    let (dim, capacity, batches) = random_stream(42);
    let run = || {
        let mut bank = MemoryBank::new(capacity, dim).unwrap();
        for b in &batches {
            bank.update(&batch(b.clone())).unwrap();
        }
        bank.snapshot()
    };
    assert!(run().bitwise_eq(&run()));
}

#[test]
fn provenance_follows_inserted_rows() {
    let mut bank = MemoryBank::new(3, 1).unwrap();
    let a = EmbeddingBatch::new(Array2::from_shape_vec((2, 1), vec![0.0, 1.0]).unwrap(), None, "a", "img0").unwrap();
    let b = EmbeddingBatch::new(Array2::from_shape_vec((2, 1), vec![10.0, 20.0]).unwrap(), None, "b", "img1").unwrap();
    bank.update(&a).unwrap();
    bank.update(&b).unwrap();
    let export = export_coreset(&bank);
    assert_eq!(export.task_counts.values().sum::<usize>(), 3);
    for (row, prov) in bank.elements().rows().into_iter().zip(bank.provenance()) {
        let expected = if row[0] >= 10.0 { Provenance::new("b", "img1") } else { Provenance::new("a", "img0") };
        assert_eq!(*prov, expected);
    }
}

#[test]
fn random_sample_stream_is_frozen() {
    let pool = EmbeddingPool::anonymous(Array2::from_shape_fn((100_000, 1), |(i, _)| i as f32));
    let bank = random_sample(&pool, 5000, 7).unwrap();
    let idx: Vec<u64> = bank.elements().iter().map(|&v| v as u64).collect();
    assert_eq!(&idx[..12], &[14000, 15780, 18207, 16801, 27011, 70429, 3616, 72676, 7123, 60129, 81096, 35943]);
    assert_eq!(&idx[4995..], &[51824, 25182, 94479, 39850, 15593]);
    assert_eq!(idx.iter().sum::<u64>(), 251_222_744);

    // Same stream from the documented construction: ChaCha8 seeded with
    // seed_from_u64, partial Fisher-Yates with random_range(i..n).
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut perm: Vec<u64> = (0..100_000).collect();
    for i in 0..5000 {
        let j = rng.random_range(i..100_000);
        perm.swap(i, j);
    }
    assert_eq!(idx, perm[..5000]);

    let mut distinct = idx.clone();
    distinct.sort_unstable();
    distinct.dedup();
    assert_eq!(distinct.len(), 5000);
}

#[test]
fn random_sample_full_pool_is_a_permutation() {
    let pool = EmbeddingPool::anonymous(Array2::from_shape_fn((50, 2), |(i, j)| (i * 2 + j) as f32));
    let bank = random_sample(&pool, 50, 3).unwrap();
    let mut rows = bank_rows(&bank);
    rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_eq!(rows, rows_of(&pool.embeddings().to_owned()));
}

#[test]
fn greedy_is_farthest_first() {
    let mut r = rng(21);
    let pts = gaussian(&mut r, 300, 3, 1.0);
    let pool = EmbeddingPool::anonymous(pts.clone());
    let bank = greedy_kcenter(&pool, 20, 5).unwrap();
    let rows = bank_rows(&bank);
    assert_eq!(rows[0], pts.row(5).to_vec());
    // Each selected point was the farthest pool point from the ones before it.
    for k in 1..rows.len() {
        let d = |p: &[f32]| rows[..k].iter().map(|c| cad_core::distance::euclidean(p, c)).fold(f32::INFINITY, f32::min);
        let max = pts.rows().into_iter().map(|p| d(p.as_slice().unwrap())).fold(0.0, f32::max);
        assert_eq!(d(&rows[k]), max);
    }
}

#[test]
fn incremental_beats_random_on_blob_pools() {
    // Streaming only sees one batch at a time, so a few seeds lose narrowly.
    let (mut wins, mut ratio_sum) = (0, 0.0);
    for seed in 0..20 {
        let mut pts = blob_pool(seed, 2000, 6);
        // Shuffle rows so the stream order is unrelated to generation order.
        let mut order: Vec<usize> = (0..pts.nrows()).collect();
        order.shuffle(&mut rng(seed + 100));
        pts = pts.select(ndarray::Axis(0), &order);
        let pool = EmbeddingPool::anonymous(pts.clone());
        let mut bank = MemoryBank::new(32, 2).unwrap();
        for chunk in batch(pts).chunks(250) {
            bank.update(&chunk).unwrap();
        }
        let inc = covering_radius(&bank, &pool).unwrap();
        let rnd = covering_radius(&random_sample(&pool, 32, seed).unwrap(), &pool).unwrap();
        wins += usize::from(inc <= rnd);
        ratio_sum += inc / rnd;
    }
    assert!(wins >= 16, "incremental <= random on {wins}/20");
    assert!(ratio_sum / 20.0 < 0.8, "mean radius ratio {}", ratio_sum / 20.0);
}

#[test]
fn snapshot_round_trip_preserves_bank() {
    let (dim, capacity, batches) = random_stream(77);
    let mut bank = MemoryBank::new(capacity, dim).unwrap();
    for b in &batches {
        bank.update(&batch(b.clone())).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bank.cadt");
    save_bank(&bank.snapshot(), &path).unwrap();
    let restored = MemoryBank::from_snapshot(&load_bank(&path).unwrap()).unwrap();
    assert!(restored.snapshot().bitwise_eq(&bank.snapshot()));
    assert_eq!(restored.nn_cache(), bank.nn_cache());
    assert_eq!(restored.min_pair(), bank.min_pair());

    // Continuing from the restored bank matches continuing in process.
    let mut a = bank;
    let mut b = restored;
    let extra = gaussian(&mut rng(78), 30, dim, 3.0);
    assert_eq!(a.update(&batch(extra.clone())).unwrap().inserted, b.update(&batch(extra)).unwrap().inserted);
    assert!(a.snapshot().bitwise_eq(&b.snapshot()));
}
