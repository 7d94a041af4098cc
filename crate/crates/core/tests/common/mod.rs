#![allow(dead_code)]

use cad_core::coreset::MemoryBank;
use cad_core::distance::euclidean;
use cad_core::tensor_io::EmbeddingBatch;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Array2<f32> {
    Array2::from_shape_fn((rows, cols), |_| scale * Distribution::<f64>::sample(&StandardNormal, rng) as f32)
}

pub fn batch(rows: Array2<f32>) -> EmbeddingBatch {
    EmbeddingBatch::new(rows, None, "t", "s").unwrap()
}

/// Straight-line coreset update: every distance recomputed from scratch.
pub struct ReferenceBank {
    pub capacity: usize,
    pub rows: Vec<Vec<f32>>,
}

fn dist_to_bank(x: &[f32], bank: &[Vec<f32>]) -> f32 {
    bank.iter().map(|c| euclidean(x, c)).fold(f32::INFINITY, f32::min)
}

fn farthest(batch: &[Vec<f32>], bank: &[Vec<f32>]) -> (usize, f32) {
    let mut best = (0, f32::NEG_INFINITY);
    for (i, x) in batch.iter().enumerate() {
        let d = dist_to_bank(x, bank);
        if d > best.1 {
            best = (i, d);
        }
    }
    best
}

fn min_pair(bank: &[Vec<f32>]) -> Option<(f32, usize, usize)> {
    let mut best: Option<(f32, usize, usize)> = None;
    for i in 0..bank.len() {
        for j in i + 1..bank.len() {
            let d = euclidean(&bank[i], &bank[j]);
            if best.is_none_or(|b| d < b.0) {
                best = Some((d, i, j));
            }
        }
    }
    best
}

impl ReferenceBank {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, rows: Vec::new() }
    }

    /// Returns `(inserted, evicted, iterations)`.
    pub fn update(&mut self, batch: &[Vec<f32>]) -> (usize, usize, usize) {
        let (mut inserted, mut evicted, mut iterations) = (0, 0, 0);
        while self.rows.len() < self.capacity {
            iterations += 1;
            if self.rows.is_empty() {
                self.rows.push(batch[0].clone());
                inserted += 1;
                continue;
            }
            let (i, d) = farthest(batch, &self.rows);
            if d <= 0.0 {
                break;
            }
            self.rows.push(batch[i].clone());
            inserted += 1;
        }
        if self.rows.len() == self.capacity {
            while let Some((min, c1, _)) = min_pair(&self.rows) {
                iterations += 1;
                let (i, d) = farthest(batch, &self.rows);
                if d <= min {
                    break;
                }
                self.rows[c1] = batch[i].clone();
                inserted += 1;
                evicted += 1;
            }
        }
        (inserted, evicted, iterations)
    }
}

pub fn rows_of(a: &Array2<f32>) -> Vec<Vec<f32>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A seeded random stream: `(dim, capacity, batches)`. Values are drawn from
/// a small integer lattice half the time so ties and duplicates occur.
pub fn random_stream(seed: u64) -> (usize, usize, Vec<Array2<f32>>) {
    let mut r = rng(seed);
    let dim = r.random_range(1..=8);
    let capacity = r.random_range(1..=32);
    let total = r.random_range(1..=200);
    let lattice = r.random_bool(0.5);
    let mut batches = Vec::new();
    let mut left = total;
    while left > 0 {
        let n = r.random_range(1..=left.min(40));
        let b = if lattice {
            Array2::from_shape_fn((n, dim), |_| r.random_range(-3i32..=3) as f32)
        } else {
            gaussian(&mut r, n, dim, 2.0)
        };
        batches.push(b);
        left -= n;
    }
    (dim, capacity, batches)
}

pub fn bank_rows(bank: &MemoryBank) -> Vec<Vec<f32>> {
    rows_of(&bank.elements().to_owned())
}

/// `n` points from `blobs` isotropic 2-D clusters with unit spread.
pub fn blob_pool(seed: u64, n: usize, blobs: usize) -> Array2<f32> {
    let mut r = rng(seed);
    let centers: Vec<(f32, f32)> =
        (0..blobs).map(|_| (r.random_range(-20.0..20.0), r.random_range(-20.0..20.0))).collect();
    let mut out = Array2::zeros((n, 2));
    for mut row in out.rows_mut() {
        let (cx, cy) = centers[r.random_range(0..blobs)];
        row[0] = cx + Distribution::<f64>::sample(&StandardNormal, &mut r) as f32;
        row[1] = cy + Distribution::<f64>::sample(&StandardNormal, &mut r) as f32;
    }
    out
}
