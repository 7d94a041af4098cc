use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::CoresetError;
use crate::distance::{combine, dot, nearest_in, squared_norm, squared_norms, Neighbor};
use crate::tensor_io::{EmbeddingBatch, MemoryBankSnapshot, Provenance, BANK_FORMAT_VERSION};

pub const DEFAULT_CAPACITY: usize = 10_000;

const PAR_MIN_ROWS: usize = 256;

const ALONE: Neighbor = Neighbor { distance: f32::INFINITY, index: usize::MAX };

/// Counters for one [`MemoryBank::update`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub inserted: usize,
    pub evicted: usize,
    /// Selection steps evaluated, including the final one that stopped the loop.
    pub iterations: usize,
    pub wall_time: Duration,
    /// `|C|_min` after the update, `None` while the bank holds fewer than two elements.
    pub final_min_pair: Option<f32>,
}

impl UpdateStats {
    pub fn empty() -> Self {
        Self { inserted: 0, evicted: 0, iterations: 0, wall_time: Duration::ZERO, final_min_pair: None }
    }

    /// Sums counters of consecutive updates; `final_min_pair` is taken from `other`.
    pub fn absorb(&mut self, other: &UpdateStats) {
        self.inserted += other.inserted;
        self.evicted += other.evicted;
        self.iterations += other.iterations;
        self.wall_time += other.wall_time;
        self.final_min_pair = other.final_min_pair;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Fill,
    Replace,
}

/// One accepted insertion, reported to the update observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStep {
    pub kind: StepKind,
    pub batch_index: usize,
    pub slot: usize,
    /// `d(x, C)` of the inserted embedding before insertion.
    pub distance: f32,
    pub min_pair_before: Option<f32>,
    pub min_pair_after: Option<f32>,
}

/// The shared fixed-capacity coreset.
///
/// Besides the elements it keeps, for every element, its nearest other element
/// (`nn_cache`) and the closest pair overall. Replacement writes the new
/// embedding into the slot of the evicted one, so slot order is stable.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    dim: usize,
    capacity: usize,
    data: Vec<f32>,
    norms: Vec<f64>,
    nn: Vec<Neighbor>,
    min_pair: Option<(f32, usize, usize)>,
    provenance: Vec<Provenance>,
}

impl MemoryBank {
    pub fn new(capacity: usize, dim: usize) -> Result<Self, CoresetError> {
        if capacity == 0 {
            return Err(CoresetError::InvalidCapacity(capacity));
        }
        if dim == 0 {
            return Err(CoresetError::DimensionMismatch { bank: 0, batch: 0 });
        }
        Ok(Self {
            dim,
            capacity,
            data: Vec::new(),
            norms: Vec::new(),
            nn: Vec::new(),
            min_pair: None,
            provenance: Vec::new(),
        })
    }

    pub fn from_snapshot(snapshot: &MemoryBankSnapshot) -> Result<Self, CoresetError> {
        if snapshot.provenance.len() != snapshot.len() {
            return Err(CoresetError::ProvenanceMismatch { rows: snapshot.len(), provenance: snapshot.provenance.len() });
        }
        if snapshot.len() > snapshot.capacity {
            return Err(CoresetError::InvalidCapacity(snapshot.capacity));
        }
        let mut bank = Self::new(snapshot.capacity, snapshot.dim())?;
        bank.data = snapshot.embeddings.as_standard_layout().iter().copied().collect();
        bank.norms = squared_norms(snapshot.embeddings.view());
        bank.provenance = snapshot.provenance.clone();
        bank.nn = bank.rebuilt_nn_cache();
        bank.refresh_min_pair();
        Ok(bank)
    }

    pub fn snapshot(&self) -> MemoryBankSnapshot {
        MemoryBankSnapshot {
            embeddings: self.elements().to_owned(),
            capacity: self.capacity,
            provenance: self.provenance.clone(),
            format_version: BANK_FORMAT_VERSION,
        }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements(&self) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape((self.len(), self.dim), &self.data).expect("len * dim values")
    }

    pub fn element(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Nearest other element of every element; distance is infinite for a lone element.
    pub fn nn_cache(&self) -> &[Neighbor] {
        &self.nn
    }

    /// `(|C|_min, i, j)` with `i < j`.
    pub fn min_pair(&self) -> Option<(f32, usize, usize)> {
        self.min_pair
    }

    /// Recomputes the nearest-other-element cache from scratch.
    pub fn rebuilt_nn_cache(&self) -> Vec<Neighbor> {
        (0..self.len())
            .into_par_iter()
            .with_min_len(16)
            .map(|i| self.scan_nearest_other(i))
            .collect()
    }

    fn dist(&self, i: usize, j: usize) -> f32 {
        combine(self.norms[i], self.norms[j], dot(self.element(i), self.element(j)))
    }

    fn scan_nearest_other(&self, i: usize) -> Neighbor {
        let mut best = ALONE;
        for j in 0..self.len() {
            if j != i {
                let d = self.dist(i, j);
                if d < best.distance {
                    best = Neighbor { distance: d, index: j };
                }
            }
        }
        best
    }

    fn refresh_min_pair(&mut self) {
        let mut best: Option<(f32, usize)> = None;
        for (i, n) in self.nn.iter().enumerate() {
            if n.index != usize::MAX && best.is_none_or(|(d, _)| n.distance < d) {
                best = Some((n.distance, i));
            }
        }
        self.min_pair = best.map(|(d, i)| {
            let j = self.nn[i].index;
            (d, i.min(j), i.max(j))
        });
    }

    /// Distances from element `slot` to every element (entry `slot` is unused).
    fn distances_from(&self, slot: usize) -> Vec<f32> {
        let m = self.len();
        let row = self.element(slot);
        let norm = self.norms[slot];
        (0..m)
            .into_par_iter()
            .with_min_len(PAR_MIN_ROWS)
            .map(|j| combine(self.norms[j], norm, dot(self.element(j), row)))
            .collect()
    }

    /// Appends an element and updates the caches. Returns its slot.
    fn push(&mut self, row: &[f32], norm: f64, provenance: Provenance) -> usize {
        debug_assert!(self.len() < self.capacity);
        let slot = self.len();
        self.data.extend_from_slice(row);
        self.norms.push(norm);
        self.provenance.push(provenance);
        self.nn.push(ALONE);
        let dists = self.distances_from(slot);
        let mut own = ALONE;
        for (j, &d) in dists.iter().enumerate().take(slot) {
            // `slot` exceeds every existing index, so ties keep the old neighbor.
            if d < self.nn[j].distance {
                self.nn[j] = Neighbor { distance: d, index: slot };
            }
            if d < own.distance {
                own = Neighbor { distance: d, index: j };
            }
        }
        self.nn[slot] = own;
        self.refresh_min_pair();
        slot
    }

    /// Overwrites element `slot` and repairs the caches.
    fn replace(&mut self, slot: usize, row: &[f32], norm: f64, provenance: Provenance) {
        self.data[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(row);
        self.norms[slot] = norm;
        self.provenance[slot] = provenance;
        let dists = self.distances_from(slot);
        let stale: Vec<usize> = (0..self.len()).filter(|&j| j != slot && self.nn[j].index == slot).collect();
        let mut own = ALONE;
        for (j, &d) in dists.iter().enumerate() {
            if j == slot {
                continue;
            }
            let cur = self.nn[j];
            if cur.index != slot && (d < cur.distance || (d == cur.distance && slot < cur.index)) {
                self.nn[j] = Neighbor { distance: d, index: slot };
            }
            if d < own.distance {
                own = Neighbor { distance: d, index: j };
            }
        }
        self.nn[slot] = own;
        let rescanned: Vec<(usize, Neighbor)> = stale
            .par_iter()
            .map(|&j| (j, self.scan_nearest_other(j)))
            .collect();
        for (j, n) in rescanned {
            self.nn[j] = n;
        }
        self.refresh_min_pair();
    }

    pub fn update(&mut self, batch: &EmbeddingBatch) -> Result<UpdateStats, CoresetError> {
        self.update_observed(batch, |_| {})
    }

    /// Streams one batch into the bank.
    ///
    /// While below capacity, the batch embedding farthest from the bank is
    /// appended (the first batch row when the bank is empty) until the bank is
    /// full or every batch row is already present. At capacity, the farthest
    /// embedding `x` replaces the first member of the closest bank pair for as
    /// long as `d(x, C) > |C|_min`.
    pub fn update_observed(
        &mut self,
        batch: &EmbeddingBatch,
        mut observer: impl FnMut(&UpdateStep),
    ) -> Result<UpdateStats, CoresetError> {
        if batch.dim() != self.dim {
            return Err(CoresetError::DimensionMismatch { bank: self.dim, batch: batch.dim() });
        }
        if batch.is_empty() {
            return Err(CoresetError::EmptyBatch);
        }
        let start = Instant::now();
        let x = batch.embeddings().as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let d = self.dim;
        let row = |i: usize| &xs[i * d..(i + 1) * d];
        let x_norms = squared_norms(x.view());
        let provenance = batch.provenance();

        // d(x_i, C) and the bank slot realising it, for every batch row.
        let mut best: Vec<Neighbor> = if self.is_empty() {
            vec![ALONE; batch.len()]
        } else {
            (0..batch.len())
                .into_par_iter()
                .with_min_len(16)
                .map(|i| nearest_in(row(i), x_norms[i], &self.data, &self.norms, d))
                .collect()
        };

        let mut stats = UpdateStats::empty();

        while self.len() < self.capacity {
            stats.iterations += 1;
            let pick = if self.is_empty() {
                Some(0)
            } else {
                let (i, dist) = farthest(&best);
                (dist > 0.0).then_some(i)
            };
            let Some(i) = pick else { break };
            let before = self.min_pair.map(|p| p.0);
            let dist = best[i].distance;
            let slot = self.push(row(i), x_norms[i], provenance.clone());
            self.refresh_batch(&mut best, xs, &x_norms, slot, false);
            stats.inserted += 1;
            observer(&UpdateStep {
                kind: StepKind::Fill,
                batch_index: i,
                slot,
                distance: dist,
                min_pair_before: before,
                min_pair_after: self.min_pair.map(|p| p.0),
            });
        }

        if self.is_full() {
            while let Some((min_dist, c1, _)) = self.min_pair {
                stats.iterations += 1;
                let (i, d_max) = farthest(&best);
                if d_max <= min_dist {
                    break;
                }
                self.replace(c1, row(i), x_norms[i], provenance.clone());
                self.refresh_batch(&mut best, xs, &x_norms, c1, true);
                stats.inserted += 1;
                stats.evicted += 1;
                observer(&UpdateStep {
                    kind: StepKind::Replace,
                    batch_index: i,
                    slot: c1,
                    distance: d_max,
                    min_pair_before: Some(min_dist),
                    min_pair_after: self.min_pair.map(|p| p.0),
                });
            }
        }

        stats.final_min_pair = self.min_pair.map(|p| p.0);
        stats.wall_time = start.elapsed();
        Ok(stats)
    }

    /// Updates per-row nearest bank elements after slot `slot` changed.
    fn refresh_batch(&self, best: &mut [Neighbor], xs: &[f32], x_norms: &[f64], slot: usize, overwritten: bool) {
        let d = self.dim;
        let s_row = self.element(slot);
        let s_norm = self.norms[slot];
        best.par_iter_mut().with_min_len(PAR_MIN_ROWS).enumerate().for_each(|(k, cur)| {
            let xk = &xs[k * d..(k + 1) * d];
            if overwritten && cur.index == slot {
                *cur = nearest_in(xk, x_norms[k], &self.data, &self.norms, d);
                return;
            }
            let dist = combine(x_norms[k], s_norm, dot(xk, s_row));
            if dist < cur.distance || (dist == cur.distance && slot < cur.index) {
                *cur = Neighbor { distance: dist, index: slot };
            }
        });
    }

    pub(crate) fn push_row(&mut self, row: &[f32], provenance: Provenance) -> Result<usize, CoresetError> {
        if row.len() != self.dim {
            return Err(CoresetError::DimensionMismatch { bank: self.dim, batch: row.len() });
        }
        if self.is_full() {
            return Err(CoresetError::InvalidCapacity(self.capacity));
        }
        Ok(self.push(row, squared_norm(row), provenance))
    }
}

/// Index and value of the largest distance, lowest index on ties.
fn farthest(best: &[Neighbor]) -> (usize, f32) {
    let mut arg = 0;
    let mut max = best[0].distance;
    for (i, n) in best.iter().enumerate().skip(1) {
        if n.distance > max {
            max = n.distance;
            arg = i;
        }
    }
    (arg, max)
}

impl From<&MemoryBank> for Array2<f32> {
    fn from(bank: &MemoryBank) -> Self {
        bank.elements().to_owned()
    }
}
