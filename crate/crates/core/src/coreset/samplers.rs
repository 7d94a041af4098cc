//! Static samplers over a pooled embedding set: greedy k-center and uniform random.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CoresetError, MemoryBank};
use crate::distance::{combine, dot, nearest, squared_norms};
use crate::tensor_io::{EmbeddingBatch, Provenance};

/// Embeddings pooled from many images, with per-row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPool {
    embeddings: Array2<f32>,
    provenance: Vec<Provenance>,
}

impl EmbeddingPool {
    pub fn new(embeddings: Array2<f32>, provenance: Vec<Provenance>) -> Result<Self, CoresetError> {
        if embeddings.nrows() != provenance.len() {
            return Err(CoresetError::ProvenanceMismatch { rows: embeddings.nrows(), provenance: provenance.len() });
        }
        Ok(Self { embeddings: embeddings.as_standard_layout().into_owned(), provenance })
    }

    /// Rows without provenance, tagged `("pool", "<row index>")`.
    pub fn anonymous(embeddings: Array2<f32>) -> Self {
        let provenance = (0..embeddings.nrows()).map(|i| Provenance::new("pool", i.to_string())).collect();
        Self::new(embeddings, provenance).expect("lengths agree")
    }

    pub fn from_batches<'a>(batches: impl IntoIterator<Item = &'a EmbeddingBatch>) -> Result<Self, CoresetError> {
        let mut dim = None;
        let mut values = Vec::new();
        let mut provenance = Vec::new();
        for b in batches {
            if *dim.get_or_insert(b.dim()) != b.dim() {
                return Err(CoresetError::DimensionMismatch { bank: dim.unwrap_or(0), batch: b.dim() });
            }
            values.extend(b.embeddings().iter().copied());
            provenance.extend(std::iter::repeat_n(b.provenance(), b.len()));
        }
        let d = dim.ok_or(CoresetError::EmptyBatch)?;
        let embeddings = Array2::from_shape_vec((provenance.len(), d), values).expect("rows * dim values");
        Self::new(embeddings, provenance)
    }

    pub fn embeddings(&self) -> ArrayView2<'_, f32> {
        self.embeddings.view()
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.embeddings.ncols()
    }

    fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.embeddings.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    fn bank_from_indices(&self, indices: &[usize], capacity: usize) -> Result<MemoryBank, CoresetError> {
        let mut bank = MemoryBank::new(capacity, self.dim())?;
        for &i in indices {
            bank.push_row(self.row(i), self.provenance[i].clone())?;
        }
        Ok(bank)
    }
}

fn check_k(k: usize, pool: &EmbeddingPool) -> Result<(), CoresetError> {
    if k == 0 {
        return Err(CoresetError::InvalidCapacity(0));
    }
    if k > pool.len() {
        return Err(CoresetError::KExceedsPool { k, pool: pool.len() });
    }
    Ok(())
}

/// Farthest-point-first selection starting at `seed_index`; the returned
/// bank has capacity `k` and holds the picks in selection order.
pub fn greedy_kcenter(pool: &EmbeddingPool, k: usize, seed_index: usize) -> Result<MemoryBank, CoresetError> {
    check_k(k, pool)?;
    if seed_index >= pool.len() {
        return Err(CoresetError::SeedOutOfRange { seed: seed_index, pool: pool.len() });
    }
    let norms = squared_norms(pool.embeddings());
    let mut min_dist = vec![f32::INFINITY; pool.len()];
    let mut selected = vec![false; pool.len()];
    let mut order = Vec::with_capacity(k);
    let mut current = seed_index;
    loop {
        order.push(current);
        selected[current] = true;
        if order.len() == k {
            break;
        }
        let c_row = pool.row(current);
        let c_norm = norms[current];
        min_dist.par_iter_mut().with_min_len(1024).enumerate().for_each(|(i, md)| {
            let d = combine(norms[i], c_norm, dot(pool.row(i), c_row));
            if d < *md {
                *md = d;
            }
        });
        let mut next = None::<(usize, f32)>;
        for (i, &d) in min_dist.iter().enumerate() {
            if !selected[i] && next.is_none_or(|(_, best)| d > best) {
                next = Some((i, d));
            }
        }
        current = next.expect("k <= pool size leaves an unselected point").0;
    }
    pool.bank_from_indices(&order, k)
}

/// Uniform sample of `k` rows without replacement.
///
/// Stream: `ChaCha8Rng::seed_from_u64(rng_seed)` driving a partial
/// Fisher–Yates shuffle of `0..N`, where step `i` swaps position `i` with
/// `rng.random_range(i..N)`. The bank holds the first `k` positions in order.
pub fn random_sample(pool: &EmbeddingPool, k: usize, rng_seed: u64) -> Result<MemoryBank, CoresetError> {
    check_k(k, pool)?;
    let order = random_indices(pool.len(), k, rng_seed);
    pool.bank_from_indices(&order, k)
}

pub(crate) fn random_indices(n: usize, k: usize, rng_seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// `max_p d(p, bank)` over the pool.
pub fn covering_radius(bank: &MemoryBank, pool: &EmbeddingPool) -> Result<f32, CoresetError> {
    if bank.is_empty() {
        return Err(CoresetError::EmptyBank);
    }
    let nn = nearest(pool.embeddings(), bank.elements())?;
    Ok(nn.iter().map(|n| n.distance).fold(0.0, f32::max))
}
