//! Exact Euclidean distances between embedding sets.
//!
//! Every distance in the crate goes through [`combine`]:
//! `sqrt(max(0, (‖a‖² + ‖b‖²) − 2·a·b))`, with the squared norms and the dot
//! product accumulated in f64 and the result stored as f32. The expression is
//! exactly symmetric in `a` and `b`, and a point's distance to itself is
//! exactly 0.
//!
//! Ties are always resolved towards the lowest index.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

pub const DEFAULT_BLOCK_ROWS: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistanceError {
    #[error("dimension mismatch: {lhs} vs {rhs}")]
    DimensionMismatch { lhs: usize, rhs: usize },
    #[error("non-finite value in {which} at row {row}")]
    NonFiniteInput { which: &'static str, row: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("need at least two elements, got {0}")]
    FewerThanTwo(usize),
    #[error("neighbor count must be at least 1")]
    ZeroNeighbors,
}

impl DistanceError {
    pub fn kind(&self) -> &'static str {
        match self {
            DistanceError::DimensionMismatch { .. } => "dimension-mismatch",
            DistanceError::NonFiniteInput { .. } => "non-finite-input",
            DistanceError::Empty(_) => "empty-input",
            DistanceError::FewerThanTwo(_) => "fewer-than-two-elements",
            DistanceError::ZeroNeighbors => "zero-neighbors",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance: f32,
    pub index: usize,
}

impl Neighbor {
    /// Order by distance, then index.
    pub fn cmp_rank(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.index.cmp(&other.index))
    }
}

/// `values[(i, j)] = ‖X_i − C_j‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f32>,
}

impl DistanceMatrix {
    pub fn values(&self) -> &Array2<f32> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f32> {
        self.values
    }

    pub fn lhs_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn rhs_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.values[(i, j)]
    }
}

/// f64-accumulated dot product of two f32 slices.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] as f64 * b[i] as f64;
        acc[1] += a[i + 1] as f64 * b[i + 1] as f64;
        acc[2] += a[i + 2] as f64 * b[i + 2] as f64;
        acc[3] += a[i + 3] as f64 * b[i + 3] as f64;
    }
    let mut tail = 0.0f64;
    for i in 4 * chunks..a.len() {
        tail += a[i] as f64 * b[i] as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn squared_norm(a: &[f32]) -> f64 {
    dot(a, a)
}

/// Distance from squared norms and a dot product, clamped at zero before the root.
#[inline]
pub fn combine(norm_a: f64, norm_b: f64, dot_ab: f64) -> f32 {
    let sq = (norm_a + norm_b) - 2.0 * dot_ab;
    if sq > 0.0 {
        sq.sqrt() as f32
    } else {
        0.0
    }
}

#[inline]
pub fn euclidean(a: &[f32], b: &[f32]) -> f32 {
    combine(squared_norm(a), squared_norm(b), dot(a, b))
}

pub fn squared_norms(x: ArrayView2<'_, f32>) -> Vec<f64> {
    let x = x.as_standard_layout();
    let d = x.ncols();
    let flat = x.as_slice().expect("standard layout");
    if d == 0 {
        return vec![0.0; x.nrows()];
    }
    flat.chunks_exact(d).map(squared_norm).collect()
}

fn check_finite(x: &ArrayView2<'_, f32>, which: &'static str) -> Result<(), DistanceError> {
    for (row, r) in x.rows().into_iter().enumerate() {
        if r.iter().any(|v| !v.is_finite()) {
            return Err(DistanceError::NonFiniteInput { which, row });
        }
    }
    Ok(())
}

fn check_pair(x: &ArrayView2<'_, f32>, c: &ArrayView2<'_, f32>) -> Result<(), DistanceError> {
    if x.ncols() != c.ncols() {
        return Err(DistanceError::DimensionMismatch { lhs: x.ncols(), rhs: c.ncols() });
    }
    check_finite(x, "lhs")?;
    check_finite(c, "rhs")
}

pub fn pairwise_distances(x: ArrayView2<'_, f32>, c: ArrayView2<'_, f32>) -> Result<DistanceMatrix, DistanceError> {
    pairwise_distances_blocked(x, c, DEFAULT_BLOCK_ROWS)
}

/// Full distance matrix, evaluated in parallel blocks of `block_rows` rows of `x`.
pub fn pairwise_distances_blocked(
    x: ArrayView2<'_, f32>,
    c: ArrayView2<'_, f32>,
    block_rows: usize,
) -> Result<DistanceMatrix, DistanceError> {
    if x.nrows() == 0 {
        return Err(DistanceError::Empty("lhs"));
    }
    if c.nrows() == 0 {
        return Err(DistanceError::Empty("rhs"));
    }
    check_pair(&x, &c)?;
    let (n, m, d) = (x.nrows(), c.nrows(), x.ncols());
    let x = x.as_standard_layout();
    let c = c.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let cs = c.as_slice().expect("standard layout");
    let xn = squared_norms(x.view());
    let cn = squared_norms(c.view());
    let block_rows = block_rows.max(1);

    let mut values = vec![0.0f32; n * m];
    values.par_chunks_mut(block_rows * m).enumerate().for_each(|(b, out)| {
        let start = b * block_rows;
        for (r, out_row) in out.chunks_exact_mut(m).enumerate() {
            let i = start + r;
            let xi = &xs[i * d..(i + 1) * d];
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = combine(xn[i], cn[j], dot(xi, &cs[j * d..(j + 1) * d]));
            }
        }
    });
    Ok(DistanceMatrix { values: Array2::from_shape_vec((n, m), values).expect("n*m values") })
}

/// Nearest row of `c` for a single query with precomputed norms.
#[inline]
pub(crate) fn nearest_in(q: &[f32], q_norm: f64, cs: &[f32], c_norms: &[f64], d: usize) -> Neighbor {
    let mut best = Neighbor { distance: f32::INFINITY, index: 0 };
    for (j, cj) in cs.chunks_exact(d).enumerate() {
        let dist = combine(q_norm, c_norms[j], dot(q, cj));
        if dist < best.distance {
            best = Neighbor { distance: dist, index: j };
        }
    }
    best
}

/// For every row of `x`, the closest row of `c` (lowest index on ties).
pub fn nearest(x: ArrayView2<'_, f32>, c: ArrayView2<'_, f32>) -> Result<Vec<Neighbor>, DistanceError> {
    if c.nrows() == 0 {
        return Err(DistanceError::Empty("rhs"));
    }
    check_pair(&x, &c)?;
    let d = x.ncols();
    let x = x.as_standard_layout();
    let c = c.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let cs = c.as_slice().expect("standard layout");
    let cn = squared_norms(c.view());
    if d == 0 {
        return Ok(vec![Neighbor { distance: 0.0, index: 0 }; x.nrows()]);
    }
    Ok(xs
        .par_chunks(d)
        .with_min_len(16)
        .map(|xi| nearest_in(xi, squared_norm(xi), cs, &cn, d))
        .collect())
}

/// The `min(b, m)` rows of `c` closest to `q`, ascending by (distance, index).
pub fn k_nearest(q: ArrayView1<'_, f32>, c: ArrayView2<'_, f32>, b: usize) -> Result<Vec<Neighbor>, DistanceError> {
    if b == 0 {
        return Err(DistanceError::ZeroNeighbors);
    }
    if c.nrows() == 0 {
        return Err(DistanceError::Empty("rhs"));
    }
    let q2 = q.insert_axis(ndarray::Axis(0));
    check_pair(&q2, &c)?;
    let q = q.as_standard_layout();
    let qs = q.as_slice().expect("standard layout");
    let qn = squared_norm(qs);
    let mut all: Vec<Neighbor> = c
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, row)| {
            let row = row.as_standard_layout();
            let rs = row.as_slice().expect("standard layout");
            Neighbor { distance: combine(qn, squared_norm(rs), dot(qs, rs)), index: j }
        })
        .collect();
    let k = b.min(all.len());
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, Neighbor::cmp_rank);
        all.truncate(k);
    }
    all.sort_by(Neighbor::cmp_rank);
    Ok(all)
}

/// The closest pair of distinct rows `(distance, i, j)` with `i < j`,
/// lexicographically first on ties.
pub fn min_pair(c: ArrayView2<'_, f32>) -> Result<(f32, usize, usize), DistanceError> {
    let m = c.nrows();
    if m < 2 {
        return Err(DistanceError::FewerThanTwo(m));
    }
    check_finite(&c, "rhs")?;
    let d = c.ncols();
    let c = c.as_standard_layout();
    let cs = c.as_slice().expect("standard layout");
    let cn = squared_norms(c.view());
    let row = |i: usize| &cs[i * d..(i + 1) * d];
    let best = (0..m - 1)
        .into_par_iter()
        .map(|i| {
            let mut best = (f32::INFINITY, i, i + 1);
            for j in i + 1..m {
                let dist = combine(cn[i], cn[j], dot(row(i), row(j)));
                if dist < best.0 {
                    best = (dist, i, j);
                }
            }
            best
        })
        .reduce_with(|a, b| match a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))) {
            Ordering::Greater => b,
            _ => a,
        })
        .expect("m >= 2");
    Ok(best)
}

/// Straightforward `sqrt(Σ (a_k − b_k)²)` implementations used as oracles.
pub mod reference {
    use ndarray::{Array2, ArrayView2};

    pub fn naive_distance(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let t = x as f64 - y as f64;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn naive_pairwise(x: ArrayView2<'_, f32>, c: ArrayView2<'_, f32>) -> Array2<f64> {
        let mut out = Array2::zeros((x.nrows(), c.nrows()));
        for (i, xi) in x.rows().into_iter().enumerate() {
            let xi = xi.to_vec();
            for (j, cj) in c.rows().into_iter().enumerate() {
                out[(i, j)] = naive_distance(&xi, &cj.to_vec());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn three_four_five() {
        let d = pairwise_distances(array![[0.0f32, 0.0]].view(), array![[3.0f32, 4.0]].view()).unwrap();
        assert_eq!(d.get(0, 0), 5.0);
    }

    #[test]
    fn identical_rows_are_exactly_zero() {
        let x = array![[0.1f32, 0.7, -3.3], [1e3, -2e3, 0.5], [1.0, 1.0, 1.0]];
        let d = pairwise_distances(x.view(), x.view()).unwrap();
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
        }
    }

    #[test]
    fn dimension_mismatch_and_nan() {
        let a = array![[0.0f32, 1.0]];
        let b = array![[0.0f32]];
        assert!(matches!(
            pairwise_distances(a.view(), b.view()),
            Err(DistanceError::DimensionMismatch { lhs: 2, rhs: 1 })
        ));
        let n = array![[f32::NAN, 1.0]];
        assert!(matches!(
            pairwise_distances(a.view(), n.view()),
            Err(DistanceError::NonFiniteInput { which: "rhs", row: 0 })
        ));
    }

    #[test]
    fn nearest_simple() {
        let r = nearest(array![[0.0f32]].view(), array![[-1.0f32], [2.0]].view()).unwrap();
        assert_eq!(r, vec![Neighbor { distance: 1.0, index: 0 }]);
    }

    #[test]
    fn nearest_ties_lowest_index() {
        let r = nearest(array![[0.0f32]].view(), array![[1.0f32], [-1.0], [1.0]].view()).unwrap();
        assert_eq!(r[0].index, 0);
        assert!(matches!(nearest(array![[0.0f32]].view(), Array2::<f32>::zeros((0, 1)).view()), Err(DistanceError::Empty(_))));
    }

    #[test]
    fn k_nearest_exhaustive_and_errors() {
        let c = array![[3.0f32], [1.0], [2.0], [1.0]];
        let q = array![0.0f32];
        let r = k_nearest(q.view(), c.view(), 10).unwrap();
        assert_eq!(r.iter().map(|n| n.index).collect::<Vec<_>>(), vec![1, 3, 2, 0]);
        assert!(matches!(k_nearest(q.view(), c.view(), 0), Err(DistanceError::ZeroNeighbors)));
    }

    #[test]
    fn min_pair_cases() {
        assert_eq!(min_pair(array![[0.0f32], [1.0], [5.0]].view()).unwrap(), (1.0, 0, 1));
        assert_eq!(min_pair(array![[4.0f32], [2.0], [4.0], [2.0]].view()).unwrap(), (0.0, 0, 2));
        assert!(matches!(min_pair(array![[1.0f32]].view()), Err(DistanceError::FewerThanTwo(1))));
    }

    #[test]
    fn exact_symmetry() {
        let a = [0.3f32, -1.7, 2.2, 9.1, 0.0];
        let b = [1.3f32, 0.7, -2.2, 4.1, 3.0];
        assert_eq!(euclidean(&a, &b).to_bits(), euclidean(&b, &a).to_bits());
    }
}
