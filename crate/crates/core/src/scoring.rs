//! Patch- and image-level anomaly scores against a frozen memory bank, and
//! pixel anomaly maps.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

use crate::coreset::MemoryBank;
use crate::distance::{euclidean, k_nearest, nearest, DistanceError};
use crate::tensor_io::EmbeddingBatch;

pub const DEFAULT_NEIGHBORS: usize = 9;
pub const DEFAULT_SIGMA: f32 = 4.0;
/// Input pixels covered by one patch embedding along each axis.
pub const PATCH_PIXELS: usize = 8;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("memory bank is empty")]
    EmptyBank,
    #[error("embedding batch {0:?} has no patch grid")]
    MissingGrid(String),
    #[error("bank holds {bank} elements, fewer than b = {b}")]
    BankSmallerThanB { bank: usize, b: usize },
    #[error("neighbor count b = {0} must be at least 2")]
    InvalidNeighborCount(usize),
    #[error("invalid map size {size:?} for a {grid:?} grid")]
    InvalidSize { size: (usize, usize), grid: (usize, usize) },
    #[error("invalid smoothing sigma {0}")]
    InvalidSigma(f32),
    #[error(transparent)]
    Distance(#[from] DistanceError),
}

impl ScoringError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScoringError::EmptyBank => "empty-bank",
            ScoringError::MissingGrid(_) => "missing-grid",
            ScoringError::BankSmallerThanB { .. } => "bank-smaller-than-b",
            ScoringError::InvalidNeighborCount(_) => "invalid-neighbor-count",
            ScoringError::InvalidSize { .. } => "invalid-size",
            ScoringError::InvalidSigma(_) => "invalid-sigma",
            ScoringError::Distance(e) => e.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    pub neighbors: usize,
    pub sigma: f32,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { neighbors: DEFAULT_NEIGHBORS, sigma: DEFAULT_SIGMA }
    }
}

/// Nearest-bank distance of every patch, laid out on the patch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub scores: Array2<f32>,
    pub argmin: Array2<usize>,
}

impl PatchScores {
    pub fn grid(&self) -> (usize, usize) {
        self.scores.dim()
    }

    /// Row-major index and value of the largest patch score (first on ties).
    pub fn max_patch(&self) -> (usize, f32) {
        let mut arg = 0;
        let mut max = f32::NEG_INFINITY;
        for (i, &s) in self.scores.iter().enumerate() {
            if s > max {
                max = s;
                arg = i;
            }
        }
        (arg, max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    pub pixel_scores: Array2<f32>,
    pub image_score: f32,
    pub source_id: String,
}

/// Image score plus the pieces it was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageScore {
    pub score: f32,
    pub weight: f64,
    /// Row-major grid index of the max-score patch.
    pub patch: usize,
    pub patch_score: f32,
    /// Bank slot nearest to that patch.
    pub bank_index: usize,
}

pub fn score_patches(bank: &MemoryBank, batch: &EmbeddingBatch) -> Result<PatchScores, ScoringError> {
    if bank.is_empty() {
        return Err(ScoringError::EmptyBank);
    }
    let grid = batch.grid().ok_or_else(|| ScoringError::MissingGrid(batch.source_id().to_string()))?;
    let nn = nearest(batch.embeddings().view(), bank.elements())?;
    let scores = Array2::from_shape_vec(grid, nn.iter().map(|n| n.distance).collect()).expect("grid matches rows");
    let argmin = Array2::from_shape_vec(grid, nn.iter().map(|n| n.index).collect()).expect("grid matches rows");
    Ok(PatchScores { scores, argmin })
}

/// Reweighted image score.
///
/// With `x*` the max-score patch, `c*` its nearest bank element and `N_b` the
/// `b` bank elements closest to `c*` (which always include `c*`), the score is
/// `(1 − e^{‖x*−c*‖} / Σ_{c∈N_b} e^{‖x*−c‖}) · s*`. Exponents are shifted by
/// the largest distance before evaluation.
pub fn image_score_detail(
    bank: &MemoryBank,
    patch_scores: &PatchScores,
    batch: &EmbeddingBatch,
    b: usize,
) -> Result<ImageScore, ScoringError> {
    if b < 2 {
        return Err(ScoringError::InvalidNeighborCount(b));
    }
    if bank.len() < b {
        return Err(ScoringError::BankSmallerThanB { bank: bank.len(), b });
    }
    let (patch, patch_score) = patch_scores.max_patch();
    let c_star = patch_scores.argmin.as_slice().expect("standard layout")[patch];
    let x_star = batch.embeddings().row(patch).to_vec();

    let c_row = ndarray::ArrayView1::from(bank.element(c_star));
    let mut hood: Vec<usize> = k_nearest(c_row, bank.elements(), b)?.into_iter().map(|n| n.index).collect();
    if !hood.contains(&c_star) {
        // Only reachable with exact duplicates of c* at lower slots.
        *hood.last_mut().expect("b >= 2") = c_star;
    }
    let own = euclidean(&x_star, bank.element(c_star)) as f64;
    let dists: Vec<f64> = hood.iter().map(|&j| euclidean(&x_star, bank.element(j)) as f64).collect();
    let shift = dists.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = dists.iter().map(|d| (d - shift).exp()).sum();
    let weight = 1.0 - (own - shift).exp() / total;
    Ok(ImageScore {
        score: (weight * patch_score as f64) as f32,
        weight,
        patch,
        patch_score,
        bank_index: c_star,
    })
}

pub fn image_score(
    bank: &MemoryBank,
    patch_scores: &PatchScores,
    batch: &EmbeddingBatch,
    b: usize,
) -> Result<f32, ScoringError> {
    image_score_detail(bank, patch_scores, batch, b).map(|s| s.score)
}

/// Per-axis interpolation plan: for each output index, `(lower, upper, t)`.
///
/// Grid knots sit at output positions `round(i · (out − 1) / (in − 1))`, so
/// the first and last knots land on the border pixels and every grid value is
/// reproduced exactly at its knot pixel.
fn axis_plan(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    if src == 1 {
        return vec![(0, 0, 0.0); dst];
    }
    let scale = (dst - 1) as f64 / (src - 1) as f64;
    let knots: Vec<usize> = (0..src).map(|i| (i as f64 * scale).round() as usize).collect();
    let mut plan = Vec::with_capacity(dst);
    let mut seg = 0;
    for y in 0..dst {
        while seg + 2 < src && y >= knots[seg + 1] {
            seg += 1;
        }
        let (k0, k1) = (knots[seg], knots[seg + 1]);
        let t = (y.saturating_sub(k0)) as f64 / (k1 - k0) as f64;
        plan.push((seg, seg + 1, t.min(1.0)));
    }
    plan
}

/// Bilinear upsampling of a score grid to `size = (H, W)`.
pub fn upsample(grid: ArrayView2<'_, f32>, size: (usize, usize)) -> Result<Array2<f32>, ScoringError> {
    let (gh, gw) = grid.dim();
    let (h, w) = size;
    if gh == 0 || gw == 0 || h < gh || w < gw {
        return Err(ScoringError::InvalidSize { size, grid: (gh, gw) });
    }
    let rows = axis_plan(gh, h);
    let cols = axis_plan(gw, w);
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        let (r0, r1, ty) = rows[y];
        let (c0, c1, tx) = cols[x];
        let top = (1.0 - tx) * grid[(r0, c0)] as f64 + tx * grid[(r0, c1)] as f64;
        let bottom = (1.0 - tx) * grid[(r1, c0)] as f64 + tx * grid[(r1, c1)] as f64;
        ((1.0 - ty) * top + ty * bottom) as f32
    }))
}

/// Mirror index into `0..n` (`d c b a | a b c d | d c b a`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

fn gaussian_kernel(sigma: f32) -> Vec<f64> {
    let sigma = sigma as f64;
    let radius = (4.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Separable Gaussian blur, kernel truncated at 4σ, mirrored borders.
pub fn gaussian_smooth(map: ArrayView2<'_, f32>, sigma: f32) -> Result<Array2<f32>, ScoringError> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(ScoringError::InvalidSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(map.to_owned());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = map.dim();
    let horizontal = Array2::from_shape_fn((h, w), |(y, x)| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * map[(y, reflect(x as isize + k as isize - radius, w))] as f64)
            .sum::<f64>()
    });
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        kernel
            .iter()
            .enumerate()
            .map(|(k, wt)| wt * horizontal[(reflect(y as isize + k as isize - radius, h), x)])
            .sum::<f64>() as f32
    }))
}

/// Upsamples patch scores to `image_size` and optionally smooths (`sigma = 0` disables).
pub fn build_map(
    patch_scores: &PatchScores,
    image_size: (usize, usize),
    sigma: f32,
) -> Result<Array2<f32>, ScoringError> {
    let up = upsample(patch_scores.scores.view(), image_size)?;
    gaussian_smooth(up.view(), sigma)
}

/// Patch scores, image score and pixel map for one image.
pub fn score_image(
    bank: &MemoryBank,
    batch: &EmbeddingBatch,
    image_size: (usize, usize),
    config: &ScoringConfig,
) -> Result<AnomalyMap, ScoringError> {
    let patches = score_patches(bank, batch)?;
    let image = image_score(bank, &patches, batch, config.neighbors)?;
    let pixel_scores = build_map(&patches, image_size, config.sigma)?;
    Ok(AnomalyMap { pixel_scores, image_score: image, source_id: batch.source_id().to_string() })
}

/// Min–max normalisation to `0..=255` over `[lo, hi]`; a flat range maps to 0.
pub fn normalize_to_u8(map: ArrayView2<'_, f32>, lo: f32, hi: f32) -> Array2<u8> {
    let span = hi - lo;
    map.mapv(|v| {
        if span > 0.0 {
            (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
        } else {
            0
        }
    })
}
