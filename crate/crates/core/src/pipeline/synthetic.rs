//! Seeded synthetic task trees: each task owns a few isotropic Gaussian
//! clusters in embedding space; anomalous test images carry a rectangular
//! block of patches pushed `anomaly_margin` standard deviations off their
//! cluster in a random direction.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor_io::{
    write_labels, write_task_config, write_tensor, EmbeddingBatch, TensorFile, TensorIoError, LABELS_FILE, MASKS_DIR,
    TENSOR_EXT, TEST_DIR, TRAIN_DIR,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub dim: usize,
    pub grid: (usize, usize),
    /// Image pixels per patch along each axis.
    pub patch_pixels: usize,
    pub clusters_per_task: usize,
    /// Standard deviation of every cluster.
    pub sigma: f32,
    /// Standard deviation of cluster centres around the origin.
    pub center_spread: f32,
    /// Displacement of anomalous patches, in units of `sigma`.
    pub anomaly_margin: f32,
    pub train_images: usize,
    pub test_normal: usize,
    pub test_anomalous: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            tasks: 2,
            dim: 8,
            grid: (8, 8),
            patch_pixels: 4,
            clusters_per_task: 4,
            sigma: 1.0,
            center_spread: 40.0,
            anomaly_margin: 8.0,
            train_images: 100,
            test_normal: 50,
            test_anomalous: 50,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn image_size(&self) -> (usize, usize) {
        (self.grid.0 * self.patch_pixels, self.grid.1 * self.patch_pixels)
    }

    pub fn task_name(index: usize) -> String {
        format!("task_{index:02}")
    }
}

struct TaskModel {
    centers: Vec<Vec<f32>>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f32) -> Vec<f32> {
    (0..dim).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng) as f32).collect::<Vec<f32>>()
}

impl TaskModel {
    fn sample_patch(&self, rng: &mut ChaCha8Rng, sigma: f32) -> Vec<f32> {
        let c = &self.centers[rng.random_range(0..self.centers.len())];
        c.iter().map(|&m| m + sigma * Distribution::<f64>::sample(&StandardNormal, &mut *rng) as f32).collect::<Vec<f32>>()
    }

    fn normal_image(&self, rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> Array2<f32> {
        let n = spec.grid.0 * spec.grid.1;
        let values: Vec<f32> = (0..n).flat_map(|_| self.sample_patch(rng, spec.sigma)).collect();
        Array2::from_shape_vec((n, spec.dim), values).expect("n * dim values")
    }

    /// Returns embeddings plus the anomalous patch rectangle `(row0, col0, rows, cols)`.
    fn anomalous_image(&self, rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> (Array2<f32>, (usize, usize, usize, usize)) {
        let mut x = self.normal_image(rng, spec);
        let (gh, gw) = spec.grid;
        let rows = rng.random_range(1..=gh.min(3));
        let cols = rng.random_range(1..=gw.min(3));
        let r0 = rng.random_range(0..=gh - rows);
        let c0 = rng.random_range(0..=gw - cols);
        for r in r0..r0 + rows {
            for c in c0..c0 + cols {
                let mut dir = gaussian_vec(rng, spec.dim, 1.0);
                let norm = dir.iter().map(|v| v * v).sum::<f32>().sqrt().max(f32::MIN_POSITIVE);
                dir.iter_mut().for_each(|v| *v *= spec.anomaly_margin * spec.sigma / norm);
                let mut row = x.row_mut(r * gw + c);
                row.iter_mut().zip(&dir).for_each(|(v, d)| *v += d);
            }
        }
        (x, (r0, c0, rows, cols))
    }
}

/// Writes `spec.tasks` task directories under `root`. Deterministic in `spec.seed`.
pub fn generate_synthetic(root: impl AsRef<Path>, spec: &SyntheticSpec) -> Result<Vec<String>, TensorIoError> {
    let root = root.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut names = Vec::with_capacity(spec.tasks);
    let (ih, iw) = spec.image_size();
    for t in 0..spec.tasks {
        let name = SyntheticSpec::task_name(t);
        let model = TaskModel {
            centers: (0..spec.clusters_per_task).map(|_| gaussian_vec(&mut rng, spec.dim, spec.center_spread)).collect(),
        };
        let task_dir = root.join(&name);
        let train_dir = task_dir.join(TRAIN_DIR);
        let test_dir = task_dir.join(TEST_DIR);
        let masks_dir = task_dir.join(MASKS_DIR);
        for dir in [&train_dir, &test_dir, &masks_dir] {
            fs::create_dir_all(dir).map_err(|source| TensorIoError::Io { path: dir.clone(), offset: 0, source })?;
        }
        write_task_config(&task_dir, (ih, iw))?;

        for i in 0..spec.train_images {
            let x = model.normal_image(&mut rng, spec);
            let id = format!("{i:04}");
            EmbeddingBatch::new(x, Some(spec.grid), &name, &id)?.write(train_dir.join(format!("{id}.{TENSOR_EXT}")))?;
        }

        // Interleave normal and anomalous test images so file order mixes classes.
        let total = spec.test_normal + spec.test_anomalous;
        let mut labels = Vec::with_capacity(total);
        let (mut normal_left, mut anomalous_left) = (spec.test_normal, spec.test_anomalous);
        for i in 0..total {
            let anomalous = anomalous_left > 0 && (normal_left == 0 || rng.random_bool(0.5));
            let id = format!("{i:04}");
            let mut mask = vec![0u8; ih * iw];
            let x = if anomalous {
                anomalous_left -= 1;
                let (x, (r0, c0, rows, cols)) = model.anomalous_image(&mut rng, spec);
                let p = spec.patch_pixels;
                for y in r0 * p..(r0 + rows) * p {
                    for xx in c0 * p..(c0 + cols) * p {
                        mask[y * iw + xx] = 1;
                    }
                }
                x
            } else {
                normal_left -= 1;
                model.normal_image(&mut rng, spec)
            };
            labels.push(u8::from(anomalous));
            EmbeddingBatch::new(x, Some(spec.grid), &name, &id)?.write(test_dir.join(format!("{id}.{TENSOR_EXT}")))?;
            write_tensor(&TensorFile::from_u8(vec![ih, iw], mask)?, masks_dir.join(format!("{id}.{TENSOR_EXT}")))?;
        }
        write_labels(test_dir.join(LABELS_FILE), &labels)?;
        names.push(name);
    }
    Ok(names)
}
