use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{emit_time_curve, time_curve_csv, ImageUpdate, MetricReport, MetricSeries, StageRecord};
use super::{PipelineError, RunConfig};
use crate::coreset::{export_coreset, greedy_kcenter, random_sample, EmbeddingPool, MemoryBank, UpdateStats};
use crate::metrics::{aupr, auroc, MetricKind, ScoredSet};
use crate::scoring::{normalize_to_u8, score_image, AnomalyMap, ScoringConfig, PATCH_PIXELS};
use crate::tensor_io::{
    load_bank, load_task_parts, save_bank, write_tensor, EmbeddingBatch, TaskDataset, TaskParts, TensorFile,
};

pub const BANK_FILE: &str = "bank.cadt";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const TIME_CURVE_FILE: &str = "time_curve.csv";
pub const COUNTS_FILE: &str = "coreset_counts.json";
pub const PROGRESS_FILE: &str = "progress.json";
pub const IMAGE_SCORES_FILE: &str = "image_scores.csv";
pub const PIXEL_SCORES_FILE: &str = "pixel_scores.cadt";
pub const PIXEL_LABELS_FILE: &str = "pixel_labels.cadt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Incremental,
    GreedyKCenter,
    Random,
}

impl std::str::FromStr for Sampler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "incremental" => Ok(Sampler::Incremental),
            "greedy-kcenter" => Ok(Sampler::GreedyKCenter),
            "random" => Ok(Sampler::Random),
            _ => Err(format!("unknown sampler {s:?} (incremental, greedy-kcenter, random)")),
        }
    }
}

/// Scores of one task's test split against a frozen bank.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskEvaluation {
    pub task_id: String,
    pub sources: Vec<String>,
    pub image: ScoredSet,
    /// `None` when some anomalous image has no mask.
    pub pixel: Option<ScoredSet>,
    pub image_auroc: f64,
    pub pixel_aupr: Option<f64>,
}

impl TaskEvaluation {
    fn write_scores(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::file(dir, e))?;
        let mut csv = String::from("source_id,label,score\n");
        for ((src, label), score) in self.sources.iter().zip(self.image.labels()).zip(self.image.scores()) {
            csv.push_str(&format!("{src},{label},{score}\n"));
        }
        let path = dir.join(IMAGE_SCORES_FILE);
        fs::write(&path, csv).map_err(|e| PipelineError::file(&path, e))?;
        if let Some(pixel) = &self.pixel {
            let scores = pixel.scores().iter().map(|&s| s as f32).collect();
            write_tensor(&TensorFile::from_f32(vec![pixel.len()], scores).map_err(PipelineError::Io)?, dir.join(PIXEL_SCORES_FILE))
                .map_err(PipelineError::Io)?;
            write_tensor(
                &TensorFile::from_u8(vec![pixel.len()], pixel.labels().to_vec()).map_err(PipelineError::Io)?,
                dir.join(PIXEL_LABELS_FILE),
            )
            .map_err(PipelineError::Io)?;
        }
        Ok(())
    }
}

pub fn evaluate_task(bank: &MemoryBank, data: &TaskDataset, scoring: &ScoringConfig) -> Result<TaskEvaluation, PipelineError> {
    let scoring_err = |source| PipelineError::Scoring { task: data.task_id.clone(), source };
    let maps: Vec<AnomalyMap> = data
        .test
        .par_iter()
        .map(|s| score_image(bank, &s.batch, data.image_size, scoring))
        .collect::<Result<_, _>>()
        .map_err(scoring_err)?;

    let metrics_err = |source| PipelineError::Metrics { task: data.task_id.clone(), source };
    let image = ScoredSet::image(
        maps.iter().map(|m| m.image_score as f64).collect(),
        data.test.iter().map(|s| s.label).collect(),
    )
    .map_err(metrics_err)?;
    let image_auroc = auroc(&image).map_err(metrics_err)?;

    let pixel_available = data.has_pixel_ground_truth() && data.test.iter().all(|s| s.mask.is_some() || s.label == 0);
    let pixel = if pixel_available {
        let (h, w) = data.image_size;
        let mut scores = Vec::with_capacity(maps.len() * h * w);
        let mut labels = Vec::with_capacity(maps.len() * h * w);
        for (m, s) in maps.iter().zip(&data.test) {
            scores.extend(m.pixel_scores.iter().map(|&v| v as f64));
            match &s.mask {
                Some(mask) => labels.extend(mask.iter().copied()),
                None => labels.extend(std::iter::repeat_n(0u8, h * w)),
            }
        }
        Some(ScoredSet::pixel(scores, labels).map_err(metrics_err)?)
    } else {
        None
    };
    let pixel_aupr = pixel.as_ref().filter(|p| p.positives() > 0).map(aupr).transpose().map_err(metrics_err)?;

    Ok(TaskEvaluation {
        task_id: data.task_id.clone(),
        sources: data.test.iter().map(|s| s.batch.source_id().to_string()).collect(),
        image,
        pixel,
        image_auroc,
        pixel_aupr,
    })
}

/// Streams a task's images into the bank, creating it on the first batch.
fn train_on(
    bank: &mut Option<MemoryBank>,
    images: &[EmbeddingBatch],
    cfg: &RunConfig,
) -> Result<Vec<ImageUpdate>, PipelineError> {
    let mut updates = Vec::with_capacity(images.len());
    for img in images {
        let b = match bank {
            Some(b) => b,
            None => bank.insert(MemoryBank::new(cfg.coreset_capacity, img.dim()).map_err(PipelineError::Coreset)?),
        };
        let mut stats = UpdateStats::empty();
        for chunk in img.chunks(cfg.batch_rows) {
            stats.absorb(&b.update(&chunk).map_err(PipelineError::Coreset)?);
        }
        updates.push(ImageUpdate {
            source_id: img.source_id().to_string(),
            inserted: stats.inserted,
            evicted: stats.evicted,
            iterations: stats.iterations,
            seconds: stats.wall_time.as_secs_f64(),
        });
    }
    Ok(updates)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub stages: Vec<StageRecord>,
    pub bank: Option<MemoryBank>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Progress {
    next_stage: usize,
    task_order: Vec<String>,
    image_history: Vec<(usize, Vec<f64>)>,
    pixel_history: Vec<(usize, Vec<Option<f64>>)>,
}

/// Sequential training over `cfg.task_order`, one stage per task.
pub struct SequenceRunner {
    cfg: RunConfig,
    bank: Option<MemoryBank>,
    next_stage: usize,
    image_history: Vec<(usize, Vec<f64>)>,
    pixel_history: Vec<(usize, Vec<Option<f64>>)>,
    records: Vec<StageRecord>,
    final_evaluations: Vec<TaskEvaluation>,
}

impl SequenceRunner {
    pub fn new(cfg: RunConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            bank: None,
            next_stage: 0,
            image_history: Vec::new(),
            pixel_history: Vec::new(),
            records: Vec::new(),
            final_evaluations: Vec::new(),
        })
    }

    /// Restores a runner from a directory written by [`SequenceRunner::checkpoint`].
    pub fn resume(cfg: RunConfig, checkpoint_dir: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let dir = checkpoint_dir.as_ref();
        let mut runner = Self::new(cfg)?;
        let path = dir.join(PROGRESS_FILE);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::file(&path, e))?;
        let progress: Progress =
            serde_json::from_str(&text).map_err(|e| PipelineError::Checkpoint(format!("{}: {e}", path.display())))?;
        if progress.task_order != runner.cfg.task_order {
            return Err(PipelineError::Checkpoint("task order differs from the checkpoint".into()));
        }
        if progress.next_stage > runner.cfg.task_order.len() {
            return Err(PipelineError::Checkpoint(format!("stage {} beyond task list", progress.next_stage)));
        }
        let bank_path = dir.join(BANK_FILE);
        if crate::tensor_io::sidecar_path(&bank_path).is_file() {
            let snapshot = load_bank(&bank_path).map_err(PipelineError::Io)?;
            if snapshot.capacity != runner.cfg.coreset_capacity {
                return Err(PipelineError::CapacityMisconfiguration(format!(
                    "checkpoint capacity {} differs from configured {}",
                    snapshot.capacity, runner.cfg.coreset_capacity
                )));
            }
            runner.bank = Some(MemoryBank::from_snapshot(&snapshot).map_err(PipelineError::Coreset)?);
        }
        runner.next_stage = progress.next_stage;
        runner.image_history = progress.image_history;
        runner.pixel_history = progress.pixel_history;
        Ok(runner)
    }

    pub fn checkpoint(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| PipelineError::file(dir, e))?;
        if let Some(bank) = &self.bank {
            save_bank(&bank.snapshot(), dir.join(BANK_FILE)).map_err(PipelineError::Io)?;
        }
        let progress = Progress {
            next_stage: self.next_stage,
            task_order: self.cfg.task_order.clone(),
            image_history: self.image_history.clone(),
            pixel_history: self.pixel_history.clone(),
        };
        let path = dir.join(PROGRESS_FILE);
        let text = serde_json::to_string_pretty(&progress).expect("progress serializes");
        fs::write(&path, text).map_err(|e| PipelineError::file(&path, e))
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn bank(&self) -> Option<&MemoryBank> {
        self.bank.as_ref()
    }

    pub fn records(&self) -> &[StageRecord] {
        &self.records
    }

    pub fn stages_done(&self) -> usize {
        self.next_stage
    }

    pub fn is_finished(&self) -> bool {
        self.next_stage == self.cfg.task_order.len()
    }

    /// Trains on the next task and evaluates every task seen so far.
    pub fn run_next_stage(&mut self) -> Result<&StageRecord, PipelineError> {
        let k = self.next_stage;
        let Some(task_id) = self.cfg.task_order.get(k).cloned() else {
            return Err(PipelineError::Config("all stages already ran".into()));
        };
        let stage = k + 1;
        let load = |task: &str, parts| {
            load_task_parts(&self.cfg.dataset_root, task, parts).map_err(|source| PipelineError::TaskLoad {
                stage,
                task: task.to_string(),
                source,
            })
        };
        let train = load(&task_id, TaskParts::TrainOnly)?;
        let updates = train_on(&mut self.bank, &train.train, &self.cfg)?;
        drop(train);

        let last = stage == self.cfg.task_order.len();
        let (mut image_row, mut pixel_row) = (None, None);
        if self.cfg.eval_every_stage || last {
            let bank = self.bank.as_ref().ok_or_else(|| PipelineError::Scoring {
                task: task_id.clone(),
                source: crate::scoring::ScoringError::EmptyBank,
            })?;
            let mut evaluations = Vec::with_capacity(stage);
            for task in &self.cfg.task_order[..stage] {
                let data = load(task, TaskParts::TestOnly)?;
                evaluations.push(evaluate_task(bank, &data, &self.cfg.scoring())?);
            }
            let img: Vec<f64> = evaluations.iter().map(|e| e.image_auroc).collect();
            let pix: Vec<Option<f64>> = evaluations.iter().map(|e| e.pixel_aupr).collect();
            self.image_history.push((stage, img.clone()));
            self.pixel_history.push((stage, pix.clone()));
            image_row = Some(img);
            pixel_row = pix.into_iter().collect::<Option<Vec<f64>>>();
            if last {
                self.final_evaluations = evaluations;
            }
        }

        let bank_snapshot_path = match (&self.cfg.output_dir, &self.bank) {
            (Some(out), Some(bank)) => {
                let dir = out.join("stages").join(format!("{stage:02}_{task_id}"));
                fs::create_dir_all(&dir).map_err(|e| PipelineError::file(&dir, e))?;
                let path = dir.join(BANK_FILE);
                save_bank(&bank.snapshot(), &path).map_err(PipelineError::Io)?;
                Some(path)
            }
            _ => None,
        };

        self.next_stage += 1;
        self.records.push(StageRecord { stage, task_id, updates, image_row, pixel_row, bank_snapshot_path });
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn report(&self) -> Result<MetricReport, PipelineError> {
        let image = MetricSeries::from_history(MetricKind::ImageAuroc, self.image_history.clone())
            .ok_or_else(|| PipelineError::Config("no stage has been evaluated".into()))?;
        let task_ids = self.cfg.task_order[..image.final_values.len()].to_vec();
        let pixel_complete: Option<Vec<(usize, Vec<f64>)>> = self
            .pixel_history
            .iter()
            .map(|(s, row)| row.iter().copied().collect::<Option<Vec<f64>>>().map(|r| (*s, r)))
            .collect();
        let pixel = pixel_complete.and_then(|h| MetricSeries::from_history(MetricKind::PixelAupr, h));
        Ok(MetricReport { task_ids, image, pixel })
    }

    /// Runs the remaining stages.
    pub fn run_to_end(&mut self) -> Result<(), PipelineError> {
        while !self.is_finished() {
            self.run_next_stage()?;
        }
        Ok(())
    }

    /// Writes report, time curve, per-task coreset counts and final scores to `output_dir`.
    pub fn write_outputs(&self) -> Result<(), PipelineError> {
        let Some(out) = &self.cfg.output_dir else { return Ok(()) };
        let report = self.report()?;
        write_report(out, &report)?;
        let path = out.join(TIME_CURVE_FILE);
        fs::write(&path, time_curve_csv(&emit_time_curve(&self.records))).map_err(|e| PipelineError::file(&path, e))?;
        if let Some(bank) = &self.bank {
            let path = out.join(COUNTS_FILE);
            fs::write(&path, export_coreset(bank).counts_json()).map_err(|e| PipelineError::file(&path, e))?;
        }
        for e in &self.final_evaluations {
            e.write_scores(&out.join("scores").join(&e.task_id))?;
        }
        Ok(())
    }

    pub fn into_outcome(self) -> Result<RunOutcome, PipelineError> {
        let report = self.report()?;
        Ok(RunOutcome { report, stages: self.records, bank: self.bank })
    }
}

pub fn write_report(out: &Path, report: &MetricReport) -> Result<(), PipelineError> {
    fs::create_dir_all(out).map_err(|e| PipelineError::file(out, e))?;
    let path = out.join(REPORT_TABLE_FILE);
    fs::write(&path, report.render_table()).map_err(|e| PipelineError::file(&path, e))?;
    let path = out.join(REPORT_JSON_FILE);
    fs::write(&path, report.to_json()).map_err(|e| PipelineError::file(&path, e))
}

/// Trains on every task in order, evaluating all seen tasks after each stage.
pub fn run_sequence(cfg: RunConfig) -> Result<RunOutcome, PipelineError> {
    let mut runner = SequenceRunner::new(cfg)?;
    runner.run_to_end()?;
    runner.write_outputs()?;
    runner.into_outcome()
}

/// Builds one bank from all tasks' training data at once with the chosen
/// sampler and evaluates every task.
pub fn run_joint(cfg: RunConfig, sampler: Sampler) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let mut train = Vec::new();
    for (k, task) in cfg.task_order.iter().enumerate() {
        let data = load_task_parts(&cfg.dataset_root, task, TaskParts::TrainOnly).map_err(|source| {
            PipelineError::TaskLoad { stage: k + 1, task: task.clone(), source }
        })?;
        train.extend(data.train);
    }
    let mut updates = Vec::new();
    let bank = match sampler {
        Sampler::Incremental => {
            let mut bank = None;
            updates = train_on(&mut bank, &train, &cfg)?;
            bank
        }
        Sampler::GreedyKCenter | Sampler::Random => {
            let pool = EmbeddingPool::from_batches(&train).map_err(PipelineError::Coreset)?;
            let k = cfg.coreset_capacity.min(pool.len());
            let mut bank = match sampler {
                Sampler::GreedyKCenter => greedy_kcenter(&pool, k, 0),
                _ => random_sample(&pool, k, cfg.rng_seed),
            }
            .map_err(PipelineError::Coreset)?;
            if k < cfg.coreset_capacity {
                // Keep the configured capacity in snapshots.
                let mut snap = bank.snapshot();
                snap.capacity = cfg.coreset_capacity;
                bank = MemoryBank::from_snapshot(&snap).map_err(PipelineError::Coreset)?;
            }
            Some(bank)
        }
    };
    drop(train);
    let bank = bank.ok_or_else(|| PipelineError::Config("no training data".into()))?;

    let mut evaluations = Vec::new();
    for (k, task) in cfg.task_order.iter().enumerate() {
        let data = load_task_parts(&cfg.dataset_root, task, TaskParts::TestOnly).map_err(|source| {
            PipelineError::TaskLoad { stage: k + 1, task: task.clone(), source }
        })?;
        evaluations.push(evaluate_task(&bank, &data, &cfg.scoring())?);
    }
    let image = MetricSeries::from_history(MetricKind::ImageAuroc, vec![(1, evaluations.iter().map(|e| e.image_auroc).collect())])
        .expect("one row");
    let pixel = evaluations
        .iter()
        .map(|e| e.pixel_aupr)
        .collect::<Option<Vec<f64>>>()
        .and_then(|row| MetricSeries::from_history(MetricKind::PixelAupr, vec![(1, row)]));
    let report = MetricReport { task_ids: cfg.task_order.clone(), image, pixel };

    let task_id = match sampler {
        Sampler::Incremental => "joint-incremental",
        Sampler::GreedyKCenter => "joint-greedy-kcenter",
        Sampler::Random => "joint-random",
    };
    let record = StageRecord {
        stage: 1,
        task_id: task_id.to_string(),
        updates,
        image_row: Some(report.image.final_values.clone()),
        pixel_row: report.pixel.as_ref().map(|p| p.final_values.clone()),
        bank_snapshot_path: None,
    };
    let mut record = record;
    if let Some(out) = &cfg.output_dir {
        write_report(out, &report)?;
        let path = out.join(BANK_FILE);
        save_bank(&bank.snapshot(), &path).map_err(PipelineError::Io)?;
        record.bank_snapshot_path = Some(path);
        let counts = out.join(COUNTS_FILE);
        fs::write(&counts, export_coreset(&bank).counts_json()).map_err(|e| PipelineError::file(&counts, e))?;
        for e in &evaluations {
            e.write_scores(&out.join("scores").join(&e.task_id))?;
        }
    }
    Ok(RunOutcome { report, stages: vec![record], bank: Some(bank) })
}

/// Files written by [`score_one`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOneOutput {
    pub map: AnomalyMap,
    pub f32_map: PathBuf,
    pub u8_map: PathBuf,
    pub score_file: PathBuf,
}

/// Scores a single embedding tensor against a saved bank.
///
/// Writes `<stem>.map.cadt` (raw f32 pixel scores), `<stem>.map_u8.cadt`
/// (scores min–max normalised over this image) and `<stem>.score.txt`.
/// `image_size` defaults to 8 pixels per patch.
pub fn score_one(
    bank_path: impl AsRef<Path>,
    embedding_path: impl AsRef<Path>,
    output_dir: impl AsRef<Path>,
    scoring: &ScoringConfig,
    image_size: Option<(usize, usize)>,
) -> Result<ScoreOneOutput, PipelineError> {
    let snapshot = load_bank(bank_path).map_err(PipelineError::Io)?;
    let bank = MemoryBank::from_snapshot(&snapshot).map_err(PipelineError::Coreset)?;
    let embedding_path = embedding_path.as_ref();
    let stem = embedding_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
    let batch = EmbeddingBatch::read(embedding_path, "", &stem).map_err(PipelineError::Io)?;
    let size = match (image_size, batch.grid()) {
        (Some(s), _) => s,
        (None, Some((h, w))) => (h * PATCH_PIXELS, w * PATCH_PIXELS),
        (None, None) => (1, 1),
    };
    let map = score_image(&bank, &batch, size, scoring).map_err(|source| PipelineError::Scoring { task: stem.clone(), source })?;

    let out = output_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| PipelineError::file(out, e))?;
    let (h, w) = map.pixel_scores.dim();
    let f32_map = out.join(format!("{stem}.map.cadt"));
    let values = map.pixel_scores.iter().copied().collect();
    write_tensor(&TensorFile::from_f32(vec![h, w], values).map_err(PipelineError::Io)?, &f32_map).map_err(PipelineError::Io)?;
    let lo = map.pixel_scores.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = map.pixel_scores.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let u8_map = out.join(format!("{stem}.map_u8.cadt"));
    let norm = normalize_to_u8(map.pixel_scores.view(), lo, hi);
    write_tensor(&TensorFile::from_u8(vec![h, w], norm.iter().copied().collect()).map_err(PipelineError::Io)?, &u8_map)
        .map_err(PipelineError::Io)?;
    let score_file = out.join(format!("{stem}.score.txt"));
    fs::write(&score_file, format!("image_score = {}\nmap_min = {lo}\nmap_max = {hi}\n", map.image_score))
        .map_err(|e| PipelineError::file(&score_file, e))?;
    Ok(ScoreOneOutput { map, f32_map, u8_map, score_file })
}

/// Per-task metrics recomputed from a `scores/` tree.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredMetrics {
    pub task_id: String,
    pub image_auroc: f64,
    pub pixel_aupr: Option<f64>,
}

pub fn metrics_from_scores(scores_dir: impl AsRef<Path>) -> Result<Vec<StoredMetrics>, PipelineError> {
    let dir = scores_dir.as_ref();
    let mut tasks: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| PipelineError::file(dir, e))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join(IMAGE_SCORES_FILE).is_file())
        .collect();
    tasks.sort();
    let mut out = Vec::with_capacity(tasks.len());
    for task_dir in tasks {
        let task_id = task_dir.file_name().expect("directory name").to_string_lossy().into_owned();
        let metrics_err = |source| PipelineError::Metrics { task: task_id.clone(), source };
        let path = task_dir.join(IMAGE_SCORES_FILE);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::file(&path, e))?;
        let (mut scores, mut labels) = (Vec::new(), Vec::new());
        for (n, line) in text.lines().enumerate().skip(1) {
            let bad = || PipelineError::Config(format!("{}:{}: malformed score line", path.display(), n + 1));
            let mut fields = line.rsplitn(3, ',');
            let score: f64 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let label: u8 = fields.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            scores.push(score);
            labels.push(label);
        }
        let image_auroc = auroc(&ScoredSet::image(scores, labels).map_err(metrics_err)?).map_err(metrics_err)?;
        let pixel_scores = task_dir.join(PIXEL_SCORES_FILE);
        let pixel_aupr = if pixel_scores.is_file() {
            let s = crate::tensor_io::read_tensor_as(&pixel_scores, crate::tensor_io::DType::F32).map_err(PipelineError::Io)?;
            let l = crate::tensor_io::read_tensor_as(task_dir.join(PIXEL_LABELS_FILE), crate::tensor_io::DType::U8)
                .map_err(PipelineError::Io)?;
            let set = ScoredSet::pixel(
                s.as_f32().expect("f32").iter().map(|&v| v as f64).collect(),
                l.as_u8().expect("u8").to_vec(),
            )
            .map_err(metrics_err)?;
            (set.positives() > 0).then(|| aupr(&set)).transpose().map_err(metrics_err)?
        } else {
            None
        };
        out.push(StoredMetrics { task_id, image_auroc, pixel_aupr });
    }
    Ok(out)
}
