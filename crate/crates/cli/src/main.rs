use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use cad_core::coreset::{export_coreset, MemoryBank};
use cad_core::pipeline::{
    generate_synthetic, metrics_from_scores, run_joint, score_one, PipelineError, RunConfig, Sampler,
    SequenceRunner, SyntheticSpec, PROGRESS_FILE,
};
use cad_core::tensor_io::{load_bank, save_bank};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cad", version, about = "Continual anomaly detection over a shared embedding coreset")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on tasks one after another, evaluating all seen tasks after each stage.
    RunSequence {
        #[command(flatten)]
        run: RunArgs,
        /// Write a checkpoint here after every stage.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Continue from the checkpoint in --checkpoint-dir if one exists.
        #[arg(long, requires = "checkpoint_dir")]
        resume: bool,
        /// Stop once this many stages are complete (resume later with --resume).
        #[arg(long, requires = "checkpoint_dir")]
        max_stages: Option<usize>,
    },
    /// Build one bank from all tasks at once and evaluate every task.
    RunJoint {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "incremental")]
        sampler: Sampler,
    },
    /// Score one embedding tensor against a saved bank.
    ScoreOne {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = cad_core::scoring::DEFAULT_NEIGHBORS)]
        neighbor_b: usize,
        #[arg(long, default_value_t = cad_core::scoring::DEFAULT_SIGMA)]
        smoothing_sigma: f32,
        #[arg(long, requires = "image_width")]
        image_height: Option<usize>,
        #[arg(long, requires = "image_height")]
        image_width: Option<usize>,
    },
    /// Copy a bank snapshot and write its per-task element counts.
    ExportCoreset {
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a seeded synthetic dataset tree.
    GenSynthetic {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 2)]
        tasks: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 100)]
        train_images: usize,
        #[arg(long, default_value_t = 50)]
        test_normal: usize,
        #[arg(long, default_value_t = 50)]
        test_anomalous: usize,
        /// In units of the cluster standard deviation.
        #[arg(long, default_value_t = 8.0)]
        anomaly_margin: f32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute per-task metrics from a run's scores/ directory.
    Metrics {
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset_root: Option<String>,
    /// Comma-separated; empty means every task under the root, alphabetically.
    #[arg(long)]
    task_order: Option<String>,
    #[arg(long)]
    coreset_capacity: Option<String>,
    #[arg(long)]
    neighbor_b: Option<String>,
    #[arg(long)]
    smoothing_sigma: Option<String>,
    #[arg(long)]
    batch_rows: Option<String>,
    #[arg(long)]
    eval_every_stage: Option<String>,
    #[arg(long)]
    rng_seed: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| PipelineError::File { path: path.clone(), source })?;
                RunConfig::from_kv_text(&text)?
            }
            None => RunConfig::default(),
        };
        let overrides = [
            ("dataset_root", &self.dataset_root),
            ("task_order", &self.task_order),
            ("coreset_capacity", &self.coreset_capacity),
            ("neighbor_b", &self.neighbor_b),
            ("smoothing_sigma", &self.smoothing_sigma),
            ("batch_rows", &self.batch_rows),
            ("eval_every_stage", &self.eval_every_stage),
            ("rng_seed", &self.rng_seed),
            ("output_dir", &self.output_dir),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v).map_err(PipelineError::Config)?;
            }
        }
        cfg.resolve_tasks()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::RunSequence { run, checkpoint_dir, resume, max_stages } => {
            let cfg = run.resolve()?;
            let mut runner = match &checkpoint_dir {
                Some(dir) if resume && dir.join(PROGRESS_FILE).is_file() => SequenceRunner::resume(cfg, dir)?,
                _ => SequenceRunner::new(cfg)?,
            };
            while !runner.is_finished() {
                let record = runner.run_next_stage()?;
                eprintln!("stage {} ({}) done", record.stage, record.task_id);
                if let Some(dir) = &checkpoint_dir {
                    runner.checkpoint(dir)?;
                }
                if max_stages.is_some_and(|n| runner.stages_done() >= n) && !runner.is_finished() {
                    eprintln!("stopped after stage {}", runner.stages_done());
                    return Ok(());
                }
            }
            runner.write_outputs()?;
            print!("{}", runner.report()?.render_table());
        }
        Command::RunJoint { run, sampler } => {
            let outcome = run_joint(run.resolve()?, sampler)?;
            print!("{}", outcome.report.render_table());
        }
        Command::ScoreOne { bank, embedding, output, neighbor_b, smoothing_sigma, image_height, image_width } => {
            let scoring = cad_core::scoring::ScoringConfig { neighbors: neighbor_b, sigma: smoothing_sigma };
            let size = image_height.zip(image_width);
            let out = score_one(&bank, &embedding, &output, &scoring, size)?;
            println!("image_score = {}", out.map.image_score);
            println!("map = {}", out.f32_map.display());
            println!("map_u8 = {}", out.u8_map.display());
        }
        Command::ExportCoreset { bank, output } => {
            let snapshot = load_bank(&bank).map_err(PipelineError::Io)?;
            let bank = MemoryBank::from_snapshot(&snapshot).map_err(PipelineError::Coreset)?;
            let export = export_coreset(&bank);
            fs::create_dir_all(&output).map_err(|source| PipelineError::File { path: output.clone(), source })?;
            save_bank(&export.snapshot, output.join("coreset.cadt")).map_err(PipelineError::Io)?;
            let counts = output.join("task_counts.json");
            fs::write(&counts, export.counts_json()).map_err(|source| PipelineError::File { path: counts, source })?;
            for (task, n) in &export.task_counts {
                println!("{task}\t{n}");
            }
        }
        Command::GenSynthetic { output, tasks, dim, train_images, test_normal, test_anomalous, anomaly_margin, seed } => {
            let spec = SyntheticSpec {
                tasks,
                dim,
                train_images,
                test_normal,
                test_anomalous,
                anomaly_margin,
                seed,
                ..Default::default()
            };
            for name in generate_synthetic(&output, &spec).map_err(PipelineError::Io)? {
                println!("{name}");
            }
        }
        Command::Metrics { scores } => {
            println!("task\tI-AUROC\tP-AUPR");
            for m in metrics_from_scores(&scores)? {
                let pixel = m.pixel_aupr.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6}"));
                println!("{}\t{:.6}\t{pixel}", m.task_id, m.image_auroc);
            }
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("error: kind=usage message={}", one_line(e.to_string().trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: kind={} message={}", e.kind(), one_line(&e.to_string()));
            ExitCode::FAILURE
        }
    }
}

