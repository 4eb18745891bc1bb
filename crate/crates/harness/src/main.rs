use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use scribble_core::masks::{ScribbleMask, UNKNOWN};
use scribble_core::scribblesim::{simulate_scribbles, ScribbleSimConfig};
use scribble_harness::ablation::{run_ablation, AblationConfig};
use scribble_harness::checkpoint::Checkpoint;
use scribble_harness::config::TrainConfig;
use scribble_harness::error::{io_err, HarnessError, Result};
use scribble_harness::evaluate::{predict_dataset, score, write_overlay};
use scribble_harness::io::{read_dataset, read_labels, read_text, write_dataset, write_labels, write_text};
use scribble_harness::synth::{generate_dataset, Dataset, SyntheticSpec};
use scribble_harness::train::{log_text, train, Model};

#[derive(Parser)]
#[command(name = "scribble", version, about = "Scribble-supervised segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint and per-step log.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory; defaults to a freshly generated synthetic set.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Directory for PNG overlays of the predictions.
        #[arg(long)]
        overlays: Option<PathBuf>,
    },
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive a scribble mask from a dense 8-bit label image.
    Scribblesim {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        hull_expand: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the largest label in the mask plus one.
        #[arg(long)]
        num_classes: Option<usize>,
    },
    /// Train and score all three presets for several seeds.
    Ablate {
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the training config shared by all runs.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        Some(p) => TrainConfig::parse(&read_text(p)?),
        None => Ok(TrainConfig::default()),
    }
}

fn default_train_data() -> Result<Dataset> {
    generate_dataset(&AblationConfig::desk(1).train_data)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, data, out } => {
            let cfg = load_config(config.as_deref())?;
            let ds = match data {
                Some(d) => read_dataset(&d)?,
                None => default_train_data()?,
            };
            std::fs::create_dir_all(&out).map_err(io_err(&out))?;
            let outcome = train(&cfg, &ds, |l| log::info!("{l}"))?;
            write_text(&out.join("train_log.txt"), &log_text(&outcome.log))?;
            write_text(&out.join("config.txt"), &cfg.to_text())?;
            Checkpoint {
                config: cfg,
                params: outcome.params,
            }
            .save(&out.join("checkpoint.ssck"))?;
        }
        Command::Eval {
            checkpoint,
            data,
            report,
            overlays,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ds = read_dataset(&data)?;
            let model = Model::new(&ck.config)?;
            let preds = predict_dataset(&model, &ck.params, &ds, ck.config.augment.resize)?;
            let rep = score(&ds, &preds)?;
            let text = rep.to_lines();
            write_text(&report, &text)?;
            if let Some(summary) = text.lines().last() {
                println!("{summary}");
            }
            if let Some(dir) = overlays {
                std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                for (case, pred) in ds.cases.iter().zip(&preds) {
                    for (z, (s, p)) in case.slices.iter().zip(pred).enumerate() {
                        write_overlay(&dir.join(format!("{}_slice{z:02}.png", case.id)), &s.image, p)?;
                    }
                }
            }
        }
        Command::GenData { spec, out } => {
            let spec = match spec {
                Some(p) => SyntheticSpec::parse(&read_text(&p)?)?,
                None => SyntheticSpec::default(),
            };
            write_dataset(&out, &generate_dataset(&spec)?)?;
            write_text(&out.join("spec.txt"), &spec.to_text())?;
        }
        Command::Scribblesim {
            input,
            out,
            hull_expand,
            seed,
            num_classes,
        } => {
            let mask = read_labels(&input)?;
            if mask.labels().contains(&UNKNOWN) {
                return Err(HarnessError::Format(format!(
                    "{} holds the unlabeled marker {UNKNOWN}; expected a dense mask",
                    input.display()
                )));
            }
            let n = num_classes.unwrap_or_else(|| mask.max_label().map_or(1, |m| m as usize + 1).max(2));
            let cfg = ScribbleSimConfig {
                hull_expand_px: hull_expand,
                seed,
            };
            let s: ScribbleMask = simulate_scribbles(&mask, n, &cfg)?;
            write_labels(&out, s.map())?;
        }
        Command::Ablate { seeds, out, config } => {
            let mut cfg = AblationConfig::desk(seeds);
            if let Some(p) = config {
                cfg.base = TrainConfig::parse(&read_text(&p)?)?;
            }
            std::fs::create_dir_all(&out).map_err(io_err(&out))?;
            let result = run_ablation(&cfg, Some(&out))?;
            print!("{}", result.table());
            let v = result.verdict();
            println!("{v:?} passes={}", v.passes());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
