//! Command-line experiment runner: `toy`, `train`, `measure`, `attack`, `dknn`.
//!
//! Every subcommand takes either `--preset NAME` or `--config FILE` (JSON, see
//! [`config::ExperimentConfig`]), is deterministic given the resolved configuration, and
//! exits with 0 on success, 2 on configuration errors, and 1 on runtime failures.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod presets;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Run;
use crate::config::{ExperimentConfig, SweepConfig};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "entangle",
    version,
    about = "Soft nearest neighbor loss experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Named configuration.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the training step count.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory (default: the config's `output_dir`, else `out/<command>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gradient descent on 2-D point sets (presets: fig1, fig7, fig2, triplet-compare).
    Toy(Common),
    /// Train a classifier (presets: baseline, entangled, sweep-alpha).
    Train {
        #[command(flatten)]
        common: Common,
        /// Train once per alpha of the sweep grid and write sweep.csv.
        #[arg(long)]
        sweep_alpha: bool,
    },
    /// Per-layer entanglement of a trained model (presets: fixed-t100, optimized).
    Measure {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Adversarial inputs against a trained model (presets: fgsm-sweep, bim-sweep).
    Attack {
        #[command(flatten)]
        common: Common,
        /// Model evaluated on the adversarial inputs.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Model whose gradients generate the attack (transfer setting); defaults to the
        /// evaluated model.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// DkNN credibility of clean, adversarial, and out-of-distribution inputs
    /// (presets: credibility, ood).
    Dknn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory of an `attack` run whose inputs are scored as well.
        #[arg(long)]
        inputs: Option<PathBuf>,
    },
    /// Print the resolved JSON configuration of a preset.
    ShowConfig {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn resolve(common: &Common, allowed: &[&str], command: &'static str) -> CliResult<Run> {
    let seed = common.seed.unwrap_or(0);
    let mut cfg = match (&common.preset, &common.config) {
        (Some(name), None) => {
            if !allowed.contains(&name.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown {command} preset '{name}' (expected one of: {})",
                    allowed.join(", ")
                )));
            }
            presets::preset(name, seed).expect("listed presets exist")
        }
        (None, Some(path)) => ExperimentConfig::from_file(path)?,
        (None, None) => {
            return Err(CliError::Config(
                "pass --preset NAME or --config FILE".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects both"),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        if let Some(toy) = cfg.toy.as_mut() {
            toy.runs.iter_mut().for_each(|r| r.optimizer.seed = s);
        }
    }
    if let Some(steps) = common.steps {
        match (cfg.schedule.as_mut(), cfg.toy.as_mut()) {
            (Some(s), _) => s.steps = steps,
            (None, Some(t)) => t.runs.iter_mut().for_each(|r| r.optimizer.steps = steps),
            (None, None) => {}
        }
        if let Some(sw) = cfg.sweep.as_mut() {
            sw.steps = Some(steps);
        }
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(command));
    Run::new(cfg, out, command)
}

/// Runs one parsed command, printing a short summary to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Toy(common) => {
            let run = resolve(&common, &presets::TOY_PRESETS, "toy")?;
            let summary = commands::cmd_toy(&run)?;
            for s in &summary {
                println!(
                    "{}: loss {:.4} -> {:.4}, {}-NN accuracy {:.3} -> {:.3}, spread {:.3} -> {:.3}",
                    s.name,
                    s.initial_loss,
                    s.final_loss,
                    run.config.toy.as_ref().map_or(1, |t| t.knn_k),
                    s.initial_knn_accuracy,
                    s.final_knn_accuracy,
                    s.initial_spread,
                    s.final_spread
                );
            }
            let find = |n: &str| summary.iter().find(|s| s.name == n);
            if let (Some(a), Some(b)) = (find("snn_max"), find("triplet_max")) {
                let rel = if a.final_spread > b.final_spread {
                    ">"
                } else {
                    "<="
                };
                println!(
                    "snn_max_spread {:.4} {rel} triplet_max_spread {:.4}",
                    a.final_spread, b.final_spread
                );
            }
        }
        Command::Train {
            common,
            sweep_alpha,
        } => {
            let mut run = resolve(&common, &presets::TRAIN_PRESETS, "train")?;
            if sweep_alpha || run.config.sweep.is_some() {
                if run.config.sweep.is_none() {
                    run.config.sweep = Some(SweepConfig {
                        alphas: presets::ALPHA_GRID.to_vec(),
                        steps: None,
                    });
                }
                let points = commands::cmd_sweep(&run)?;
                for p in &points {
                    println!(
                        "alpha {:>6}: holdout acc {:.4}, test acc {:.4}",
                        p.alpha, p.holdout_accuracy, p.test_accuracy
                    );
                }
                if let Some(a) = commands::best_negative_alpha(&points) {
                    println!("best negative alpha {a}");
                }
            } else {
                let o = commands::cmd_train(&run)?;
                let last = o.log.last().expect("final row");
                println!(
                    "step {}: train ce {:.4}, test ce {:.4}, test acc {:.4}",
                    last.step, last.train_ce, last.test_ce, last.test_acc
                );
            }
        }
        Command::Measure { common, checkpoint } => {
            let run = resolve(&common, &presets::MEASURE_PRESETS, "measure")?;
            for l in commands::cmd_measure(&run, &checkpoint)? {
                println!(
                    "layer {}: loss {:.6} at T {:.6e}",
                    l.layer + 1,
                    l.loss,
                    l.temperature
                );
            }
        }
        Command::Attack {
            common,
            checkpoint,
            source,
        } => {
            let run = resolve(&common, &presets::ATTACK_PRESETS, "attack")?;
            for o in commands::cmd_attack(&run, &checkpoint, source.as_deref())? {
                println!(
                    "epsilon {}: accuracy {:.4} (source model {:.4})",
                    o.epsilon, o.accuracy, o.source_accuracy
                );
            }
        }
        Command::Dknn {
            common,
            checkpoint,
            inputs,
        } => {
            let run = resolve(&common, &presets::DKNN_PRESETS, "dknn")?;
            let o = commands::cmd_dknn(&run, &checkpoint, inputs.as_deref())?;
            for (s, p) in o.sets.iter().zip(&o.curve.points) {
                println!(
                    "epsilon {}: mean credibility {:.4}, accuracy {:.4}",
                    s.epsilon, p.mean_credibility, p.accuracy
                );
            }
            if let Some(c) = o.curve.correlation {
                println!("credibility-accuracy correlation {c:.4}");
            }
            if let Some(ood) = &o.ood {
                println!(
                    "mean credibility: in-distribution {:.4}, out-of-distribution {:.4}",
                    o.sets[0].mean_credibility(),
                    ood.mean_credibility()
                );
            }
        }
        Command::ShowConfig { preset, seed } => {
            let cfg = presets::preset(&preset, seed.unwrap_or(0))
                .ok_or_else(|| CliError::Config(format!("unknown preset '{preset}'")))?;
            println!("{}", cfg.to_json());
        }
    }
    Ok(())
}
