//! Command-line driver.
//!
//! Subcommands: `gen-data`, `train`, `simulate`, `evaluate`, `quad-compare`.
//! Each resolves a JSON config (profile + overrides, or a previous run's
//! manifest), writes its outputs under `--out`, and records a `manifest.json`
//! from which the run can be reproduced byte-for-byte (timing.json excepted).
//! `FLOCKFORGE_THREADS` caps worker parallelism. Exit codes: 0 success,
//! 2 config error, 3 runtime divergence, 4 I/O or file-format error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flockforge::config::Config;
use flockforge::files::{
    list_trajectory_files, read_checkpoint, read_dataset, read_trajectory,
    read_trajectory_header, write_checkpoint, write_dataset, write_delta_csv, write_loss_csv,
    write_report, write_series_csv, write_timing, write_trajectory, EvalReportDto,
};
use flockforge::manifest::write_manifest;
use flockforge::pipeline::{extract_samples, generate_expert_data, holdout_split, ExpertRun};
use flockforge::run::{
    evaluate_trajectories, quad_compare, simulate_runs, ControllerKind, QuadRun,
};
use flockforge::{exit_code, ForgeError, Result};

use flock_core::nn::{evaluate_mse, train, TrainingSample};

#[derive(Parser)]
#[command(
    name = "flockforge",
    version,
    about = "Multi-agent flocking: expert MPC data generation, controller distillation, simulation, and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ControllerArg {
    /// Centralized receding-horizon controller.
    Cmpc,
    /// Distributed per-agent receding-horizon controller.
    Dmpc,
    /// Distributed neural controller from a checkpoint.
    Dnc,
}

impl ControllerArg {
    fn kind(self) -> ControllerKind {
        match self {
            ControllerArg::Cmpc => ControllerKind::Cmpc,
            ControllerArg::Dmpc => ControllerKind::Dmpc,
            ControllerArg::Dnc => ControllerKind::Dnc,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the centralized expert and write trajectories plus a dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Overrides data.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/gen-data")]
        out: PathBuf,
    },
    /// Train the distributed neural controller on a dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Run closed-loop simulations from fresh seeded initial states.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        controller: ControllerArg,
        /// Neural-controller checkpoint (required for --controller dnc).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides data.eval_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/simulate")]
        out: PathBuf,
    },
    /// Compute evaluation reports over a directory of stored trajectories.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Directory containing *.traj.jsonl files.
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long, default_value = "runs/evaluate")]
        out: PathBuf,
    },
    /// Run the four-way point-vs-quadrotor comparison and difference curves.
    QuadCompare {
        #[arg(long)]
        config: PathBuf,
        /// Spatial basic-flocking checkpoint (bf36).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides data.eval_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "runs/quad-compare")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("FLOCKFORGE_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { config, seed, out } => {
            let mut cfg = Config::from_file(&config)?;
            if let Some(s) = seed {
                cfg.data.seed = s;
            }
            ensure_dir(&out)?;
            match cfg.dim {
                2 => cmd_gen_data::<2>(&cfg, seed, &out),
                _ => cmd_gen_data::<3>(&cfg, seed, &out),
            }
        }
        Command::Train {
            config,
            dataset,
            seed,
            out,
        } => {
            let mut cfg = Config::from_file(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            ensure_dir(&out)?;
            cmd_train(&cfg, seed, &dataset, &out)
        }
        Command::Simulate {
            config,
            controller,
            checkpoint,
            seed,
            out,
        } => {
            let mut cfg = Config::from_file(&config)?;
            if let Some(s) = seed {
                cfg.data.eval_seed = s;
            }
            ensure_dir(&out)?;
            match cfg.dim {
                2 => cmd_simulate::<2>(&cfg, seed, controller, checkpoint.as_deref(), &out),
                _ => cmd_simulate::<3>(&cfg, seed, controller, checkpoint.as_deref(), &out),
            }
        }
        Command::Evaluate {
            config,
            trajectories,
            out,
        } => {
            let cfg = Config::from_file(&config)?;
            ensure_dir(&out)?;
            match cfg.dim {
                2 => cmd_evaluate::<2>(&cfg, &trajectories, &out),
                _ => cmd_evaluate::<3>(&cfg, &trajectories, &out),
            }
        }
        Command::QuadCompare {
            config,
            checkpoint,
            seed,
            out,
        } => {
            let mut cfg = Config::from_file(&config)?;
            if let Some(s) = seed {
                cfg.data.eval_seed = s;
            }
            ensure_dir(&out)?;
            cmd_quad_compare(&cfg, seed, &checkpoint, &out)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(ForgeError::io(dir))
}

fn write_runs<const D: usize>(
    dir: &Path,
    cfg: &Config,
    runs: &[ExpertRun<D>],
    prefix: &str,
) -> Result<()> {
    ensure_dir(dir)?;
    for (idx, run) in runs.iter().enumerate() {
        let path = dir.join(format!("{prefix}-{idx:03}.traj.jsonl"));
        write_trajectory(&path, cfg.task, run.seed, &run.trajectory, None)?;
    }
    Ok(())
}

fn cmd_gen_data<const D: usize>(cfg: &Config, seed_override: Option<u64>, out: &Path) -> Result<()> {
    let layout = cfg.layout()?;
    let runs = generate_expert_data::<D>(cfg, cfg.data.trajectories, cfg.data.seed)?;
    write_runs(&out.join("trajectories"), cfg, &runs, "traj")?;
    let per_trajectory = extract_samples(&runs, layout, cfg)?;
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
    let dataset_path = out.join("dataset.data.jsonl");
    write_dataset(&dataset_path, layout, &seeds, &per_trajectory)?;
    write_manifest(out, "gen-data", seed_override, cfg)?;
    let total: usize = per_trajectory.iter().map(Vec::len).sum();
    println!(
        "gen-data: {} trajectories, {} samples ({}), dataset {}",
        runs.len(),
        total,
        layout.tag(),
        dataset_path.display()
    );
    Ok(())
}

fn cmd_train(
    cfg: &Config,
    seed_override: Option<u64>,
    dataset_path: &Path,
    out: &Path,
) -> Result<()> {
    let stored = read_dataset(dataset_path)?;
    let expected = cfg.layout()?;
    if stored.layout != expected {
        return Err(ForgeError::Config(format!(
            "dataset layout {} does not match the configured task ({})",
            stored.layout.tag(),
            expected.tag()
        )));
    }
    let trajectories = stored.header.source_seeds.len().max(
        stored
            .samples
            .iter()
            .map(|(t, _)| t + 1)
            .max()
            .unwrap_or(0),
    );
    let (train_ids, holdout_ids) = holdout_split(trajectories, cfg.train.holdout_fraction);
    let in_split = |ids: &[usize], t: usize| ids.binary_search(&t).is_ok();
    let train_samples: Vec<TrainingSample> = stored
        .samples
        .iter()
        .filter(|(t, _)| in_split(&train_ids, *t))
        .map(|(_, s)| s.clone())
        .collect();
    let holdout_samples: Vec<TrainingSample> = stored
        .samples
        .iter()
        .filter(|(t, _)| in_split(&holdout_ids, *t))
        .map(|(_, s)| s.clone())
        .collect();
    if train_samples.is_empty() {
        return Err(ForgeError::Config("dataset contains no training samples".into()));
    }

    let arch = cfg.architecture(stored.layout);
    let adam = cfg.adam(Some(cfg.train.seed));
    let (mlp, history) = train(&train_samples, &arch, &adam)?;

    write_checkpoint(&out.join("checkpoint.json"), stored.layout, &mlp)?;
    write_loss_csv(&out.join("loss.csv"), &history)?;
    let holdout_mse = if holdout_samples.is_empty() {
        None
    } else {
        Some(evaluate_mse(&mlp, &holdout_samples)?)
    };
    let summary = serde_json::json!({
        "layout": stored.layout.tag(),
        "train_samples": train_samples.len(),
        "holdout_samples": holdout_samples.len(),
        "epochs": history.len(),
        "first_epoch_mse": history.first(),
        "final_epoch_mse": history.last(),
        "holdout_mse": holdout_mse,
    });
    let summary_path = out.join("train_summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).unwrap())
        .map_err(ForgeError::io(&summary_path))?;
    write_manifest(out, "train", seed_override, cfg)?;
    println!(
        "train: {} epochs on {} samples, final mse {:.6e} (first {:.6e}), checkpoint {}",
        history.len(),
        train_samples.len(),
        history.last().copied().unwrap_or(f64::NAN),
        history.first().copied().unwrap_or(f64::NAN),
        out.join("checkpoint.json").display()
    );
    Ok(())
}

fn cmd_simulate<const D: usize>(
    cfg: &Config,
    seed_override: Option<u64>,
    controller: ControllerArg,
    checkpoint: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let kind = controller.kind();
    let loaded = match checkpoint {
        Some(path) => Some(read_checkpoint(path)?),
        None => None,
    };
    let (runs, timing) = simulate_runs::<D>(
        cfg,
        kind,
        loaded,
        cfg.data.eval_trajectories,
        cfg.data.eval_seed,
    )?;
    write_runs(&out.join("trajectories"), cfg, &runs, "run")?;
    write_timing(&out.join("timing.json"), &[timing])?;
    write_manifest(out, "simulate", seed_override, cfg)?;
    println!(
        "simulate: {} runs with {} under task {:?}",
        runs.len(),
        kind.name(),
        cfg.task
    );
    Ok(())
}

fn cmd_evaluate<const D: usize>(cfg: &Config, trajectories: &Path, out: &Path) -> Result<()> {
    let files = list_trajectory_files(trajectories)?;
    if files.is_empty() {
        return Err(ForgeError::Config(format!(
            "no *.traj.jsonl files in {}",
            trajectories.display()
        )));
    }
    let mut trajs = Vec::with_capacity(files.len());
    for path in &files {
        let header = read_trajectory_header(path)?;
        if header.dim != cfg.dim {
            return Err(ForgeError::Config(format!(
                "dim: config is {}D but {} is {}D",
                cfg.dim,
                path.display(),
                header.dim
            )));
        }
        trajs.push(read_trajectory::<D>(path)?.trajectory);
    }
    let evaluation = evaluate_trajectories(cfg, &trajs)?;
    let dto = EvalReportDto::from(&evaluation.report);
    write_report(out, &dto)?;
    write_series_csv(
        &out.join("series.csv"),
        &evaluation.mean_diameter,
        &evaluation.mean_velocity_convergence,
    )?;
    write_manifest(out, "evaluate", None, cfg)?;
    println!(
        "evaluate: {} runs, converged diameter {:.4} (sd {:.4}), vc {:.4} (sd {:.4}), ic/oc/pc {}/{}/{}",
        dto.runs,
        dto.mean_converged_diameter,
        dto.sd_converged_diameter,
        dto.mean_velocity_convergence,
        dto.sd_velocity_convergence,
        dto.ic_count,
        dto.oc_count,
        dto.pc_count
    );
    Ok(())
}

fn cmd_quad_compare(
    cfg: &Config,
    seed_override: Option<u64>,
    checkpoint: &Path,
    out: &Path,
) -> Result<()> {
    let (layout, mlp) = read_checkpoint(checkpoint)?;
    let comparison = quad_compare(cfg, layout, mlp)?;
    write_runs(&out.join("dnc-point"), cfg, &comparison.dnc_point, "run")?;
    write_runs(&out.join("cmpc-point"), cfg, &comparison.cmpc_point, "run")?;
    let write_quad_runs = |dir: &Path, runs: &[QuadRun]| -> Result<()> {
        ensure_dir(dir)?;
        for (idx, qr) in runs.iter().enumerate() {
            let path = dir.join(format!("run-{idx:03}.traj.jsonl"));
            write_trajectory(
                &path,
                cfg.task,
                qr.run.seed,
                &qr.run.trajectory,
                Some(&qr.quad_states),
            )?;
        }
        Ok(())
    };
    write_quad_runs(&out.join("dnc-quad"), &comparison.dnc_quad)?;
    write_quad_runs(&out.join("cmpc-quad"), &comparison.cmpc_quad)?;
    write_delta_csv(
        &out.join("delta.csv"),
        &comparison.delta_diameter_dnc,
        &comparison.delta_vc_dnc,
        &comparison.delta_diameter_cmpc,
        &comparison.delta_vc_cmpc,
    )?;
    write_timing(&out.join("timing.json"), &comparison.timings)?;
    write_manifest(out, "quad-compare", seed_override, cfg)?;
    let half = comparison.delta_diameter_dnc.len() / 2;
    let mean_abs = |s: &[f64]| {
        if s.is_empty() {
            0.0
        } else {
            s.iter().map(|v| v.abs()).sum::<f64>() / s.len() as f64
        }
    };
    println!(
        "quad-compare: {} shared seeds; second-half |delta diameter| dnc {:.4} cmpc {:.4}",
        cfg.data.eval_trajectories,
        mean_abs(&comparison.delta_diameter_dnc[half..]),
        mean_abs(&comparison.delta_diameter_cmpc[half..])
    );
    Ok(())
}
