use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use layerspin_harness::config::output_root;
use layerspin_harness::export::{write_run, RunManifest, RunStatus};
use layerspin_harness::pipeline::{execute_input, load_run_input, run_grid, Overrides, RunInput};
use layerspin_harness::{replay_config, report, train, ReplayFile, RunConfig};

#[derive(Parser)]
#[command(
    name = "layerspin",
    version,
    about = "Layer rotation experiments on small MLPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root (default: $LAYERSPIN_OUT, else ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one config (or re-run a manifest.json).
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the config over its rate/alpha grid.
    Grid {
        config: PathBuf,
        /// Runs executed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Replay recorded per-step rotation angles with Layca.
    Replay {
        config: PathBuf,
        recorded: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train and print second-moment percentiles per layer.
    Probe {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Summarize the manifests found under a directory.
    Report { dir: PathBuf },
}

fn summarize(m: &RunManifest) {
    match &m.status {
        RunStatus::Completed => println!(
            "{}: train {} test {} mean cosine distance {} -> {}",
            m.run_id,
            fmt(m.final_train_accuracy),
            fmt(m.final_test_accuracy),
            fmt(m.mean_final_cosine_distance),
            m.output_dir.display()
        ),
        RunStatus::Diverged { epoch, reason, .. } => {
            println!("{}: diverged in epoch {epoch} ({reason})", m.run_id)
        }
    }
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn load_config(path: &Path, common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)?;
    common.overrides().apply(&mut cfg);
    Ok(cfg)
}

fn real_main(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, common } => {
            let mut input = load_run_input(&config)?;
            if input.config.grid.is_some() {
                bail!(
                    "{} is a grid config; use `layerspin grid`",
                    config.display()
                );
            }
            common.overrides().apply(&mut input.config);
            let m = execute_input(&input, &output_root(common.out))?;
            summarize(&m);
            Ok(m.status == RunStatus::Completed)
        }
        Command::Grid {
            config,
            jobs,
            common,
        } => {
            let cfg = load_config(&config, &common)?;
            let manifests = run_grid(&cfg, &output_root(common.out), jobs)?;
            manifests.iter().for_each(summarize);
            Ok(true)
        }
        Command::Replay {
            config,
            recorded,
            common,
        } => {
            let source = load_config(&config, &common)?;
            let replay = ReplayFile::from_file(&recorded)?;
            let recorded = recorded
                .canonicalize()
                .with_context(|| recorded.display().to_string())?;
            let input = RunInput {
                config: replay_config(&source, &replay),
                replay: Some((replay, recorded)),
            };
            let m = execute_input(&input, &output_root(common.out))?;
            summarize(&m);
            Ok(m.status == RunStatus::Completed)
        }
        Command::Probe { config, common } => {
            let mut cfg = load_config(&config, &common)?;
            if cfg.monitor.probe_epochs.is_empty() {
                cfg.monitor.probe_epochs = vec![1, 10, cfg.epochs];
                cfg.monitor.probe_epochs.retain(|&e| e <= cfg.epochs);
                cfg.monitor.probe_epochs.dedup();
            }
            cfg.validate()?;
            let data = cfg.dataset.load()?;
            let outcome = train(&cfg, &data, None)?;
            let dir = output_root(common.out).join(&cfg.run_id);
            write_run(&outcome, &dir, data.train.image_dims, None)?;
            println!("epoch  layer  {:>12}  {:>12}  {:>12}", "p10", "p50", "p90");
            for p in &outcome.probes {
                for (l, q) in p.layers.iter().enumerate() {
                    println!(
                        "{:>5}  {l:>5}  {:>12.4e}  {:>12.4e}  {:>12.4e}",
                        p.epoch, q.p10, q.p50, q.p90
                    );
                }
            }
            Ok(true)
        }
        Command::Report { dir } => {
            let rows = report::collect(&dir)?;
            if rows.is_empty() {
                bail!("no manifests under {}", dir.display());
            }
            let csv = dir.join("report.csv");
            std::fs::write(&csv, report::to_csv(&rows))
                .with_context(|| csv.display().to_string())?;
            print!("{}", report::to_table(&rows));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
