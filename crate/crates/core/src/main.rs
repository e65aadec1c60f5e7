use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use gridlab::agent::checkpoint;
use gridlab::gridworld::{self, EnvSpec};
use gridlab::harness::{self, ExperimentConfig};
use gridlab::schedule;

#[derive(Parser)]
#[command(
    name = "gridlab",
    version,
    about = "Gridworld exploration laboratory: PPO, count-based intrinsic rewards, and ranked self-imitation."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training experiment from a JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides, e.g. --override ppo.rollout_len=2048
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint with a greedy policy on held-out seeds.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        /// Half-open seed range "a:b".
        #[arg(long = "seed-range", default_value = "0:100")]
        seed_range: String,
    },
    /// Aggregate metrics CSVs into per-environment SVG learning curves.
    Plot {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Frame-bin width for curve aggregation.
        #[arg(long, default_value_t = 10_000.0)]
        bin: f64,
    },
    /// Print the expected on/off-policy update-ratio table.
    Ratios {
        /// Also write the table as CSV to this path.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a generated level as ASCII.
    Render {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the scripted solver and print its action count.
        #[arg(long)]
        solve: bool,
    },
}

fn main() {
    if let Err(err) = run() {
        eprintln!("{}", serde_json::json!({ "error": err.to_string() }));
        std::process::exit(1);
    }
}

fn run() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train { config, overrides } => {
            let base = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let cfg = base.apply_overrides(&overrides)?;
            println!(
                "training {} with {} for {} frames x {} seeds -> {}",
                cfg.env,
                cfg.method,
                cfg.total_frames,
                cfg.run_seeds.len(),
                cfg.out_dir
            );
            let outcome = harness::run_experiment(&cfg)?;
            for run in &outcome.runs {
                println!(
                    "seed {}: frames={} episodes={} mean_return={:.4} ({:.1}s) -> {}",
                    run.run_seed,
                    run.frames,
                    run.episodes,
                    run.final_running_mean,
                    run.wall_clock_s,
                    run.metrics_path
                );
            }
            for failure in &outcome.failures {
                eprintln!(
                    "{}",
                    serde_json::json!({
                        "run_seed": failure.run_seed,
                        "error": failure.error,
                    })
                );
            }
            if !outcome.failures.is_empty() {
                bail!("{} run(s) failed", outcome.failures.len());
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            env,
            episodes,
            seed_range,
        } => {
            let (start, end) = parse_seed_range(&seed_range)?;
            let ck = checkpoint::load(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let spec = EnvSpec::parse(&env)?;
            let result = harness::evaluate(&ck.params, &spec, episodes, start, end)?;
            println!(
                "env={env} episodes={} seeds={start}:{end} mean={:.4} std={:.4}",
                result.episodes, result.mean, result.std
            );
            Ok(())
        }
        Command::Plot { inputs, out, bin } => {
            let written = harness::plot::plot_files(&inputs, &out, bin)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Ratios { csv } => {
            let cells = schedule::reproduce_reference_table();
            print!("{}", schedule::format_reference_table(&cells));
            let matched = cells.iter().filter(|c| c.matched).count();
            println!("matched {matched}/{} cells", cells.len());
            let csv_text = schedule::reference_table_csv(&cells);
            match csv {
                Some(path) => {
                    std::fs::write(&path, csv_text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv_text}"),
            }
            Ok(())
        }
        Command::Render { env, seed, solve } => {
            let spec = EnvSpec::parse(&env)?;
            let state = gridworld::generate(&spec, seed)?;
            print!("{}", state.render_ascii());
            println!("env={env} seed={seed} max_steps={}", spec.max_steps);
            if solve {
                match gridworld::solver::solve(&state) {
                    Some(script) => println!("solvable in {} actions", script.len()),
                    None => bail!("no solution found"),
                }
            }
            Ok(())
        }
    }
}

fn parse_seed_range(raw: &str) -> anyhow::Result<(u64, u64)> {
    let (a, b) = raw
        .split_once(':')
        .with_context(|| format!("seed range '{raw}' must be of the form a:b"))?;
    Ok((a.parse()?, b.parse()?))
}
