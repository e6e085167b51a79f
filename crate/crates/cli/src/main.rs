use std::path::PathBuf;
use std::process::ExitCode;

use cgrail_core::harness::{
    emit_plots, evaluate, metrics_files, output_root, run_experiment, ExperimentConfig, Figure, RunSnapshot, OUT_ENV,
};
use cgrail_core::{Result, Variant};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "cgrail", version, about = "Run, evaluate and plot open-ended reaching experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one variant and write metrics plus a snapshot per seed.
    Run {
        /// TOML experiment config; built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// bandit, c-transfer, smart-c-bandit or c-grail.
        #[arg(long)]
        variant: Option<Variant>,
        /// Run only this seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<u64>,
        /// Output directory. Falls back to $CGRAIL_OUT, then the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frozen, noise-free evaluation of a trained snapshot.
    Evaluate {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the per-context table here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Plot data and SVG charts from the metrics files in a directory.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        /// success, goals, contexts, motivation or all.
        #[arg(long, default_value = "all")]
        fig: String,
        /// Defaults to <in>/plots.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            variant,
            seed,
            trials,
            out,
        } => {
            let mut cfg = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(v) = variant {
                cfg.variant = v;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            cfg.validate()?;
            let root = output_root(out.as_deref(), &cfg);
            for &s in &cfg.seeds {
                let res = run_experiment(&cfg, s, &root)?;
                println!(
                    "{} seed {s}: {} trials, final windowed success {:.3} -> {}",
                    cfg.variant,
                    res.trials,
                    res.final_window_rate,
                    res.metrics.display()
                );
            }
        }
        Command::Evaluate { snapshot, n, seed, csv } => {
            let snap = RunSnapshot::load(&snapshot)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = evaluate(&snap, n, &mut rng)?;
            println!("{:>4}  {:9}  {:>8}  {:>6}", "goal", "context", "attempts", "rate");
            for c in &report.cells {
                println!("{:>4}  {:9}  {:>8}  {:>6.3}", c.goal.0, c.context.to_string(), c.attempts, c.rate());
            }
            for (g, rate) in report.per_goal() {
                println!("goal {}: {rate:.3}", g.0);
            }
            println!("overall: {:.3} over {} attempts", report.overall(), report.attempts);
            if let Some(path) = csv {
                std::fs::write(&path, report.to_csv()?).map_err(|e| cgrail_core::Error::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
            }
        }
        Command::Plot { input, fig, out } => {
            let figs: Vec<Figure> = if fig.eq_ignore_ascii_case("all") {
                Figure::ALL.to_vec()
            } else {
                vec![fig.parse()?]
            };
            let files = metrics_files(&input)?;
            let out = out.unwrap_or_else(|| input.join("plots"));
            for f in figs {
                for p in emit_plots(&files, &out, f)? {
                    println!("{}", p.display());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, cgrail_core::Error::Io { .. }) {
                eprintln!("(set --out or {OUT_ENV} to choose the output directory)");
            }
            ExitCode::FAILURE
        }
    }
}
