use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use firefront::experiment::{self, EvalInputs, ExperimentConfig};
use firefront::field::GridSpec;
use firefront::Error;

/// Level-set fire-front simulation and physics-informed network training.
#[derive(Parser, Debug)]
#[command(name = "firefront", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment TOML file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Write into an existing non-empty output directory.
    #[arg(long)]
    force: bool,
}

impl RunArgs {
    fn load(&self) -> firefront::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.output {
            cfg.output = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the level-set reference solver.
    SimulateLsm(RunArgs),
    /// Train the configured network variant.
    Train(RunArgs),
    /// Evaluate a checkpoint on the configured grid.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Per-time Jaccard indices and ensemble coverage.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Level-set reference run directory.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Truth run directory.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Truth front points (`t,x,y` CSV) for coverage.
        #[arg(long)]
        isochrones: Option<PathBuf>,
    },
    /// Write a built-in scenario as TOML.
    MakeScenario {
        /// `synthetic` or `synthetic2`.
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 35)]
        n_x: usize,
        #[arg(long, default_value_t = 35)]
        n_y: usize,
        #[arg(long, default_value_t = 48)]
        n_t: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } | Error::TrainingDiverged { .. } => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn configure_threads() {
    let Ok(v) = std::env::var("FIREFRONT_THREADS") else {
        return;
    };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("could not size the thread pool: {e}");
            }
        }
        _ => log::warn!("ignoring FIREFRONT_THREADS={v}: expected a positive integer"),
    }
}

fn run(cli: Cli) -> firefront::Result<()> {
    match cli.command {
        Command::SimulateLsm(a) => {
            let cfg = a.load()?;
            let sim = experiment::simulate_lsm(&cfg, a.force)?;
            log::info!("wrote {} snapshots to {}", sim.snapshots.len(), cfg.output.display());
        }
        Command::Train(a) => {
            let cfg = a.load()?;
            let out = experiment::train(&cfg, a.force)?;
            if let Some(last) = out.log.rows.last() {
                log::info!("epoch {}: log-likelihood {:.6}", last.epoch, last.terms.total());
            }
        }
        Command::Predict { run, checkpoint } => {
            let cfg = run.load()?;
            experiment::predict(&cfg, &checkpoint, run.force)?;
        }
        Command::Evaluate {
            run,
            checkpoint,
            reference,
            truth,
            isochrones,
        } => {
            let cfg = run.load()?;
            let inputs = EvalInputs {
                checkpoint: checkpoint.as_deref(),
                reference: reference.as_deref(),
                truth: truth.as_deref(),
                isochrones: isochrones.as_deref(),
            };
            let rows = experiment::evaluate(&cfg, &inputs, run.force)?;
            let mean = |f: fn(&firefront::metrics::MetricsRow) -> Option<f64>| {
                let v: Vec<f64> = rows.iter().filter_map(f).collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            if let Some(m) = mean(|r| r.jaccard_pinn_vs_lsm) {
                println!("mean jaccard vs level-set reference: {m:.4}");
            }
            if let Some(m) = mean(|r| r.jaccard_pinn_vs_truth) {
                println!("mean jaccard vs truth: {m:.4}");
            }
            if let Some(m) = mean(|r| r.coverage) {
                println!("mean coverage: {m:.4}");
            }
        }
        Command::MakeScenario {
            name,
            n_x,
            n_y,
            n_t,
            seed,
            output,
            force,
        } => {
            experiment::make_scenario(&name, GridSpec::unit(n_x, n_y, n_t), seed, &output, force)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
