#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod io;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;
use run::{CliError, Inputs, Stages};

#[derive(Parser, Debug)]
#[command(name = "stablegeo", version, about = "Simulation, kriging and stable-field extrapolation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate, observe, estimate and predict; writes the full bundle.
    Run(Common),
    /// Write realization.csv and observations.csv.
    Simulate(Common),
    /// Empirical variograms per configured direction.
    Variogram {
        #[command(flatten)]
        common: Common,
        /// Grid field CSV to use instead of a fresh simulation.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit the configured template to an empirical variogram.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Variogram CSV to use instead of a fresh estimate.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Predict on the grid from observations.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Observation CSV (x1..xd,value) to use instead of simulated values.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run every stage and report wall times.
    Bench(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-target work.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory; defaults to the config's `out`, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config's method list; repeatable.
    #[arg(long = "method")]
    methods: Vec<String>,
}

fn execute(common: &Common, stages: Stages, inputs: Inputs, bench: bool) -> Result<(), CliError> {
    let overrides = Overrides { seed: common.seed, methods: common.methods.clone() };
    let cfg = config::load(&common.config, &overrides)?;
    let out = match (&common.out, &cfg.out) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => common.config.parent().unwrap_or(std::path::Path::new(".")).join(o),
        (None, None) => PathBuf::from("out"),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.max(1))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let (_, timings) = pool.install(|| run::execute(&cfg, &out, stages, &inputs))?;
    if bench {
        println!("stage\tseconds");
        for (stage, secs) in &timings.0 {
            println!("{stage}\t{secs:.6}");
        }
        println!("total\t{:.6}", timings.0.iter().map(|(_, s)| s).sum::<f64>());
    } else {
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let none = Inputs::default;
    let result = match &cli.command {
        Command::Run(c) => execute(c, Stages::All, none(), false),
        Command::Bench(c) => execute(c, Stages::All, none(), true),
        Command::Simulate(c) => execute(c, Stages::Simulate, none(), false),
        Command::Variogram { common, input } => execute(common, Stages::Variogram, Inputs { field: input.clone(), ..none() }, false),
        Command::Fit { common, input } => execute(common, Stages::Fit, Inputs { variogram: input.clone(), ..none() }, false),
        Command::Predict { common, input } => execute(common, Stages::Predict, Inputs { observations: input.clone(), ..none() }, false),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
