//! Command-line front end. The binary is a thin wrapper around [`main_with_args`].

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::engine::{with_threads, FusionEngine};
use crate::error::{FusionError, Result};
use crate::io::{
    load_claims, load_gold, load_predictions, write_claims, write_compare, write_gold, write_probabilities,
    ClaimFormat, RunConfig, RunSummary,
};
use crate::model::Method;
use crate::quality::iterate;
use crate::synth::{compare, evaluate, generate, CompareSettings, Grid, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "truthfuse", version, about = "Multi-truth data fusion")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fuse a claims file and write per-value probabilities.
    Fuse {
        #[arg(long, default_value = "hybrid")]
        method: Method,
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// JSON run summary (default: stdout).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Generate a synthetic claims file and its gold standard.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_claims: PathBuf,
        #[arg(long)]
        out_gold: PathBuf,
    },
    /// Score a probabilities file against a gold standard; prints JSON.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Compare methods on repeated synthetic datasets.
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `param=v1,v2,...` with param one of truth-mean, accuracy, recall, extra-ratio.
        #[arg(long)]
        grid: Option<Grid>,
        #[arg(long, value_delimiter = ',', default_value = "hybrid,accu,precrec,twostep")]
        methods: Vec<Method>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV report (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one of the preset parameter sweeps (1: truth count, 2: accuracy,
    /// 3: recall, 4: extra ratio).
    Sweep {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        figure: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "hybrid,accu,precrec,twostep")]
        methods: Vec<Method>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Usage-class failures exit with 2, everything else with 1.
pub fn exit_code(err: &FusionError) -> i32 {
    match err {
        FusionError::Config(_) => 2,
        FusionError::Io(e) if e.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        FusionError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn synth_config(config: &RunConfig, seed: Option<u64>, reps: Option<usize>) -> SynthConfig {
    let mut synth = config.synth.clone().unwrap_or_default();
    if let Some(s) = seed {
        synth.rng_seed = s;
    }
    if let Some(r) = reps {
        synth.repetitions = r;
    }
    synth
}

fn run_compare(
    config: Option<&Path>,
    grid: Option<&Grid>,
    methods: &[Method],
    reps: Option<usize>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(config)?;
    let synth = synth_config(&config, seed, reps);
    let settings = CompareSettings {
        n: config.n,
        alpha: config.alpha,
        iteration: config.iteration(),
    };
    let rows = compare(methods, &synth, grid, &settings)?;
    write_compare(output(out)?, &rows)
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.map(|t| t as usize);
    with_threads(threads, move || match cli.command {
        Command::Fuse {
            method,
            claims,
            config,
            out,
            summary,
        } => {
            let config = load_config(config.as_deref())?;
            let report = load_claims(&claims, ClaimFormat::from_path(&claims))?;
            let mut engine = FusionEngine::new(method, config.prior()?);
            engine.exact = config.exact();
            let outcome = iterate(&report.dataset, &engine, &config.iteration())?;
            write_probabilities(create(&out)?, &outcome.results)?;
            let mut w = output(summary.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &RunSummary::new(method, &report, &outcome))?;
            writeln!(w)?;
            Ok(())
        }
        Command::Synth {
            config,
            seed,
            out_claims,
            out_gold,
        } => {
            let config = load_config(config.as_deref())?;
            let (dataset, gold) = generate(&synth_config(&config, seed, None))?;
            write_claims(create(&out_claims)?, &dataset)?;
            write_gold(create(&out_gold)?, &gold)
        }
        Command::Eval { pred, gold } => {
            let predicted = load_predictions(&pred)?;
            let gold = load_gold(&gold, None)?;
            let metrics = evaluate(&predicted, &gold);
            println!("{}", serde_json::to_string(&metrics)?);
            Ok(())
        }
        Command::Compare {
            config,
            grid,
            methods,
            reps,
            seed,
            out,
        } => run_compare(config.as_deref(), grid.as_ref(), &methods, reps, seed, out.as_deref()),
        Command::Sweep {
            figure,
            config,
            methods,
            reps,
            seed,
            out,
        } => {
            let grid = Grid::figure(figure)?;
            run_compare(config.as_deref(), Some(&grid), &methods, reps, seed, out.as_deref())
        }
    })?
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or("FUSION_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args`, runs the command, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_logging();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
