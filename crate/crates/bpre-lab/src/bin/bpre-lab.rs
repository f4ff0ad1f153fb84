use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bpre_lab::config::Config;
use bpre_lab::runner;

/// Monte Carlo laboratory for intermediately subcritical branching
/// processes in random environment.
#[derive(Parser)]
#[command(name = "bpre-lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file (JSON or TOML); must name a law spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every estimator stream derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. Results are identical for every shard count.
    #[arg(long, global = true)]
    shards: Option<usize>,

    /// Replicates per estimator.
    #[arg(long, global = true)]
    samples: Option<u64>,

    /// Output directory for result files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,

    /// Horizon n (single-horizon experiments).
    #[arg(long, global = true)]
    n: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the law to E[X e^X] = 0 and print the report.
    Calibrate,
    /// Survival probability by naive, importance and Rao-Blackwell routes.
    Survival,
    /// The ratio r_n = P(Z_n>0) / (gamma^n P(tau_n = n)).
    Theta,
    /// Law of Z_n conditioned on survival.
    CondDist,
    /// Law of n - tau_n conditioned on survival.
    TauGap,
    /// Normalized conditioned path against the min-at-end reference.
    PathShape,
    /// Bottleneck populations at intermediate times.
    Bottleneck,
    /// Random-walk identities: duality, renewal harmonicity, arcsine.
    WalkCheck,
    /// Quenched-process oracles: Moebius survival, variance, Agresti.
    BpreCheck,
    /// Tree constructions: Geiger vs enumeration, LPP identities.
    TreeCheck,
}

impl Command {
    fn experiment(&self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::Survival => "survival",
            Command::Theta => "theta",
            Command::CondDist => "cond-dist",
            Command::TauGap => "tau-gap",
            Command::PathShape => "path-shape",
            Command::Bottleneck => "bottleneck",
            Command::WalkCheck => "walk-check",
            Command::BpreCheck => "bpre-check",
            Command::TreeCheck => "tree-check",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(failures) => {
            if failures == 0 {
                ExitCode::SUCCESS
            } else {
                eprintln!("{failures} gate(s) failed");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> bpre_lab::Result<usize> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = Config::from_path(path)?;
            if cfg.law.is_none() {
                return Err(bpre_lab::Error::Config(format!(
                    "{path:?}: config files must name a law spec"
                )));
            }
            cfg
        }
        None => Config::default(),
    };
    // flags override file values
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.shards.is_some() {
        cfg.shards = cli.shards;
    }
    if cli.samples.is_some() {
        cfg.samples = cli.samples;
    }
    if cli.format.is_some() {
        cfg.format = cli.format.clone();
    }
    if cli.n.is_some() {
        cfg.n = cli.n;
    }
    let experiment = cli.command.experiment();
    let report = runner::run(experiment, &cfg)?;
    report.print_summary();
    let format = cfg.format.clone().unwrap_or_else(|| "csv".into());
    let path = report.save(&cli.out, experiment, &format)?;
    println!("wrote {}", path.display());
    Ok(report.failures())
}
