//! Command-line front end: one subcommand per experiment, a flat key-value
//! config file, and seeded deterministic output.
//!
//! Exit codes: 0 success, 2 config error, 3 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wignerlab::harness::{
    emit_results, parse_config, run_experiment, ExperimentConfig, ExperimentKind, HarnessError,
};

#[derive(Parser)]
#[command(
    name = "wignerlab",
    version,
    about = "Random-matrix delocalization experiments: seeded, parallel, reproducible"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Config file (flat key = value lines with a `schema = 1` header)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config file
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); overrides the config file
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; results are not persisted when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Matrix orders, comma separated; overrides the config file
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Replica count; overrides the config file
    #[arg(long)]
    replicas: Option<u64>,
    /// Ensemble (goe | gue | bernoulli); overrides the config file
    #[arg(long)]
    ensemble: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sup-norm delocalization statistics over the whole eigenbasis
    DelocSup(Common),
    /// Isotropic delocalization against fresh random directions
    DelocIso(Common),
    /// Extreme-value statistic of the maximal eigenbasis entry
    Gumbel(Common),
    /// Conditional eigenvector-SDE Monte Carlo vs the direct moment flow
    EmfDuality(Common),
    /// Two-time unconditional moment comparison for rotation-invariant data
    EmfStationarity(Common),
    /// Tail probabilities of counts/gaps in sub-microscopic intervals
    LevelrepTail(Common),
    /// Regularized-eigenvalue closeness audit (JSON report per order)
    RegAudit(Common),
    /// Kolmogorov-Smirnov check that the OU clock preserves the ensemble
    DbmStationarity(Common),
    /// Decimated GOE-pair counts against exact kernel predictions
    Decimation(Common),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::DelocSup(_) => ExperimentKind::DelocSup,
            Command::DelocIso(_) => ExperimentKind::DelocIso,
            Command::Gumbel(_) => ExperimentKind::Gumbel,
            Command::EmfDuality(_) => ExperimentKind::EmfDuality,
            Command::EmfStationarity(_) => ExperimentKind::EmfStationarity,
            Command::LevelrepTail(_) => ExperimentKind::LevelrepTail,
            Command::RegAudit(_) => ExperimentKind::RegAudit,
            Command::DbmStationarity(_) => ExperimentKind::DbmStationarity,
            Command::Decimation(_) => ExperimentKind::Decimation,
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::DelocSup(c)
            | Command::DelocIso(c)
            | Command::Gumbel(c)
            | Command::EmfDuality(c)
            | Command::EmfStationarity(c)
            | Command::LevelrepTail(c)
            | Command::RegAudit(c)
            | Command::DbmStationarity(c)
            | Command::Decimation(c) => c,
        }
    }
}

fn build_config(kind: ExperimentKind, common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                HarnessError::Config(format!("config {}: {e}", path.display()))
            })?;
            let parsed = parse_config(&text)?;
            if parsed.experiment != kind {
                return Err(HarnessError::Config(format!(
                    "experiment: config file declares {:?} but the {} subcommand was invoked",
                    parsed.experiment.name(),
                    kind.name()
                )));
            }
            parsed
        }
        None => ExperimentConfig::new(kind),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(format) = &common.format {
        cfg.format = format.parse().map_err(HarnessError::Config)?;
    }
    if let Some(n) = &common.n {
        cfg.n_list = n.clone();
    }
    if let Some(replicas) = common.replicas {
        cfg.replicas = replicas;
    }
    if let Some(ens) = &common.ensemble {
        cfg.ensemble = ens.parse().map_err(HarnessError::Config)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: &Command) -> Result<(), HarnessError> {
    let cfg = build_config(cmd.kind(), cmd.common())?;
    let (manifest, rows) = run_experiment(&cfg)?;
    if let Some(dir) = &cfg.out_dir {
        let written = emit_results(&rows, &manifest, cfg.format, dir)?;
        for p in &written {
            eprintln!("wrote {}", p.display());
        }
    }
    // concise stdout summary: one line per statistic
    let summary = wignerlab::harness::summarize(&rows);
    println!(
        "{} rows from {} replicas (seed {}, {:.2}s)",
        rows.len(),
        cfg.replicas,
        cfg.seed,
        manifest.wall_time_secs
    );
    for (name, s) in summary {
        println!(
            "{name}: mean {:.6} +- {:.6} (n={}, median {:.6})",
            s.mean, s.stderr, s.count, s.median
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
