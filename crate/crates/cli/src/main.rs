//! `torus-cover`: runs one experiment, writes its CSV and prints the checks.
//!
//! Exit status: 0 when every check passes, 1 when a check fails, 2 on bad
//! arguments or a run error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use torus_cover::harness::{self, Experiment, ExperimentConfig, HarnessError, ScheduleChoice};

#[derive(Parser)]
#[command(name = "torus-cover", version, about = "Cover-time experiments on the planar discrete torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cover times and their normalizations.
    Cover(Common),
    /// Excursion lengths, their concentration and tail.
    Excursion(Common),
    /// Walk traversal counts against the branching process on a toy schedule.
    Transfer(Common),
    /// Exact and sampled equivalence of the branching process and the 1-D walk.
    GwCheck(Common),
    /// Barrier probabilities of the branching process (`--n` lists the lengths L).
    Barrier(Common),
    /// Traversal profiles against the a± curves.
    Curves(Common),
    /// Monte Carlo vs linear solves, bracket grid, equilibrium measures, moment bounds.
    OracleCheck(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// Comma-separated side lengths.
    #[arg(long, value_delimiter = ',')]
    n: Vec<u32>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `strict` or `toy:L,ell`.
    #[arg(long)]
    schedule: Option<String>,
    /// Comma-separated `name=value` overrides of delta, gamma, alpha, beta,
    /// c_star, c1, c2.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    kappa_plus: Option<f64>,
    #[arg(long)]
    kappa_minus: Option<f64>,
    /// Multiplier on the default step budget.
    #[arg(long, default_value_t = 1.0)]
    budget_mult: f64,
    /// `key=value` override of a tolerance-manifest entry (repeatable).
    #[arg(long = "tolerance")]
    tolerances: Vec<String>,
}

fn config(experiment: Experiment, a: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::new(experiment);
    cfg.n_list = a.n.clone();
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.out = a.out.clone();
    if let Some(s) = &a.schedule {
        cfg.schedule = ScheduleChoice::parse(s)?;
    }
    if let Some(p) = &a.params {
        for kv in p.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| HarnessError::Config(format!("bad parameter {kv:?}")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config(format!("bad value in {kv:?}")))?;
            let slot = match k.trim() {
                "delta" => &mut cfg.params.delta,
                "gamma" => &mut cfg.params.gamma,
                "alpha" => &mut cfg.params.alpha,
                "beta" => &mut cfg.params.beta,
                "c_star" => &mut cfg.params.c_star,
                "c1" => &mut cfg.params.c1,
                "c2" => &mut cfg.params.c2,
                other => return Err(HarnessError::Config(format!("unknown parameter {other}"))),
            };
            *slot = v;
        }
    }
    if let Some(k) = a.kappa_plus {
        cfg.params.kappa_plus = k;
    }
    if let Some(k) = a.kappa_minus {
        cfg.params.kappa_minus = k;
    }
    cfg.params.check_ranges()?;
    cfg.budget_mult = a.budget_mult;
    for kv in &a.tolerances {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("bad tolerance {kv:?}")))?;
        if cfg.tolerances.entry(k).is_none() {
            return Err(HarnessError::Config(format!("unknown tolerance {k}")));
        }
        let v: f64 = v
            .parse()
            .map_err(|_| HarnessError::Config(format!("bad value in {kv:?}")))?;
        cfg.tolerances.set(k, v);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match &cli.command {
        Command::Cover(a) => (Experiment::Cover, a),
        Command::Excursion(a) => (Experiment::Excursion, a),
        Command::Transfer(a) => (Experiment::Transfer, a),
        Command::GwCheck(a) => (Experiment::GwCheck, a),
        Command::Barrier(a) => (Experiment::Barrier, a),
        Command::Curves(a) => (Experiment::Curves, a),
        Command::OracleCheck(a) => (Experiment::OracleCheck, a),
    };
    let outcome = config(experiment, args).and_then(|cfg| {
        let report = harness::run(&cfg)?;
        match &cfg.out {
            Some(dir) => {
                let path = report.write(dir)?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{}", report.table.to_csv()),
        }
        Ok(report)
    });
    match outcome {
        Ok(report) => {
            eprint!("{}", report.summary());
            if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
