//! Reproducible experiments: configuration, CSV tables, the tolerance
//! manifest and one runner per experiment.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::excursions::ExcursionError;
use crate::gw::GwError;
use crate::lattice::{default_cover_budget, LatticeError};
use crate::oracle::OracleError;
use crate::schedule::{ParamSet, Schedule, ScheduleError};

mod barrier;
mod cover;
mod curves;
mod excursion;
mod gw_check;
mod oracle_check;
mod tolerances;
mod transfer;

pub use barrier::{lower_spec, run_barrier_sweep, upper_spec};
pub use cover::run_cover_experiment;
pub use curves::run_curve_report;
pub use excursion::run_excursion_length_experiment;
pub use gw_check::run_gw_equivalence;
pub use oracle_check::{
    run_bracket_grid, run_equilibrium_check, run_kac_check, run_oracle_check, run_oracle_mc,
};
pub use tolerances::{Tolerance, Tolerances};
pub use transfer::run_transfer_check;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Excursion(#[from] ExcursionError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Gw(#[from] GwError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    Cover,
    Excursion,
    Transfer,
    GwCheck,
    Barrier,
    Curves,
    OracleCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Cover,
        Experiment::Excursion,
        Experiment::Transfer,
        Experiment::GwCheck,
        Experiment::Barrier,
        Experiment::Curves,
        Experiment::OracleCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Cover => "cover",
            Experiment::Excursion => "excursion",
            Experiment::Transfer => "transfer",
            Experiment::GwCheck => "gw-check",
            Experiment::Barrier => "barrier",
            Experiment::Curves => "curves",
            Experiment::OracleCheck => "oracle-check",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    /// Column names of the experiment's CSV, in output order.
    pub fn columns(&self) -> &'static [&'static str] {
        match self {
            Experiment::Cover => &[
                "n",
                "trials",
                "failures",
                "mean_tau",
                "sd_tau",
                "q05_tau",
                "q50_tau",
                "q95_tau",
                "norm_mean",
                "norm_se",
                "anchor",
                "band_ratio",
                "z_mean",
                "two_log_n",
                "two_log_n_minus_loglog",
                "gap",
                "gap_normalized",
                "gap_normalized_se",
                "fitted_c",
            ],
            Experiment::Excursion => &[
                "part", "n", "r", "big_r", "m", "trials", "failures", "stat", "value",
            ],
            Experiment::Transfer => &[
                "part",
                "n",
                "depth",
                "ell",
                "m",
                "event",
                "trials",
                "failures",
                "hits",
                "p_walk",
                "p_gw",
                "ratio",
                "ratio_se",
                "bracket_lo",
                "bracket_hi",
                "status",
            ],
            Experiment::GwCheck => &["part", "m", "len", "stat", "value"],
            Experiment::Barrier => &[
                "mode",
                "L",
                "r",
                "x",
                "y",
                "a",
                "b",
                "C",
                "epsilon",
                "trials",
                "p_hat",
                "ci_lo",
                "ci_hi",
                "p_exact",
                "lost",
                "shape",
                "normalized",
            ],
            Experiment::Curves => &[
                "source",
                "n",
                "level",
                "trials",
                "failures",
                "a_plus",
                "a_minus",
                "frac_above",
                "frac_below",
                "mean_count",
                "mean_sqrt",
                "anchor_sqrt",
            ],
            Experiment::OracleCheck => {
                &["part", "label", "n", "value", "lower", "upper", "pass"]
            }
        }
    }
}

/// Which radii schedule an experiment uses.
#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleChoice {
    Strict,
    Toy { depth: usize, ell: f64 },
}

impl ScheduleChoice {
    /// Parses `strict` or `toy:L,ell`.
    pub fn parse(s: &str) -> Result<Self> {
        if s == "strict" {
            return Ok(ScheduleChoice::Strict);
        }
        let bad = || HarnessError::Config(format!("schedule must be strict or toy:L,ell, got {s:?}"));
        let rest = s.strip_prefix("toy:").ok_or_else(bad)?;
        let (l, e) = rest.split_once(',').ok_or_else(bad)?;
        Ok(ScheduleChoice::Toy {
            depth: l.trim().parse().map_err(|_| bad())?,
            ell: e.trim().parse().map_err(|_| bad())?,
        })
    }

    pub fn build(&self, params: ParamSet) -> Result<Schedule> {
        Ok(match self {
            ScheduleChoice::Strict => Schedule::strict(params)?,
            ScheduleChoice::Toy { depth, ell } => Schedule::toy(params, *depth, *ell)?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub schedule: ScheduleChoice,
    /// Template parameters; `n` is replaced per run.
    pub params: ParamSet,
    /// Side lengths. An empty list means the experiment's default.
    pub n_list: Vec<u32>,
    /// Primary sample size.
    pub trials: u64,
    pub seed: u64,
    /// Multiplier on the default step budget of cover-type runs.
    pub budget_mult: f64,
    /// Directory for CSV output and the equilibrium cache.
    pub out: Option<PathBuf>,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        let tolerances = Tolerances::builtin();
        let schedule = match experiment {
            Experiment::Curves => ScheduleChoice::Toy { depth: 3, ell: 3.0 },
            _ => ScheduleChoice::Toy { depth: 4, ell: 4.0 },
        };
        ExperimentConfig {
            experiment,
            schedule,
            params: ParamSet::with_n(64),
            n_list: Vec::new(),
            trials: default_trials(experiment, &tolerances),
            seed: tolerances.get("suite.seed").unwrap_or(1.0) as u64,
            budget_mult: 1.0,
            out: None,
            tolerances,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be positive".into()));
        }
        if !(self.budget_mult > 0.0) {
            return Err(HarnessError::Config("budget multiplier must be positive".into()));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(HarnessError::Config(format!("side length {n} is too small")));
        }
        Ok(())
    }

    pub fn n_or(&self, default: &[u32]) -> Vec<u32> {
        if self.n_list.is_empty() {
            default.to_vec()
        } else {
            self.n_list.clone()
        }
    }

    pub fn tol(&self, key: &str) -> Result<f64> {
        self.tolerances
            .get(key)
            .ok_or_else(|| HarnessError::Config(format!("tolerance {key} missing")))
    }

    pub fn tol_u64(&self, key: &str) -> Result<u64> {
        Ok(self.tol(key)?.round() as u64)
    }

    /// Per-call step cap for walks on the side-`n` torus.
    pub fn step_cap(&self, n: u32) -> u64 {
        (default_cover_budget(n) as f64 * self.budget_mult).ceil() as u64
    }

    pub fn cache_dir(&self) -> Option<PathBuf> {
        self.out.as_ref().map(|d| d.join("cache"))
    }
}

fn default_trials(e: Experiment, t: &Tolerances) -> u64 {
    let key = match e {
        Experiment::Cover => "cover.trials",
        Experiment::Excursion => "excursion.mean_trials",
        Experiment::Transfer => "transfer.trials",
        Experiment::GwCheck => "gw.chi2_samples",
        Experiment::Barrier => "barrier.trials",
        Experiment::Curves => "cover.trials",
        Experiment::OracleCheck => "oracle_mc.trials",
    };
    t.get(key).unwrap_or(1000.0) as u64
}

/// Rows of already formatted cells under a fixed header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(experiment: Experiment) -> Self {
        Table {
            columns: experiment.columns().to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match header");
        self.rows.push(row);
    }

    /// Index of a column by name.
    pub fn col(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Cells of one column parsed as numbers (`nan` for non-numeric cells).
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        let k = self.col(name).expect("unknown column");
        self.rows
            .iter()
            .map(|r| r[k].parse().unwrap_or(f64::NAN))
            .collect()
    }

    /// CSV text with `\n` line endings; the header is written even when
    /// there are no rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// Fixed-precision rendering used for every real-valued CSV cell.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        let s = format!("{x:.9e}");
        // avoid "-0.000000000e0"
        if x == 0.0 { "0.000000000e0".into() } else { s }
    }
}

pub fn fmt_int<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

pub fn emit_csv(path: &Path, table: &Table) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

/// One named pass/fail decision with a human-readable explanation.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub experiment: Experiment,
    pub table: Table,
    pub checks: Vec<Check>,
    /// Free-form lines that are not part of the CSV (timings, notes).
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: Experiment) -> Self {
        Report {
            experiment,
            table: Table::new(experiment),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    /// Appends another report's rows and checks (same experiment).
    pub fn absorb(&mut self, other: Report) {
        assert_eq!(self.experiment, other.experiment);
        self.table.rows.extend(other.table.rows);
        self.checks.extend(other.checks);
        self.notes.extend(other.notes);
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{tag} {}: {}", c.name, c.detail);
        }
        for n in &self.notes {
            let _ = writeln!(s, "note {n}");
        }
        s
    }

    /// Writes `<dir>/<experiment>.csv`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.experiment.name()));
        emit_csv(&path, &self.table)?;
        Ok(path)
    }
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Cover => run_cover_experiment(cfg),
        Experiment::Excursion => run_excursion_length_experiment(cfg),
        Experiment::Transfer => run_transfer_check(cfg),
        Experiment::GwCheck => run_gw_equivalence(cfg),
        Experiment::Barrier => run_barrier_sweep(cfg),
        Experiment::Curves => run_curve_report(cfg),
        Experiment::OracleCheck => run_oracle_check(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(Experiment::from_name(e.name()), Some(e));
        }
        assert_eq!(Experiment::from_name("nope"), None);
    }

    #[test]
    fn empty_table_writes_header_only() {
        let t = Table::new(Experiment::Barrier);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.ends_with('\n') && !csv.contains('\r'));
        assert!(csv.starts_with("mode,L,r,x"));
    }

    #[test]
    fn real_format_is_fixed() {
        assert_eq!(fmt_real(0.0), "0.000000000e0");
        assert_eq!(fmt_real(-0.0), "0.000000000e0");
        assert_eq!(fmt_real(1.5), "1.500000000e0");
        assert_eq!(fmt_real(f64::NAN), "nan");
    }

    #[test]
    fn schedule_parsing() {
        assert_eq!(ScheduleChoice::parse("strict").unwrap(), ScheduleChoice::Strict);
        assert_eq!(
            ScheduleChoice::parse("toy:4,4").unwrap(),
            ScheduleChoice::Toy { depth: 4, ell: 4.0 }
        );
        assert!(ScheduleChoice::parse("toy:4").is_err());
        assert!(ScheduleChoice::parse("loose").is_err());
    }

    #[test]
    fn config_rejects_zero_trials() {
        let mut c = ExperimentConfig::new(Experiment::Cover);
        c.trials = 0;
        assert!(c.validate().is_err());
    }
}
