use std::f64::consts::PI;

use crate::lattice::{LatticeError, TorusPoint, TrialStream, WalkState};
use crate::par;
use crate::stats::{quantile, SummaryStats};

use super::{fmt_int, fmt_real, Experiment, ExperimentConfig, HarnessError, Report, Result};

/// Leading-order anchor of `tau / (n^2 (log n)^2)`.
pub(crate) fn cover_anchor(n: u32) -> f64 {
    let ln = (n as f64).ln();
    4.0 / PI * (1.0 - ln.ln() / (2.0 * ln))
}

/// Cover times from the origin, one independent stream per `(n, trial)`.
/// Runs that exhaust the step budget are counted in `failures`.
pub fn run_cover_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::Cover);
    let lo = cfg.tol("cover.band_lo")?;
    let hi = cfg.tol("cover.band_hi")?;
    let mut trend = Vec::new();
    let mut ns = cfg.n_or(&[64, 128, 256]);
    ns.sort_unstable();
    ns.dedup();
    for n in ns {
        let cap = cfg.step_cap(n);
        let outcomes = par::map_trials(cfg.trials, |t| {
            let stream = TrialStream::new(cfg.seed, (u64::from(n) << 32) | t);
            WalkState::new(TorusPoint::origin(n), stream).cover_time(cap)
        });
        let mut taus = Vec::with_capacity(outcomes.len());
        let mut failures = 0u64;
        for o in outcomes {
            match o {
                Ok(t) => taus.push(t as f64),
                Err(LatticeError::BudgetExceeded { .. }) => failures += 1,
                Err(e) => return Err(HarnessError::Lattice(e)),
            }
        }
        if taus.is_empty() {
            rep.check(
                format!("cover n={n}"),
                false,
                format!("all {failures} runs exceeded the budget"),
            );
            continue;
        }
        let nf = n as f64;
        let ln = nf.ln();
        let ll = ln.ln();
        let tau = SummaryStats::from_samples(&taus, 0.95);
        taus.sort_by(f64::total_cmp);
        let norm_scale = nf * nf * ln * ln;
        let z_scale = 2.0 / PI * nf * nf * ln;
        let norm = tau.mean / norm_scale;
        let norm_se = tau.std_error() / norm_scale;
        let anchor = cover_anchor(n);
        let ratio = norm / anchor;
        let z = tau.mean / z_scale;
        let z_se = tau.std_error() / z_scale;
        let gap = 2.0 * ln - z;
        let g = gap / ll;
        let g_se = z_se / ll;
        let fitted_c = (z - (2.0 * ln - ll)).abs().ln() / ll.ln();
        rep.table.push(vec![
            fmt_int(n),
            fmt_int(cfg.trials),
            fmt_int(failures),
            fmt_real(tau.mean),
            fmt_real(tau.variance.sqrt()),
            fmt_real(quantile(&taus, 0.05)),
            fmt_real(quantile(&taus, 0.5)),
            fmt_real(quantile(&taus, 0.95)),
            fmt_real(norm),
            fmt_real(norm_se),
            fmt_real(anchor),
            fmt_real(ratio),
            fmt_real(z),
            fmt_real(2.0 * ln),
            fmt_real(2.0 * ln - ll),
            fmt_real(gap),
            fmt_real(g),
            fmt_real(g_se),
            fmt_real(fitted_c),
        ]);
        rep.check(
            format!("cover band n={n}"),
            (lo..=hi).contains(&ratio),
            format!("mean/anchor = {ratio:.4} (se {:.4}), band [{lo}, {hi}]", norm_se / anchor),
        );
        trend.push((n, g, g_se));
    }
    if trend.len() >= 2 {
        let dist: Vec<f64> = trend.iter().map(|t| (t.1 - 1.0).abs()).collect();
        let ok = dist.windows(2).all(|w| w[1] < w[0]);
        let desc: Vec<String> = trend
            .iter()
            .map(|(n, g, s)| format!("n={n}: {g:.3}±{s:.3}"))
            .collect();
        rep.check(
            "cover trend",
            ok,
            format!(
                "(2 log n - Z)/loglog n moves toward 1: {}",
                desc.join(", ")
            ),
        );
    }
    Ok(rep)
}
