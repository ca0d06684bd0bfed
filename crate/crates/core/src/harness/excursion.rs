use std::f64::consts::PI;

use rand::distributions::{Distribution, WeightedIndex};

use crate::excursions::{AnnulusGeometry, AnnulusSpec, ExcursionError};
use crate::lattice::{LatticeError, TorusPoint, TrialStream, WalkState};
use crate::oracle::EquilibriumPair;
use crate::par;
use crate::stats::{linear_fit, quantile, SummaryStats};

use super::{fmt_int, fmt_real, Experiment, ExperimentConfig, HarnessError, Report, Result};

const CONC_MS: [usize; 6] = [2, 5, 10, 25, 50, 100];

fn split<T>(outcomes: Vec<std::result::Result<T, ExcursionError>>) -> Result<(Vec<T>, u64)> {
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failures = 0;
    for o in outcomes {
        match o {
            Ok(v) => ok.push(v),
            Err(ExcursionError::Lattice(LatticeError::BudgetExceeded { .. })) => failures += 1,
            Err(e) => return Err(HarnessError::Excursion(e)),
        }
    }
    Ok((ok, failures))
}

/// Excursion lengths `D_1`, the concentration of `D_m` and the upper tail of
/// `D_1` on the annulus `B(y, n/4) \ B(y, 4)` around the torus centre.
pub fn run_excursion_length_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::Excursion);
    let mean_tol = cfg.tol("excursion.mean_rel_tol")?;
    let conc_trials = cfg.tol_u64("excursion.conc_trials")?;
    let m_max = cfg.tol_u64("excursion.conc_m")? as usize;
    let q95_max = cfg.tol("excursion.conc_q95_max")?;
    let r2_min = cfg.tol("excursion.tail_r2_min")?;
    for n in cfg.n_or(&[128]) {
        let r = 4.0;
        let big_r = (n / 4) as f64;
        let y = TorusPoint::new(i64::from(n / 2), i64::from(n / 2), n);
        let geom = AnnulusGeometry::new(AnnulusSpec::new(y, r, big_r)?)?;
        let cache = cfg.cache_dir();
        let pair = EquilibriumPair::load_or_compute(cache.as_deref(), y, r, big_r)?;
        let exact = pair.expected_d1()?;
        let anchor = 2.0 / PI * (n as f64).powi(2) * (big_r / r).ln();
        let cap = cfg.step_cap(n);
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut row = |part: &str, m: usize, trials: u64, failures: u64, stat: &str, v: f64| {
            rows.push(vec![
                part.into(),
                fmt_int(n),
                fmt_real(r),
                fmt_real(big_r),
                fmt_int(m),
                fmt_int(trials),
                fmt_int(failures),
                stat.into(),
                fmt_real(v),
            ]);
        };

        // D_1 from the equilibrium start
        let mu = WeightedIndex::new(&pair.mu_outer).map_err(|e| HarnessError::Config(e.to_string()))?;
        let outcomes = par::map_trials(cfg.trials, |t| {
            let mut s = TrialStream::new(cfg.seed, (1 << 40) | t);
            let start = pair.outer[mu.sample(&mut s)];
            let mut w = WalkState::new(start, s);
            geom.clock(&mut w, 1, cap).map(|c| c.departures[0] as f64)
        });
        let (mut d1, fail1) = split(outcomes)?;
        if d1.len() < 2 {
            return Err(HarnessError::Config("no completed excursions".into()));
        }
        let s1 = SummaryStats::from_samples(&d1, 0.95);
        let cv = s1.variance.sqrt() / s1.mean;
        row("mean", 1, cfg.trials, fail1, "mc_mean", s1.mean);
        row("mean", 1, cfg.trials, fail1, "mc_se", s1.std_error());
        row("mean", 1, cfg.trials, fail1, "exact_mean", exact);
        row("mean", 1, cfg.trials, fail1, "anchor", anchor);
        row("mean", 1, cfg.trials, fail1, "cv", cv);
        let rel = s1.mean / anchor - 1.0;
        rep.check(
            format!("excursion mean n={n}"),
            rel.abs() <= mean_tol,
            format!(
                "E[D_1] = {:.1} ± {:.1}, anchor {:.1}, relative error {:+.4}; exact {:.1}",
                s1.mean,
                s1.std_error(),
                anchor,
                rel,
                exact
            ),
        );
        let z = (s1.mean - exact) / s1.std_error();
        rep.check(
            format!("excursion mean vs exact n={n}"),
            z.abs() <= cfg.tol("suite.sigma")?,
            format!("(mc - exact)/se = {z:+.2}"),
        );

        // tail of D_1
        d1.sort_by(f64::total_cmp);
        let (t_lo, t_hi) = (quantile(&d1, 0.90), quantile(&d1, 0.99));
        let total = d1.len() as f64;
        let pts = 50;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for k in 0..pts {
            let lam = t_lo + (t_hi - t_lo) * k as f64 / (pts - 1) as f64;
            let above = d1.len() - d1.partition_point(|&v| v <= lam);
            if above > 0 {
                xs.push(lam);
                ys.push((above as f64 / total).ln());
            }
        }
        let fit = linear_fit(&xs, &ys);
        row("tail", 1, cfg.trials, fail1, "slope", fit.slope);
        row("tail", 1, cfg.trials, fail1, "slope_times_mean", fit.slope * exact);
        row("tail", 1, cfg.trials, fail1, "r2", fit.r2);
        rep.check(
            format!("excursion tail n={n}"),
            fit.r2 > r2_min && fit.slope < 0.0,
            format!(
                "log-survival fit on [q90, q99]: R^2 = {:.4}, rate × E[D_1] = {:.3}",
                fit.r2,
                -fit.slope * exact
            ),
        );

        // concentration of D_m from the centre
        let outcomes = par::map_trials(conc_trials, |t| {
            let s = TrialStream::new(cfg.seed, (2 << 40) | t);
            let mut w = WalkState::new(y, s);
            geom.clock(&mut w, m_max, cap).map(|c| c.departures)
        });
        let (deps, fail2) = split(outcomes)?;
        let mut q95_at = Vec::new();
        for &m in CONC_MS.iter().filter(|&&m| m <= m_max) {
            let mut dev: Vec<f64> = deps
                .iter()
                .map(|d| (d[m - 1] as f64 / (exact * (m - 1) as f64) - 1.0).abs())
                .collect();
            dev.sort_by(f64::total_cmp);
            let q95 = quantile(&dev, 0.95);
            let clt = 1.96 * cv / ((m - 1) as f64).sqrt();
            row("concentration", m, conc_trials, fail2, "q50", quantile(&dev, 0.5));
            row("concentration", m, conc_trials, fail2, "q95", q95);
            row("concentration", m, conc_trials, fail2, "clt_q95", clt);
            q95_at.push((m, q95, clt));
        }
        if let Some(&(m, q95, clt)) = q95_at.iter().find(|e| e.0 == m_max) {
            rep.check(
                format!("excursion concentration n={n}"),
                q95 < q95_max,
                format!(
                    "q95 |D_m/(E[D_1](m-1)) - 1| at m={m}: {q95:.4} (limit {q95_max}); \
                     normal approximation predicts {clt:.4}"
                ),
            );
        }
        if let (Some(a), Some(b)) = (q95_at.iter().find(|e| e.0 == 10), q95_at.last()) {
            let ra = a.1 * ((a.0 - 1) as f64).sqrt();
            let rb = b.1 * ((b.0 - 1) as f64).sqrt();
            rep.check(
                format!("excursion concentration rate n={n}"),
                (rb / ra) > 1.0 / 3.0 && (rb / ra) < 3.0,
                format!("q95 × sqrt(m-1): {ra:.3} at m={}, {rb:.3} at m={}", a.0, b.0),
            );
        }
        for r in rows {
            rep.table.push(r);
        }
    }
    Ok(rep)
}
