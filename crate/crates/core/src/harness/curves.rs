use crate::excursions::{ExcursionError, TraversalPlan};
use crate::gw::GWTrajectory;
use crate::lattice::{LatticeError, TorusPoint, TrialStream, WalkState};
use crate::par;
use crate::schedule::{BarrierCurve, ParamSet};
use crate::stats::SummaryStats;

use super::{fmt_int, fmt_real, Experiment, ExperimentConfig, HarnessError, Report, Result};

/// Traversal profiles `T_0, ..., T_{L-1}` from `m^+` top excursions around
/// the torus centre, for the walk (plain and clock-at-`r_1` variants) and
/// the critical process, compared with the `a^±` curves.
pub fn run_curve_report(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::Curves);
    let sigma = cfg.tol("suite.sigma")?;
    for n in cfg.n_or(&[64]) {
        let params = ParamSet { n, ..cfg.params.clone() };
        let s = cfg.schedule.build(params)?;
        let depth = s.depth();
        let radii = s.scales.radii.clone();
        let m = s.scales.m_plus;
        let x = TorusPoint::new(i64::from(n / 2), i64::from(n / 2), n);
        let o = TorusPoint::origin(n);
        let cap = cfg.step_cap(n);
        let a_plus: Vec<f64> = (0..depth)
            .map(|i| s.eval(&BarrierCurve::APlus, i as f64).unwrap_or(f64::NAN))
            .collect();
        let a_minus: Vec<f64> = (0..depth)
            .map(|i| s.eval(&BarrierCurve::AMinus, i as f64).unwrap_or(f64::NAN))
            .collect();

        let walk_profiles = |plan: &TraversalPlan, tag: u64| -> Result<(Vec<Vec<u64>>, u64)> {
            let out = par::map_trials(cfg.trials, |t| {
                let mut w = WalkState::new(o, TrialStream::new(cfg.seed, (tag << 40) | t));
                let rec = plan.run(&mut w, m, cap)?.record;
                (0..depth)
                    .map(|i| if i == 0 { Ok(m) } else { rec.get(i) })
                    .collect::<std::result::Result<Vec<u64>, ExcursionError>>()
            });
            let mut ok = Vec::new();
            let mut failures = 0;
            for r in out {
                match r {
                    Ok(p) => ok.push(p),
                    Err(ExcursionError::Lattice(LatticeError::BudgetExceeded { .. })) => failures += 1,
                    Err(e) => return Err(HarnessError::Excursion(e)),
                }
            }
            Ok((ok, failures))
        };
        let standard = walk_profiles(&TraversalPlan::standard(x, &radii)?, 1)?;
        let tilde = walk_profiles(&TraversalPlan::tilde(x, &radii)?, 2)?;
        let gw: Vec<Vec<u64>> = par::map_trials(cfg.trials, |t| {
            let mut r = TrialStream::new(cfg.seed, (3 << 40) | t);
            GWTrajectory::simulate(m, depth - 1, &mut r).generations
        });

        for (source, (profiles, failures)) in [
            ("walk_standard", standard),
            ("walk_tilde", tilde),
            ("gw", (gw, 0)),
        ] {
            for i in 0..depth {
                let col: Vec<f64> = profiles.iter().map(|p| p[i] as f64).collect();
                let k = col.len().max(1) as f64;
                let above = col.iter().filter(|&&t| t >= a_plus[i]).count() as f64 / k;
                let below = col.iter().filter(|&&t| t <= a_minus[i]).count() as f64 / k;
                let st = SummaryStats::from_samples(&col, 0.95);
                let sq: f64 = col.iter().map(|t| t.sqrt()).sum::<f64>() / k;
                let anchor = (m as f64).sqrt() * (1.0 - i as f64 / depth as f64);
                rep.table.push(vec![
                    source.into(),
                    fmt_int(n),
                    fmt_int(i),
                    fmt_int(cfg.trials),
                    fmt_int(failures),
                    fmt_real(a_plus[i]),
                    fmt_real(a_minus[i]),
                    fmt_real(above),
                    fmt_real(below),
                    fmt_real(st.mean),
                    fmt_real(sq),
                    fmt_real(anchor),
                ]);
                if source == "gw" && i > 0 {
                    let z = (st.mean - m as f64) / st.std_error();
                    rep.check(
                        format!("curves gw mean n={n} level {i}"),
                        z.abs() <= sigma,
                        format!("mean population {:.3} vs {m} (z = {z:+.2})", st.mean),
                    );
                }
            }
        }
    }
    Ok(rep)
}
