use crate::excursions::{ExcursionError, TraversalPlan};
use crate::gw::gw_path_prob;
use crate::lattice::{circle, LatticeError, TorusPoint, TrialStream, WalkState};
use crate::par;
use crate::schedule::{ParamSet, ProbTable, Schedule};

use super::{
    fmt_int, fmt_real, Experiment, ExperimentConfig, HarnessError, Report, Result, ScheduleChoice,
};

/// `(m_1, ..., m_{L-1})` for the three registered events: all zero, a single
/// traversal at level 1, and one traversal at each of levels 1 and 2.
pub(crate) fn registered_events(depth: usize) -> Vec<Vec<u64>> {
    let len = depth - 1;
    let mut out = vec![vec![0; len]];
    for ones in 1..=2usize {
        if ones < len {
            let mut e = vec![0; len];
            e[..ones].iter_mut().for_each(|v| *v = 1);
            out.push(e);
        }
    }
    out
}

fn event_label(e: &[u64]) -> String {
    let parts: Vec<String> = e.iter().map(|v| v.to_string()).collect();
    format!("T=({})", parts.join(" "))
}

struct EventResult {
    event: Vec<u64>,
    hits: u64,
    p_gw: f64,
    bracket: (f64, f64),
}

/// Runs `trials` walks from a point of `∂B(x, r_1)`, `x` the origin, and
/// tallies the exact-count events against the critical geometric process.
fn tally(
    schedule: &Schedule,
    m: u64,
    events: &[Vec<u64>],
    trials: u64,
    seed: u64,
    stream_tag: u64,
    cap: u64,
    c: (f64, f64),
) -> Result<(Vec<EventResult>, u64, u64)> {
    let n = schedule.params.n;
    let radii = &schedule.scales.radii;
    let depth = schedule.depth();
    let x = TorusPoint::origin(n);
    let plan = TraversalPlan::standard(x, radii)?;
    let start = *circle(x, radii[1])?
        .iter()
        .next()
        .ok_or_else(|| HarnessError::Config("empty circle".into()))?;
    let outcomes = par::map_trials(trials, |t| {
        let s = TrialStream::new(seed, (stream_tag << 40) | t);
        let mut w = WalkState::new(start, s);
        let rec = plan.run(&mut w, m, cap)?.record;
        (1..depth).map(|i| rec.get(i)).collect::<std::result::Result<Vec<u64>, _>>()
    });
    let mut failures = 0;
    let mut ok = 0;
    let mut hits = vec![0u64; events.len()];
    for o in outcomes {
        match o {
            Ok(counts) => {
                ok += 1;
                for (h, e) in hits.iter_mut().zip(events) {
                    if counts == *e {
                        *h += 1;
                    }
                }
            }
            Err(ExcursionError::Lattice(LatticeError::BudgetExceeded { .. })) => failures += 1,
            Err(e) => return Err(e.into()),
        }
    }
    let table = ProbTable::new(radii, c.0, c.1)?;
    let mut out = Vec::new();
    for (e, h) in events.iter().zip(hits) {
        let mut counts = vec![m];
        counts.extend_from_slice(e);
        out.push(EventResult {
            event: e.clone(),
            hits: h,
            p_gw: gw_path_prob(m, e),
            bracket: table.transfer_bracket(1, 0, m, &counts)?,
        });
    }
    Ok((out, ok, failures))
}

/// Walk-versus-process ratios for exact traversal-count events on a toy
/// schedule, plus the trend of `|ratio - 1|` when `ell` doubles at depth 2.
pub fn run_transfer_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::Transfer);
    let sigma = cfg.tol("suite.sigma")?;
    let c = (cfg.tol("transfer.c1")?, cfg.tol("transfer.c2")?);
    let min_hits = cfg.tol("transfer.min_expected_hits")?;
    let m = 1u64;
    let (depth, ell) = match cfg.schedule {
        ScheduleChoice::Toy { depth, ell } => (depth, ell),
        ScheduleChoice::Strict => {
            return Err(HarnessError::Config(
                "the transfer check needs a toy schedule small enough to simulate".into(),
            ))
        }
    };
    if depth < 2 {
        return Err(HarnessError::Config("transfer check needs depth >= 2".into()));
    }
    fn push(
        rep: &mut Report,
        part: &str,
        s: &Schedule,
        m: u64,
        r: &EventResult,
        ok: u64,
        fails: u64,
        status: &str,
    ) -> (f64, f64) {
        let p = r.hits as f64 / ok as f64;
        let se = (p * (1.0 - p) / ok as f64).sqrt();
        rep.table.push(vec![
            part.into(),
            fmt_int(s.params.n),
            fmt_int(s.depth()),
            fmt_real(s.scales.ell),
            fmt_int(m),
            event_label(&r.event),
            fmt_int(ok + fails),
            fmt_int(fails),
            fmt_int(r.hits),
            fmt_real(p),
            fmt_real(r.p_gw),
            fmt_real(p / r.p_gw),
            fmt_real(se / r.p_gw),
            fmt_real(r.bracket.0),
            fmt_real(r.bracket.1),
            status.into(),
        ]);
        (p / r.p_gw, se / r.p_gw)
    }

    for n in cfg.n_or(&[1024]) {
        let params = ParamSet { n, ..cfg.params.clone() };
        let s = Schedule::toy(params, depth, ell)?;
        let events = registered_events(depth);
        let cap = cfg.step_cap(n);
        let (res, ok, fails) = tally(&s, m, &events, cfg.trials, cfg.seed, 1, cap, c)?;
        for r in &res {
            let expected = r.p_gw * ok as f64;
            let inconclusive = expected < min_hits;
            let p = r.hits as f64 / ok as f64;
            let se = (p * (1.0 - p) / ok as f64).sqrt() / r.p_gw;
            let ratio = p / r.p_gw;
            let inside = ratio + sigma * se >= r.bracket.0 && ratio - sigma * se <= r.bracket.1;
            let status = if inconclusive {
                "inconclusive"
            } else if inside {
                "inside"
            } else {
                "outside"
            };
            push(&mut rep, "event", &s, m, r, ok, fails, status);
            rep.check(
                format!("transfer n={n} {}", event_label(&r.event)),
                !inconclusive && inside,
                format!(
                    "ratio {ratio:.4} ± {se:.4} vs bracket [{:.4}, {:.4}] ({status})",
                    r.bracket.0, r.bracket.1
                ),
            );
        }
    }

    // trend: depth 2, ell and 2 ell, event T_1 = 0
    let trend_trials = cfg.tol_u64("transfer.trend_trials")?;
    let mut devs = Vec::new();
    for (k, e) in [ell, 2.0 * ell].into_iter().enumerate() {
        let r0 = e * e;
        let mut n = 16u32;
        while (n as f64) / 2.0 <= r0 {
            n *= 2;
        }
        let params = ParamSet { n, ..cfg.params.clone() };
        let s = Schedule::toy(params, 2, e)?;
        let events = vec![vec![0u64]];
        let (res, ok, fails) = tally(
            &s,
            m,
            &events,
            trend_trials,
            cfg.seed,
            2 + k as u64,
            cfg.step_cap(n),
            c,
        )?;
        let (ratio, se) = push(&mut rep, "trend", &s, m, &res[0], ok, fails, "trend");
        devs.push((e, ratio, se));
    }
    let (a, b) = (devs[0], devs[1]);
    let shrinks = (b.1 - 1.0).abs() < (a.1 - 1.0).abs();
    rep.check(
        "transfer trend",
        shrinks,
        format!(
            "|ratio - 1| for T_1 = 0: {:.4} at ell={} and {:.4} at ell={} (se {:.4}, {:.4})",
            (a.1 - 1.0).abs(),
            a.0,
            (b.1 - 1.0).abs(),
            b.0,
            a.2,
            b.2
        ),
    );
    Ok(rep)
}
