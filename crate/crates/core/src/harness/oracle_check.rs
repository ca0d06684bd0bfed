use std::collections::BTreeMap;

use crate::lattice::{circle, Ball, CellSet, LatticeError, PointSet, TorusPoint, TrialStream, WalkState};
use crate::oracle::{
    coupled_chain_run, direct_excursion_chain, expected_hit_exact, hit_prob_exact, hit_prob_field,
    kac_check, EquilibriumPair, OracleError, StationaryReport,
};
use crate::par;
use crate::stats::{two_sample_chi2, SummaryStats};

use super::{fmt_int, fmt_real, Experiment, ExperimentConfig, HarnessError, Report, Result};

fn push(rep: &mut Report, part: &str, label: &str, n: u32, value: f64, lo: f64, hi: f64, pass: Option<bool>) {
    rep.table.push(vec![
        part.into(),
        label.into(),
        fmt_int(n),
        fmt_real(value),
        fmt_real(lo),
        fmt_real(hi),
        match pass {
            Some(true) => "yes".into(),
            Some(false) => "no".into(),
            None => "-".into(),
        },
    ]);
}

enum Target {
    /// `P_v[H_A < H_B]`.
    Race(PointSet, PointSet),
    /// `E_v[H_A]`.
    Time(PointSet),
}

struct McCase {
    label: &'static str,
    n: u32,
    start: TorusPoint,
    target: Target,
}

fn mc_cases() -> std::result::Result<Vec<McCase>, LatticeError> {
    let c32 = TorusPoint::new(16, 16, 32);
    let c64 = TorusPoint::new(32, 32, 64);
    let single = |p: TorusPoint| -> PointSet { [p].into_iter().collect() };
    Ok(vec![
        McCase {
            label: "circle r=3 before circle R=12 from d=6",
            n: 32,
            start: c32.offset(6, 0),
            target: Target::Race(circle(c32, 3.0)?, circle(c32, 12.0)?),
        },
        McCase {
            label: "point before circle R=20 from d=5",
            n: 64,
            start: c64.offset(5, 0),
            target: Target::Race(single(c64), circle(c64, 20.0)?),
        },
        McCase {
            label: "point (10,0) before point (0,20) from origin",
            n: 64,
            start: TorusPoint::origin(64),
            target: Target::Race(
                single(TorusPoint::new(10, 0, 64)),
                single(TorusPoint::new(0, 20, 64)),
            ),
        },
        McCase {
            label: "exit time of B(c,10) from c",
            n: 32,
            start: c32,
            target: Target::Time(circle(c32, 10.0)?),
        },
        McCase {
            label: "hitting time of B(c,4) from the antipode",
            n: 64,
            start: c64.offset(32, 32),
            target: Target::Time(Ball::new(c64, 4.0)?.points()),
        },
    ])
}

/// Walk from `start` until it stands in `a` (true) or `b` (false).
fn race(start: TorusPoint, a: &CellSet, b: &CellSet, stream: TrialStream, cap: u64) -> std::result::Result<bool, LatticeError> {
    let mut w = WalkState::new(start, stream);
    let mut taken = 0u64;
    loop {
        let i = w.position().index();
        if a.contains(i) {
            return Ok(true);
        }
        if b.contains(i) {
            return Ok(false);
        }
        if taken == cap {
            return Err(LatticeError::BudgetExceeded { cap, steps: taken });
        }
        w.step();
        taken += 1;
    }
}

/// Monte Carlo against exact linear solves on five small configurations.
pub fn run_oracle_mc(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::OracleCheck);
    let sigma = cfg.tol("suite.sigma")?;
    for (k, case) in mc_cases()?.into_iter().enumerate() {
        let cap = cfg.step_cap(case.n);
        let tag = ((k as u64) + 1) << 40;
        let (exact, est, se) = match &case.target {
            Target::Race(a, b) => {
                let exact = hit_prob_exact(&case.start, a, b, case.n)?;
                let ca = CellSet::from_points(case.n, a);
                let cb = CellSet::from_points(case.n, b);
                let out = par::map_trials(cfg.trials, |t| {
                    race(case.start, &ca, &cb, TrialStream::new(cfg.seed, tag | t), cap)
                });
                let hits = out.into_iter().collect::<std::result::Result<Vec<bool>, _>>()?;
                let p = hits.iter().filter(|&&h| h).count() as f64 / hits.len() as f64;
                (exact, p, (p * (1.0 - p) / hits.len() as f64).sqrt())
            }
            Target::Time(a) => {
                let exact = expected_hit_exact(&case.start, a, case.n)?;
                let ca = CellSet::from_points(case.n, a);
                let out = par::map_trials(cfg.trials, |t| {
                    let mut w = WalkState::new(case.start, TrialStream::new(cfg.seed, tag | t));
                    w.hitting_time(&ca, cap).map(|v| v as f64)
                });
                let xs = out.into_iter().collect::<std::result::Result<Vec<f64>, _>>()?;
                let s = SummaryStats::from_samples(&xs, 0.95);
                (exact, s.mean, s.std_error())
            }
        };
        let (lo, hi) = (exact - sigma * se, exact + sigma * se);
        let ok = (lo..=hi).contains(&est);
        push(&mut rep, "mc", case.label, case.n, est, lo, hi, Some(ok));
        rep.check(
            format!("oracle mc: {}", case.label),
            ok,
            format!("mc {est:.6} vs exact {exact:.6} (3 se = {:.6})", sigma * se),
        );
    }
    Ok(rep)
}

/// Hitting probabilities between circles on a radius grid at `n = 64`
/// against the logarithmic brackets, plus the singleton-target bracket.
pub fn run_bracket_grid(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::OracleCheck);
    let c1 = cfg.tol("bracket.c1")?;
    let c2 = cfg.tol("bracket.c2")?;
    let dev_max = cfg.tol("bracket.scaled_dev_max")?;
    let n = 64u32;
    let x = TorusPoint::new(32, 32, n);
    let mut all_in = true;
    let mut worst_dev = 0.0f64;
    let mut count = 0usize;
    for r in [2.0, 3.0, 4.0, 6.0, 8.0] {
        for big_r in [16.0, 24.0, 31.0] {
            let f = hit_prob_field(&circle(x, r)?, &circle(x, big_r)?)?;
            let lr = (big_r / r).ln();
            let mut dev = 0.0f64;
            let mut offsets: Vec<(i64, i64)> = Vec::new();
            for d in 1..(big_r as i64) {
                offsets.push((d, 0));
                offsets.push((d, d));
            }
            for (dx, dy) in offsets {
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                if !(d > r && d < big_r) {
                    continue;
                }
                let p = f[x.offset(dx, dy).index()];
                let mid = (big_r / d).ln() / lr;
                let (lo, hi) = (mid - c1 / r / lr, mid + c1 / r / lr);
                let ok = (lo..=hi).contains(&p);
                all_in &= ok;
                count += 1;
                dev = dev.max((p - mid).abs() * r * lr);
                let label = format!("r={r} R={big_r} d={d:.4}");
                push(&mut rep, "bracket_annulus", &label, n, p, lo, hi, Some(ok));
            }
            worst_dev = worst_dev.max(dev);
            let label = format!("r={r} R={big_r}");
            push(&mut rep, "scaled_deviation", &label, n, dev, 0.0, dev_max, Some(dev <= dev_max));
        }
    }
    for big_r in [8.0, 16.0, 31.0] {
        let a: PointSet = [x].into_iter().collect();
        let f = hit_prob_field(&a, &circle(x, big_r)?)?;
        let lr = big_r.ln();
        for d in 1..(big_r as i64) {
            let df = d as f64;
            let p = f[x.offset(d, 0).index()];
            let slack = c2 / df + c2 / lr;
            let mid = (big_r / df).ln();
            let (lo, hi) = ((mid - slack) / lr, (mid + slack) / lr);
            let ok = (lo..=hi).contains(&p);
            all_in &= ok;
            count += 1;
            let label = format!("point R={big_r} d={d}");
            push(&mut rep, "bracket_point", &label, n, p, lo, hi, Some(ok));
        }
    }
    rep.check(
        "oracle brackets",
        all_in,
        format!("{count} hitting probabilities checked against the brackets with c1 = {c1}, c2 = {c2}"),
    );
    rep.check(
        "oracle scaled deviation",
        worst_dev <= dev_max,
        format!("max |P - log(R/d)/log(R/r)| r log(R/r) = {worst_dev:.4} (limit {dev_max})"),
    );
    Ok(rep)
}

fn start_histogram(pair: &EquilibriumPair, starts: &[TorusPoint]) -> Vec<u64> {
    let mut h = vec![0u64; pair.outer.len()];
    for s in starts {
        if let Ok(k) = pair.outer.binary_search(s) {
            h[k] += 1;
        }
    }
    h
}

/// Equilibrium measures on a small grid, the occupation-measure identity
/// and the regeneration-block mean `E[G_1] = E_mu[H_{∂B(y,r)}] / q`.
pub fn run_equilibrium_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::OracleCheck);
    let res_max = cfg.tol("equilibrium.residual_max")?;
    let dev_max = cfg.tol("equilibrium.uniform_dev_max")?;
    let q_max = cfg.tol("equilibrium.q_scaled_max")?;
    let sigma = cfg.tol("suite.sigma")?;
    let chains = cfg.tol_u64("equilibrium.chains")?;
    let chain_len = cfg.tol_u64("equilibrium.chain_len")? as usize;
    let n = 64u32;
    let y = TorusPoint::new(32, 32, n);
    let cache = cfg.cache_dir();
    let mut pairs = BTreeMap::new();
    let mut ok_res = true;
    let mut ok_dev = true;
    let mut ok_q = true;
    for (r, big_r) in [(3.0, 16.0), (4.0, 24.0), (4.0, 32.0)] {
        let pair = EquilibriumPair::load_or_compute(cache.as_deref(), y, r, big_r)?;
        let st = StationaryReport::from_pair(&pair)?;
        let label = format!("r={r} R={big_r}");
        let res = pair.residuals.0.max(pair.residuals.1);
        let qs = (1.0 - pair.q) * big_r / r;
        ok_res &= res < res_max;
        ok_dev &= st.deviation < dev_max;
        ok_q &= qs <= q_max;
        push(&mut rep, "fixed_point_residual", &label, n, res, 0.0, res_max, Some(res < res_max));
        push(&mut rep, "uniformity_deviation", &label, n, st.deviation, 0.0, dev_max, Some(st.deviation < dev_max));
        push(&mut rep, "q_scaled", &label, n, qs, 0.0, q_max, Some(qs <= q_max));
        push(&mut rep, "q", &label, n, pair.q, 0.0, 1.0, None);
        let anchor = 2.0 / std::f64::consts::PI * (big_r / r).ln();
        push(&mut rep, "occupation_density", &label, n, st.m_center, anchor, anchor, None);
        push(&mut rep, "expected_d1", &label, n, st.expected_d1, st.total_mass, st.total_mass, None);
        pairs.insert(label, pair);
    }
    rep.check("equilibrium residuals", ok_res, format!("all below {res_max:e}"));
    rep.check("equilibrium uniformity", ok_dev, format!("all below {dev_max:e}"));
    rep.check("equilibrium q", ok_q, format!("(1 - q) R / r <= {q_max} on the grid"));

    // regeneration blocks on (4, 24)
    let pair = &pairs["r=4 R=24"];
    let target = pair.mean_inward_time()? / pair.q;
    let x0 = TorusPoint::origin(n);
    let cap = cfg.step_cap(n);
    let runs = par::map_trials(chains, |t| {
        coupled_chain_run(pair, x0, chain_len, TrialStream::new(cfg.seed, (1 << 40) | t), cap)
    });
    let mut g1 = Vec::new();
    let mut g2 = Vec::new();
    let mut coupled_starts = Vec::new();
    let mut short = 0u64;
    let probe = chain_len / 2;
    for run in runs {
        let run = run.map_err(HarnessError::Oracle)?;
        if run.blocks.len() >= 3 {
            g1.push(run.blocks[1] as f64);
            g2.push(run.blocks[2] as f64);
        } else {
            short += 1;
        }
        coupled_starts.push(run.states[probe].excursion.start);
    }
    let direct = par::map_trials(chains, |t| {
        direct_excursion_chain(pair, x0, probe + 1, TrialStream::new(cfg.seed, (2 << 40) | t), cap)
    });
    let direct_starts = direct
        .into_iter()
        .map(|r| r.map(|v| v[probe].start))
        .collect::<std::result::Result<Vec<_>, OracleError>>()?;
    let s1 = SummaryStats::from_samples(&g1, 0.95);
    let (lo, hi) = (target - sigma * s1.std_error(), target + sigma * s1.std_error());
    let ok = (lo..=hi).contains(&s1.mean);
    push(&mut rep, "block_mean", "r=4 R=24 G_1", n, s1.mean, lo, hi, Some(ok));
    rep.check(
        "equilibrium block mean",
        ok,
        format!(
            "E[G_1] = {:.1} ± {:.1} vs E_mu[H]/q = {target:.1} ({} chains, {short} without two closed blocks)",
            s1.mean,
            s1.std_error(),
            g1.len()
        ),
    );
    let bins = 30;
    let mut all: Vec<f64> = g1.iter().chain(&g2).copied().collect();
    all.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|k| crate::stats::quantile(&all, k as f64 / bins as f64)).collect();
    let hist = |xs: &[f64]| {
        let mut h = vec![0u64; bins];
        for v in xs {
            h[edges.partition_point(|e| e < v)] += 1;
        }
        h
    };
    let ex = two_sample_chi2(&hist(&g1), &hist(&g2), 10);
    push(&mut rep, "block_exchangeability_p", "G_1 vs G_2", n, ex.p_value, 0.0, 1.0, None);
    let mc = two_sample_chi2(
        &start_histogram(pair, &coupled_starts),
        &start_histogram(pair, &direct_starts),
        10,
    );
    push(&mut rep, "start_marginal_p", "coupled vs direct chain", n, mc.p_value, 0.0, 1.0, None);
    rep.notes.push(format!(
        "block exchangeability p = {:.3}; start-marginal p = {:.3}",
        ex.p_value, mc.p_value
    ));
    Ok(rep)
}

/// Moment bound `E[T^m] <= m! E[T] (max E)^{m-1}` for `m = 2, 3` on two targets.
pub fn run_kac_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::OracleCheck);
    let slack = cfg.tol("kac.slack")?;
    let targets: Vec<(&str, u32, PointSet)> = vec![
        ("point on n=16", 16, [TorusPoint::origin(16)].into_iter().collect()),
        ("circle r=8 on n=32", 32, circle(TorusPoint::new(16, 16, 32), 8.0)?),
    ];
    let mut ok = true;
    let mut desc = Vec::new();
    for (label, n, target) in targets {
        let k = kac_check(&target, 3)?;
        for (m, ratio) in &k.ratios {
            let pass = *ratio <= 1.0 + slack;
            ok &= pass;
            push(&mut rep, "kac_ratio", &format!("{label} m={m}"), n, *ratio, 0.0, 1.0 + slack, Some(pass));
            desc.push(format!("{label} m={m}: {ratio:.4}"));
        }
    }
    rep.check("kac moments", ok, desc.join(", "));
    Ok(rep)
}

/// All four oracle checks in one table.
pub fn run_oracle_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = run_oracle_mc(cfg)?;
    rep.absorb(run_bracket_grid(cfg)?);
    rep.absorb(run_equilibrium_check(cfg)?);
    rep.absorb(run_kac_check(cfg)?);
    Ok(rep)
}
