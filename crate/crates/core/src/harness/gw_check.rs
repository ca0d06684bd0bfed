use std::collections::BTreeMap;

use crate::gw::{
    extinct_by, gw_path_prob, nb_pmf, srw_traversal_counts, srw_traversal_joint_exact, ExactGw,
    GWTrajectory,
};
use crate::lattice::TrialStream;
use crate::par;
use crate::stats::two_sample_chi2;

use super::{fmt_int, fmt_real, Experiment, ExperimentConfig, Report, Result};

const EXACT_CAP: usize = 400;
const JOINT_CAP: usize = 100;

/// Closed forms and exact laws of the critical geometric process against the
/// traversal counts of the reflected one-dimensional walk.
pub fn run_gw_equivalence(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::GwCheck);
    let tol = cfg.tol("gw.exact_tol")?;
    let p_min = cfg.tol("gw.chi2_p_min")?;
    let m_chi = cfg.tol_u64("gw.chi2_m")?;
    let len_chi = cfg.tol_u64("gw.chi2_len")? as usize;
    let exact = ExactGw::new(EXACT_CAP);
    let mut rows = Vec::new();
    let mut row = |part: &str, m: u64, len: usize, stat: &str, v: f64| {
        rows.push(vec![part.into(), fmt_int(m), fmt_int(len), stat.into(), fmt_real(v)]);
    };

    let mut worst = 0.0f64;
    for m in 0..=6u64 {
        for k in 1..=5usize {
            let (law, lost) = exact.law(m as usize, k);
            let d = (law[0] - extinct_by(m, k as u64)).abs();
            row("extinction", m, k, "abs_diff", d);
            row("extinction", m, k, "lost", lost);
            worst = worst.max(d).max(lost);
        }
    }
    rep.check(
        "gw extinction",
        worst <= tol,
        format!("max |P[T_k = 0] - (k/(k+1))^m| over m <= 6, k <= 5: {worst:.2e}"),
    );

    let mut worst = 0.0f64;
    for m in 1..=6u64 {
        let law = exact.step_law(m as usize);
        let d = law
            .iter()
            .enumerate()
            .map(|(j, p)| (p - nb_pmf(m, j as u64)).abs())
            .fold(0.0, f64::max);
        row("one_step", m, 1, "max_abs_diff", d);
        worst = worst.max(d);
    }
    rep.check(
        "gw one-step law",
        worst <= tol,
        format!("max deviation from the negative binomial: {worst:.2e}"),
    );

    let mut worst = 0.0f64;
    for m in 1..=2u64 {
        for len in 2..=3usize {
            let (law, lost) = srw_traversal_joint_exact(len, m, JOINT_CAP);
            let mut d = 0.0f64;
            let mut covered = 0.0;
            for (path, &p) in &law {
                let g = gw_path_prob(m, path);
                covered += g;
                d = d.max((p - g).abs()).max((p - exact.path_prob(m as usize, path)).abs());
            }
            let missing = 1.0 - covered;
            row("joint", m, len, "max_abs_diff", d);
            row("joint", m, len, "walk_lost", lost);
            row("joint", m, len, "gw_missing", missing);
            worst = worst.max(d).max(lost).max(missing);
        }
    }
    rep.check(
        "gw joint law",
        worst <= tol,
        format!("walk vs process joint law for m <= 2, L <= 3: {worst:.2e}"),
    );

    // sampled joint law of (T_1, ..., T_{L-1})
    let n = cfg.trials;
    let walk = par::map_trials(n, |t| {
        let mut s = TrialStream::new(cfg.seed, (1 << 40) | t);
        srw_traversal_counts(len_chi, m_chi, &mut s)[1..len_chi].to_vec()
    });
    let proc = par::map_trials(n, |t| {
        let mut s = TrialStream::new(cfg.seed, (2 << 40) | t);
        GWTrajectory::simulate(m_chi, len_chi - 1, &mut s).generations[1..].to_vec()
    });
    let mut bins: BTreeMap<&[u64], (u64, u64)> = BTreeMap::new();
    for p in &walk {
        bins.entry(p).or_default().0 += 1;
    }
    for p in &proc {
        bins.entry(p).or_default().1 += 1;
    }
    let (a, b): (Vec<u64>, Vec<u64>) = bins.values().copied().unzip();
    let joint = two_sample_chi2(&a, &b, 20);
    row("chi2", m_chi, len_chi, "joint_statistic", joint.statistic);
    row("chi2", m_chi, len_chi, "joint_dof", joint.dof as f64);
    row("chi2", m_chi, len_chi, "joint_p", joint.p_value);
    for level in 1..len_chi {
        let top = 1 + walk
            .iter()
            .chain(&proc)
            .map(|p| p[level - 1])
            .max()
            .unwrap_or(0) as usize;
        let mut a = vec![0u64; top];
        let mut b = vec![0u64; top];
        walk.iter().for_each(|p| a[p[level - 1] as usize] += 1);
        proc.iter().for_each(|p| b[p[level - 1] as usize] += 1);
        let r = two_sample_chi2(&a, &b, 20);
        row("chi2", m_chi, level, "marginal_p", r.p_value);
    }
    rep.check(
        "gw sampled joint law",
        joint.p_value > p_min,
        format!(
            "chi-square over {} joint bins, {n} samples each: p = {:.4}",
            joint.dof + 1,
            joint.p_value
        ),
    );
    for r in rows {
        rep.table.push(r);
    }
    Ok(rep)
}
