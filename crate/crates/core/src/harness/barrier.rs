use crate::gw::{barrier_event_exact, barrier_event_mc, BarrierMode, BarrierSpec};

use crate::stats::linear_fit;

use super::{fmt_int, fmt_real, Experiment, ExperimentConfig, HarnessError, Report, Result};

const ETA: f64 = 1.5;

/// Lower-mode geometry at length `len`: `r = 2`, `mu = 0.41`, `x^2/2` the
/// smallest integer at least `(mu L)^2 / 2`, `a = x`, `b = 0`.
pub fn lower_spec(len: usize) -> BarrierSpec {
    let mu = 0.41;
    let half_sq = ((mu * len as f64).powi(2) / 2.0).ceil();
    let x = (2.0 * half_sq).sqrt();
    BarrierSpec {
        len,
        a: x,
        b: 0.0,
        x,
        y: 0.0,
        c: 1.2,
        c_tilde: 3.0,
        epsilon: 0.1,
        delta_window: 1.0,
        r: 2,
        mu,
        eta: ETA,
    }
}

/// Upper-mode geometry at length `len`: `x = y = a = b = 4`, `C = 1`, `delta = 1`.
pub fn upper_spec(len: usize) -> BarrierSpec {
    BarrierSpec {
        len,
        a: 4.0,
        b: 4.0,
        x: 4.0,
        y: 4.0,
        c: 1.0,
        c_tilde: 3.0,
        epsilon: 0.1,
        delta_window: 1.0,
        r: 0,
        mu: 0.5,
        eta: ETA,
    }
}

/// `r/(L - 2r) (1 - 1/L)^{x^2/2}`.
fn lower_shape(s: &BarrierSpec) -> f64 {
    let l = s.len as f64;
    let r = s.r as f64;
    r / (l - 2.0 * r) * (1.0 - 1.0 / l).powf(s.x * s.x / 2.0)
}

/// `sqrt(x/y) L^{-1/2} exp(-(y-x)^2/(2L)) (eta + x - a)(eta + y - b) / L`.
fn upper_shape(s: &BarrierSpec) -> f64 {
    let l = s.len as f64;
    (s.x / s.y).sqrt() / l.sqrt() * (-(s.y - s.x).powi(2) / (2.0 * l)).exp()
        * (s.eta + s.x - s.a)
        * (s.eta + s.y - s.b)
        / l
}

struct Point {
    len: usize,
    p_hat: f64,
    ci_lo: f64,
    se: f64,
    p_exact: f64,
    shape: f64,
}

/// Barrier probabilities of the critical process in both modes, Monte Carlo
/// and by exact propagation, with their shape-normalized values. `--n` lists
/// the lengths `L`. The upper-mode prefactor is fitted on that grid and then
/// tested on two longer held-out lengths; the lower mode is also propagated
/// exactly (no sampling) at twice the longest length.
pub fn run_barrier_sweep(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(Experiment::Barrier);
    let sigma = cfg.tol("suite.sigma")?;
    let floor = cfg.tol("barrier.lower_floor_ratio")?;
    let base_cap = cfg.tol_u64("barrier.exact_cap")? as usize;
    let lower_trials = cfg.tol_u64("barrier.lower_trials")?;
    let mut lens: Vec<usize> = cfg.n_or(&[16, 32, 64]).into_iter().map(|v| v as usize).collect();
    lens.sort_unstable();
    lens.dedup();
    let longest = *lens.last().ok_or_else(|| HarnessError::Config("no lengths".into()))?;
    let held_out = [2 * longest, 4 * longest];

    let mut run = |mode: BarrierMode, len: usize, trials: u64| -> Result<Point> {
        let spec = match mode {
            BarrierMode::Lower => lower_spec(len),
            _ => upper_spec(len),
        };
        spec.validate(mode)?;
        let tag = if mode == BarrierMode::Lower { 1u64 } else { 2 };
        let seed = cfg.seed ^ (tag << 56) ^ ((len as u64) << 40);
        let est = if trials > 0 {
            Some(barrier_event_mc(&spec, mode, trials, seed)?)
        } else {
            None
        };
        let cap = base_cap.max(4 * spec.start()? as usize).max(16 * len);
        let (p_exact, lost) = barrier_event_exact(&spec, mode, cap)?;
        let shape = match mode {
            BarrierMode::Lower => lower_shape(&spec),
            _ => upper_shape(&spec),
        };
        let (p_hat, ci_lo, ci_hi) = est.map_or((f64::NAN, f64::NAN, f64::NAN), |e| (e.p_hat, e.ci_lo, e.ci_hi));
        rep.table.push(vec![
            if mode == BarrierMode::Lower { "lower".into() } else { "upper".into() },
            fmt_int(len),
            fmt_int(spec.r),
            fmt_real(spec.x),
            fmt_real(spec.y),
            fmt_real(spec.a),
            fmt_real(spec.b),
            fmt_real(spec.c),
            fmt_real(spec.epsilon),
            fmt_int(trials),
            fmt_real(p_hat),
            fmt_real(ci_lo),
            fmt_real(ci_hi),
            fmt_real(p_exact),
            fmt_real(lost),
            fmt_real(shape),
            fmt_real(p_hat / shape),
        ]);
        Ok(Point {
            len,
            p_hat,
            ci_lo,
            se: (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
            p_exact,
            shape,
        })
    };

    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &len in &lens {
        lower.push(run(BarrierMode::Lower, len, lower_trials)?);
        upper.push(run(BarrierMode::Upper, len, cfg.trials)?);
    }
    let lower_extra = run(BarrierMode::Lower, held_out[0], 0)?;
    let upper_extra: Vec<Point> = held_out
        .iter()
        .map(|&len| run(BarrierMode::Upper, len, cfg.trials))
        .collect::<Result<_>>()?;

    let first = &lower[0];
    let last = &lower[lower.len() - 1];
    let positive = lower.iter().all(|e| e.ci_lo > 0.0);
    let ratio = (last.p_hat / last.shape) / (first.p_hat / first.shape);
    let mut series: Vec<&Point> = lower.iter().collect();
    series.push(&lower_extra);
    let xs: Vec<f64> = series.iter().map(|p| (p.len as f64).ln()).collect();
    let ys: Vec<f64> = series.iter().map(|p| (p.p_exact / p.shape).ln()).collect();
    let slope = linear_fit(&xs, &ys).slope;
    let desc: Vec<String> = series
        .iter()
        .map(|p| format!("L={}: {:.2e} (exact {:.2e})", p.len, p.p_hat / p.shape, p.p_exact / p.shape))
        .collect();
    rep.check(
        "barrier lower mode",
        positive && ratio >= floor,
        format!(
            "normalized {}; last/first on the grid = {ratio:.3} (floor {floor}); \
             log-log slope of the exact series {slope:.2}",
            desc.join(", ")
        ),
    );

    let k = upper
        .iter()
        .map(|p| p.p_hat / p.shape)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ok = true;
    let mut desc = Vec::new();
    for p in upper.iter().chain(&upper_extra) {
        let env = k * p.shape;
        ok &= p.p_hat - sigma * p.se <= env;
        desc.push(format!("L={}: {:.3e} (exact {:.3e}) vs {:.3e}", p.len, p.p_hat, p.p_exact, env));
    }
    rep.check(
        "barrier upper mode",
        ok,
        format!(
            "prefactor {k:.4} fitted on L in {lens:?}, held out {held_out:?}; {}",
            desc.join(", ")
        ),
    );
    Ok(rep)
}
