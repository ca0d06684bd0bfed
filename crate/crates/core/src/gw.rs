//! Critical Galton-Watson process with geometric(1/2) offspring: sampling,
//! exact laws, the reflected 1-D walk with the same traversal law, and
//! barrier-event estimation.

use std::collections::BTreeMap;

use rand::RngCore;
use thiserror::Error;

use crate::lattice::TrialStream;
use crate::par;
use crate::schedule::{i_l, linear_barrier, snap};
use crate::stats::wilson;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GwError {
    #[error("zero trials requested")]
    ZeroTrials,
    #[error("barrier precondition violated: {0}")]
    Precondition(String),
}

/// One generation of the process from population `m`: the number of zero
/// bits preceding the `m`-th one bit in a fair bit stream, which is a sum of
/// `m` independent geometric(1/2) variables on `{0, 1, ...}`.
pub fn gw_step<R: RngCore + ?Sized>(m: u64, rng: &mut R) -> u64 {
    let mut need = m;
    let mut zeros = 0u64;
    while need > 0 {
        let word = rng.next_u64();
        let ones = word.count_ones() as u64;
        if ones < need {
            zeros += 64 - ones;
            need -= ones;
        } else {
            let mut v = word;
            for _ in 1..need {
                v &= v - 1;
            }
            zeros += v.trailing_zeros() as u64 + 1 - need;
            need = 0;
        }
    }
    zeros
}

fn unit_open<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Sum of `m` geometric variables with mass `(1 - rho) rho^j` at `j`.
pub fn geometric_sum<R: RngCore + ?Sized>(m: u64, rho: f64, rng: &mut R) -> u64 {
    if rho <= 0.0 {
        return 0;
    }
    let lr = rho.ln();
    (0..m).map(|_| (unit_open(rng).ln() / lr).floor() as u64).sum()
}

/// A population path `T_0, T_1, ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GWTrajectory {
    pub generations: Vec<u64>,
}

impl GWTrajectory {
    /// `generations + 1` values starting from `T_0 = m`.
    pub fn simulate<R: RngCore + ?Sized>(m: u64, generations: usize, rng: &mut R) -> Self {
        let mut out = Vec::with_capacity(generations + 1);
        let mut t = m;
        out.push(t);
        for _ in 0..generations {
            t = gw_step(t, rng);
            out.push(t);
        }
        GWTrajectory { generations: out }
    }

    /// The process conditioned on `T_len = 0`. Conditioning turns each
    /// individual's offspring law at generation `i` into a geometric law with
    /// ratio `theta_{i+1} / 2`, where `theta_i = (len - i) / (len - i + 1)`.
    pub fn simulate_extinct_by<R: RngCore + ?Sized>(m: u64, len: usize, rng: &mut R) -> Self {
        let mut out = Vec::with_capacity(len + 1);
        let mut t = m;
        out.push(t);
        for i in 0..len {
            let rest = (len - i) as f64;
            let theta_next = (rest - 1.0) / rest;
            t = geometric_sum(t, theta_next / 2.0, rng);
            out.push(t);
        }
        GWTrajectory { generations: out }
    }

    /// First generation with population zero, if any.
    pub fn extinction_generation(&self) -> Option<usize> {
        self.generations.iter().position(|&t| t == 0)
    }
}

/// `P_m[T_k = 0] = (k / (k + 1))^m`.
pub fn extinct_by(m: u64, k: u64) -> f64 {
    let k = k as f64;
    (k / (k + 1.0)).powf(m as f64)
}

/// `exp(-(sqrt(m') - sqrt(m))^2 / (i + 1))`.
pub fn sub_gaussian_envelope(m: f64, m_prime: f64, i: u64) -> f64 {
    (-(m_prime.sqrt() - m.sqrt()).powi(2) / (i as f64 + 1.0)).exp()
}

/// Negative-binomial mass `C(m + j - 1, j) 2^{-(m + j)}` of one generation.
pub fn nb_pmf(m: u64, j: u64) -> f64 {
    if m == 0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    // log form keeps large arguments finite
    let mut log_p = -(m as f64) * std::f64::consts::LN_2;
    for i in 1..=j {
        log_p += ((m + i - 1) as f64 / (2 * i) as f64).ln();
    }
    log_p.exp()
}

/// Probability of an exact population path `T_1 = path[0], T_2 = path[1], ...`.
pub fn gw_path_prob(m: u64, path: &[u64]) -> f64 {
    let mut prev = m;
    let mut p = 1.0;
    for &t in path {
        p *= nb_pmf(prev, t);
        prev = t;
    }
    p
}

/// One-generation transition laws obtained by repeated convolution of the
/// geometric mass function, with populations truncated at `cap`.
#[derive(Clone, Debug)]
pub struct ExactGw {
    cap: usize,
    kernel: Vec<Vec<f64>>,
}

impl ExactGw {
    pub fn new(cap: usize) -> Self {
        let geom: Vec<f64> = (0..=cap).map(|j| 0.5f64.powi(j as i32 + 1)).collect();
        let mut kernel = Vec::with_capacity(cap + 1);
        let mut row = vec![0.0; cap + 1];
        row[0] = 1.0;
        kernel.push(row.clone());
        for _ in 1..=cap {
            let mut next = vec![0.0; cap + 1];
            for (s, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (j, &g) in geom[..=cap - s].iter().enumerate() {
                    next[s + j] += p * g;
                }
            }
            kernel.push(next.clone());
            row = next;
        }
        ExactGw { cap, kernel }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn step_law(&self, t: usize) -> &[f64] {
        &self.kernel[t]
    }

    /// Law of `T_k` from `T_0 = m` and the probability mass lost to truncation.
    pub fn law(&self, m: usize, k: usize) -> (Vec<f64>, f64) {
        let mut dist = vec![0.0; self.cap + 1];
        dist[m] = 1.0;
        for _ in 0..k {
            let mut next = vec![0.0; self.cap + 1];
            for (t, &p) in dist.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (s, &q) in self.kernel[t].iter().enumerate() {
                    next[s] += p * q;
                }
            }
            dist = next;
        }
        let lost = 1.0 - dist.iter().sum::<f64>();
        (dist, lost)
    }

    pub fn path_prob(&self, m: usize, path: &[u64]) -> f64 {
        let mut prev = m;
        let mut p = 1.0;
        for &t in path {
            p *= self.kernel[prev][t as usize];
            prev = t as usize;
        }
        p
    }
}

/// Reflected simple walk on `{0, ..., len}` started at 1. Returns
/// `T_0, ..., T_len` where `T_i` counts up-steps `i -> i+1` before the `m`-th
/// visit to 0 and `T_0 = m` by convention; `T_len` is always 0.
pub fn srw_traversal_counts<R: RngCore + ?Sized>(len: usize, m: u64, rng: &mut R) -> Vec<u64> {
    assert!(len >= 2 && m >= 1);
    let mut counts = vec![0u64; len + 1];
    counts[0] = m;
    let mut pos = 1usize;
    let mut returns = 0u64;
    let mut bits = 0u64;
    let mut left = 0u32;
    loop {
        if pos == len {
            pos -= 1;
            continue;
        }
        if left == 0 {
            bits = rng.next_u64();
            left = 64;
        }
        let up = bits & 1 == 1;
        bits >>= 1;
        left -= 1;
        if up {
            counts[pos] += 1;
            pos += 1;
        } else {
            pos -= 1;
            if pos == 0 {
                returns += 1;
                if returns == m {
                    return counts;
                }
                pos = 1;
            }
        }
    }
}

/// Exact joint law of `(T_1, ..., T_{len-1})` for the reflected walk, by
/// forward propagation of the finite chain (position, counts, returns) until
/// the mass still in transit is below `1e-16`. Counts above `cap` are dropped
/// and reported as lost mass.
pub fn srw_traversal_joint_exact(len: usize, m: u64, cap: usize) -> (BTreeMap<Vec<u64>, f64>, f64) {
    assert!(len >= 2 && m >= 1);
    let dims = len - 1;
    let per = cap + 1;
    let count_states = per.pow(dims as u32);
    let size = m as usize * len * count_states;
    let index = |ret: usize, pos: usize, c: &[usize]| -> usize {
        let mut ci = 0;
        for &v in c {
            ci = ci * per + v;
        }
        (ret * len + (pos - 1)) * count_states + ci
    };
    let mut cur = vec![0.0f64; size];
    cur[index(0, 1, &vec![0; dims])] = 1.0;
    let mut law: BTreeMap<Vec<u64>, f64> = BTreeMap::new();
    let mut lost = 0.0;
    let mut c = vec![0usize; dims];
    loop {
        let transit: f64 = cur.iter().sum();
        if transit < 1e-16 {
            lost += transit;
            break;
        }
        let mut next = vec![0.0f64; size];
        for (idx, &p) in cur.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut ci = idx % count_states;
            let rp = idx / count_states;
            let (ret, pos) = (rp / len, rp % len + 1);
            for d in (0..dims).rev() {
                c[d] = ci % per;
                ci /= per;
            }
            if pos == len {
                next[index(ret, len - 1, &c)] += p;
                continue;
            }
            let half = 0.5 * p;
            // up-step from pos increments T_pos, stored at c[pos - 1]
            if c[pos - 1] == cap {
                lost += half;
            } else {
                c[pos - 1] += 1;
                next[index(ret, pos + 1, &c)] += half;
                c[pos - 1] -= 1;
            }
            if pos == 1 {
                if ret + 1 == m as usize {
                    let key: Vec<u64> = c.iter().map(|&v| v as u64).collect();
                    *law.entry(key).or_insert(0.0) += half;
                } else {
                    next[index(ret + 1, 1, &c)] += half;
                }
            } else {
                next[index(ret, pos - 1, &c)] += half;
            }
        }
        cur = next;
    }
    (law, lost)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierMode {
    /// Lower barrier on `1..L-1` plus the terminal window on `sqrt(2 T_L)`.
    Upper,
    /// Two-sided corridor on `r..L-1-r` plus extinction `T_{L-1} = 0`.
    Lower,
    /// The corridor of `Lower` without the extinction requirement.
    TwoSided,
}

/// Barrier geometry in the `sqrt(2 T_i)` coordinate, started from `T_0 = x^2 / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct BarrierSpec {
    pub len: usize,
    pub a: f64,
    pub b: f64,
    pub x: f64,
    pub y: f64,
    pub c: f64,
    pub c_tilde: f64,
    pub epsilon: f64,
    pub delta_window: f64,
    pub r: usize,
    pub mu: f64,
    pub eta: f64,
}

fn require(ok: bool, what: &str) -> Result<(), GwError> {
    if ok {
        Ok(())
    } else {
        Err(GwError::Precondition(what.to_string()))
    }
}

/// Smallest integer `t` with `sqrt(2 t) >= c`.
fn min_pop(c: f64) -> u64 {
    if c <= 0.0 {
        0
    } else {
        snap(c * c / 2.0).ceil() as u64
    }
}

/// Largest integer `t` with `sqrt(2 t) <= c`, or `None` if there is none.
fn max_pop(c: f64) -> Option<u64> {
    if c < 0.0 {
        None
    } else if c.is_infinite() {
        Some(u64::MAX)
    } else {
        Some(snap(c * c / 2.0).floor() as u64)
    }
}

/// Integer window `[lo, hi]` for `T_i`; `lo > hi` encodes an empty window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PopWindow {
    pub lo: u64,
    pub hi: u64,
}

impl PopWindow {
    const FREE: PopWindow = PopWindow { lo: 0, hi: u64::MAX };

    fn meet(self, other: PopWindow) -> PopWindow {
        PopWindow {
            lo: self.lo.max(other.lo),
            hi: self.hi.min(other.hi),
        }
    }

    pub fn admits(&self, t: u64) -> bool {
        self.lo <= t && t <= self.hi
    }
}

impl BarrierSpec {
    /// `x^2 / 2` as an integer.
    pub fn start(&self) -> Result<u64, GwError> {
        let s = self.x * self.x / 2.0;
        require(
            (s - s.round()).abs() < 1e-9 && s >= 0.0,
            "x^2/2 must be a nonnegative integer",
        )?;
        Ok(s.round() as u64)
    }

    pub fn validate(&self, mode: BarrierMode) -> Result<(), GwError> {
        self.start()?;
        let l = self.len as f64;
        require(self.len >= 1, "L >= 1")?;
        require(self.epsilon > 0.0 && self.epsilon < 0.5, "epsilon in (0, 1/2)")?;
        require(self.eta > 1.0, "eta > 1")?;
        require(self.c > 0.0, "C > 0")?;
        match mode {
            BarrierMode::Upper => {
                require(self.delta_window > 0.0, "delta > 0")?;
                require(
                    2f64.sqrt() <= self.x + 1e-12 && self.x <= self.eta * l,
                    "sqrt(2) <= x <= eta L",
                )?;
                require(
                    2f64.sqrt() <= self.y + 1e-12 && self.y <= self.eta * l,
                    "sqrt(2) <= y <= eta L",
                )?;
                require(0.0 <= self.a && self.a <= self.x, "0 <= a <= x")?;
                require(0.0 <= self.b && self.b <= self.y, "0 <= b <= y")?;
                require(self.b <= self.a, "b <= a")
            }
            BarrierMode::Lower | BarrierMode::TwoSided => {
                let r = self.r as f64;
                require(self.mu > 0.0 && self.mu < 1.0, "mu in (0, 1)")?;
                require(
                    4.0 * r.powf(0.5 + 2.0 * self.epsilon) <= self.mu * l,
                    "4 r^(1/2 + 2 eps) <= mu L",
                )?;
                require(self.mu * l <= self.a, "mu L <= a")?;
                require(self.a <= self.x, "a <= x")?;
                require(self.x <= self.eta * l, "x <= eta L")?;
                require(
                    self.c * r.powf(0.5 - self.epsilon) > self.eta,
                    "C r^(1/2 - eps) > eta",
                )?;
                require(self.len > 2 * self.r, "L > 2r")
            }
        }
    }

    fn lower_curve(&self, i: usize, sign: f64) -> f64 {
        let l = self.len as f64;
        let lin = linear_barrier(self.a, self.b, i as f64, l);
        if self.c.is_infinite() {
            return if sign < 0.0 { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        lin + sign * self.c * i_l(i as f64, l).powf(0.5 - self.epsilon)
    }

    fn upper_curve(&self, i: usize) -> f64 {
        let l = self.len as f64;
        linear_barrier(self.x, 0.0, i as f64, l)
            + self.c_tilde * i_l(i as f64, l).powf(0.5 + self.epsilon)
    }

    /// Per-generation integer windows for `T_0 .. T_L`.
    pub fn windows(&self, mode: BarrierMode) -> Vec<PopWindow> {
        let l = self.len;
        let mut w = vec![PopWindow::FREE; l + 1];
        match mode {
            BarrierMode::Upper => {
                for (i, wi) in w.iter_mut().enumerate().take(l).skip(1) {
                    wi.lo = min_pop(self.lower_curve(i, -1.0));
                }
                w[l] = PopWindow {
                    lo: min_pop(self.y),
                    hi: max_pop(self.y + self.delta_window).unwrap_or(0),
                };
                if self.y + self.delta_window < 0.0 {
                    w[l] = PopWindow { lo: 1, hi: 0 };
                }
            }
            BarrierMode::Lower | BarrierMode::TwoSided => {
                if l >= 1 + self.r {
                    for (i, wi) in w.iter_mut().enumerate().take(l - self.r).skip(self.r) {
                        let lo = min_pop(self.lower_curve(i, 1.0));
                        *wi = match max_pop(self.upper_curve(i)) {
                            Some(hi) => PopWindow { lo, hi },
                            None => PopWindow { lo: 1, hi: 0 },
                        };
                    }
                }
                if mode == BarrierMode::Lower {
                    w[l - 1] = w[l - 1].meet(PopWindow { lo: 0, hi: 0 });
                }
            }
        }
        w
    }
}

/// Evaluates the event along one simulated path, stopping at the first
/// violated window.
fn path_hits<R: RngCore + ?Sized>(start: u64, windows: &[PopWindow], last: usize, rng: &mut R) -> bool {
    if !windows[0].admits(start) {
        return false;
    }
    let mut t = start;
    for w in &windows[1..=last] {
        t = gw_step(t, rng);
        if !w.admits(t) {
            return false;
        }
    }
    true
}

fn last_constrained(windows: &[PopWindow]) -> usize {
    windows
        .iter()
        .rposition(|w| *w != PopWindow::FREE)
        .unwrap_or(0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierEstimate {
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl BarrierEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let (ci_lo, ci_hi) = wilson(hits, trials, 0.95);
        BarrierEstimate {
            trials,
            hits,
            p_hat: hits as f64 / trials as f64,
            ci_lo,
            ci_hi,
        }
    }
}

/// Monte Carlo probability of the barrier event with a 95% Wilson interval.
/// Trial `t` uses stream `(seed, t)`.
pub fn barrier_event_mc(
    spec: &BarrierSpec,
    mode: BarrierMode,
    trials: u64,
    seed: u64,
) -> Result<BarrierEstimate, GwError> {
    if trials == 0 {
        return Err(GwError::ZeroTrials);
    }
    let start = spec.start()?;
    let windows = spec.windows(mode);
    let last = last_constrained(&windows);
    let hits: u64 = par::map_trials(trials, |t| {
        let mut rng = TrialStream::new(seed, t);
        path_hits(start, &windows, last, &mut rng) as u64
    })
    .into_iter()
    .sum();
    Ok(BarrierEstimate::from_counts(hits, trials))
}

/// Exact probability of the barrier event by propagating the population law
/// through the windows, with populations truncated at `cap`. Returns the
/// probability and the mass lost to truncation.
pub fn barrier_event_exact(
    spec: &BarrierSpec,
    mode: BarrierMode,
    cap: usize,
) -> Result<(f64, f64), GwError> {
    let start = spec.start()? as usize;
    if start > cap {
        return Err(GwError::Precondition("start exceeds cap".into()));
    }
    let windows = spec.windows(mode);
    let last = last_constrained(&windows);
    let mut dist = vec![0.0; cap + 1];
    if windows[0].admits(start as u64) {
        dist[start] = 1.0;
    }
    let mut lost = 0.0;
    for w in &windows[1..=last] {
        let mut next = vec![0.0; cap + 1];
        for (t, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut row_mass = 0.0;
            // q_s = u * 2^(e - t): 2^-t alone underflows once t passes ~1000
            let mut u = 1.0f64;
            let mut e = 0i32;
            let mut f = 2f64.powi(-(t as i32));
            for (s, slot) in next.iter_mut().enumerate() {
                if s > 0 {
                    u *= (t + s - 1) as f64 / (2 * s) as f64;
                    if u > 1e150 {
                        u *= 2f64.powi(-498);
                        e += 498;
                        f = 2f64.powi(e - t as i32);
                    }
                }
                let q = u * f;
                if s > 2 * t + 10 && q < 1e-20 {
                    // geometric tail beyond here is below 4q
                    break;
                }
                row_mass += q;
                if w.admits(s as u64) {
                    *slot += p * q;
                }
            }
            lost += p * (1.0 - row_mass).max(0.0);
        }
        dist = next;
    }
    Ok((dist.iter().sum(), lost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::two_sample_chi2;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn stream(t: u64) -> TrialStream {
        TrialStream::new(0xC0FFEE, t)
    }

    #[test]
    fn empty_population_stays_empty() {
        let mut rng = stream(0);
        for _ in 0..100 {
            assert_eq!(gw_step(0, &mut rng), 0);
        }
    }

    #[test]
    fn one_step_from_one_is_geometric() {
        let mut rng = stream(1);
        let n = 400_000u64;
        let mut counts = [0u64; 8];
        for _ in 0..n {
            let j = gw_step(1, &mut rng).min(7) as usize;
            counts[j] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            let p = if j < 7 { 0.5f64.powi(j as i32 + 1) } else { 0.5f64.powi(7) };
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((c as f64 - n as f64 * p).abs() < 4.0 * sd, "bin {j}");
        }
        assert_relative_eq!(nb_pmf(2, 1), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn mean_and_variance_are_critical() {
        for m in [1u64, 10, 100] {
            let mut rng = stream(m);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| gw_step(m, &mut rng) as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (2.0 * m as f64 / n as f64).sqrt();
            assert!((mean - m as f64).abs() < 3.0 * se, "m={m} mean={mean}");
            // variance of the sample variance for NB(m,1/2) is about (2 * (2m)^2 + 6m*...)/n; use a loose 5% band
            assert!((var / (2.0 * m as f64) - 1.0).abs() < 0.05, "m={m} var={var}");
        }
    }

    #[test]
    fn extinction_formula_examples() {
        assert_eq!(extinct_by(1, 1), 0.5);
        assert_eq!(extinct_by(2, 1), 0.25);
        let mut hits = 0u64;
        let n = 200_000u64;
        for t in 0..n {
            let mut rng = stream(10_000 + t);
            let path = GWTrajectory::simulate(5, 3, &mut rng);
            hits += (path.generations[3] == 0) as u64;
        }
        let p = extinct_by(5, 3);
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * sd);
    }

    #[test]
    fn exhaustive_convolution_matches_closed_forms() {
        let exact = ExactGw::new(400);
        for m in 0..=6usize {
            for k in 1..=5usize {
                let (law, lost) = exact.law(m, k);
                // lost mass is computed as 1 - sum, so it carries rounding noise
                assert!(lost < 1e-13, "lost {lost}");
                assert!((law[0] - extinct_by(m as u64, k as u64)).abs() < 1e-12);
            }
            for j in 0..60usize {
                assert!((exact.step_law(m)[j] - nb_pmf(m as u64, j as u64)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn envelope_dominates_exact_law() {
        let exact = ExactGw::new(400);
        for m in 1..=8usize {
            assert_eq!(sub_gaussian_envelope(m as f64, m as f64, 3), 1.0);
            for i in 0..=4usize {
                let (law, _) = exact.law(m, i);
                for (mp, &p) in law.iter().enumerate().take(41) {
                    assert!(sub_gaussian_envelope(m as f64, mp as f64, i as u64) >= p - 1e-15);
                }
            }
        }
    }

    #[test]
    fn walk_joint_law_equals_gw_joint_law() {
        let exact = ExactGw::new(200);
        for m in 1..=2u64 {
            for len in 2..=3usize {
                let (law, lost) = srw_traversal_joint_exact(len, m, 100);
                assert!(lost < 1e-14, "lost {lost}");
                for (path, &p) in &law {
                    let gw = exact.path_prob(m as usize, path);
                    assert!((p - gw).abs() < 1e-12, "{path:?}: {p} vs {gw}");
                    assert!((gw - gw_path_prob(m, path)).abs() < 1e-14);
                }
                let total: f64 = law.values().sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn walk_counts_basic_shape() {
        let mut rng = stream(5);
        for _ in 0..1000 {
            let c = srw_traversal_counts(4, 3, &mut rng);
            assert_eq!(c[0], 3);
            assert_eq!(c[4], 0);
        }
    }

    #[test]
    fn walk_and_gw_samples_agree() {
        let n = 100_000u64;
        let (len, m) = (10usize, 5u64);
        let key = |gens: &[u64]| -> usize {
            let ext = gens[..len].iter().position(|&t| t == 0).unwrap_or(len);
            (gens[1].min(12) as usize) * (len + 1) + ext
        };
        let bins = 13 * (len + 1);
        let mut a = vec![0u64; bins];
        let mut b = vec![0u64; bins];
        for t in 0..n {
            let mut r1 = TrialStream::new(1, t);
            a[key(&srw_traversal_counts(len, m, &mut r1))] += 1;
            let mut r2 = TrialStream::new(2, t);
            b[key(&GWTrajectory::simulate(m, len, &mut r2).generations)] += 1;
        }
        let res = two_sample_chi2(&a, &b, 20);
        assert!(res.p_value > 0.001, "{res:?}");
    }

    #[test]
    fn conditioned_paths_die_on_time() {
        let mut rng = stream(77);
        for _ in 0..200 {
            let p = GWTrajectory::simulate_extinct_by(30, 6, &mut rng);
            assert_eq!(p.generations[6], 0);
        }
        // the conditioned law matches P[T_1 = j | T_3 = 0] from the exact kernel
        let exact = ExactGw::new(200);
        let m = 4usize;
        let norm = extinct_by(m as u64, 3);
        let n = 200_000u64;
        let mut counts = [0u64; 4];
        for t in 0..n {
            let mut rng = stream(1_000_000 + t);
            let p = GWTrajectory::simulate_extinct_by(m as u64, 3, &mut rng);
            if p.generations[1] < 4 {
                counts[p.generations[1] as usize] += 1;
            }
        }
        for (j, &c) in counts.iter().enumerate() {
            let p = exact.step_law(m)[j] * extinct_by(j as u64, 2) / norm;
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 4.0 * sd, "j={j}");
        }
    }

    fn upper_spec(c: f64) -> BarrierSpec {
        BarrierSpec {
            len: 12,
            a: 4.0,
            b: 4.0,
            x: 4.0,
            y: 4.0,
            c,
            c_tilde: 0.0,
            epsilon: 0.1,
            delta_window: 1.0,
            r: 0,
            mu: 0.5,
            eta: 1.5,
        }
    }

    #[test]
    fn vacuous_barrier_is_plain_window() {
        let spec = upper_spec(f64::INFINITY);
        spec.validate(BarrierMode::Upper).unwrap();
        let est = barrier_event_mc(&spec, BarrierMode::Upper, 200_000, 3).unwrap();
        let exact = ExactGw::new(600);
        let (law, lost) = exact.law(8, 12);
        assert!(lost < 1e-12);
        let window: f64 = law[8..=12].iter().sum();
        let (p, _) = barrier_event_exact(&spec, BarrierMode::Upper, 600).unwrap();
        assert!((p - window).abs() < 1e-12);
        let sd = (window * (1.0 - window) / est.trials as f64).sqrt();
        assert!((est.p_hat - window).abs() < 3.0 * sd);
    }

    #[test]
    fn mc_agrees_with_exact_barrier() {
        let spec = upper_spec(1.0);
        let est = barrier_event_mc(&spec, BarrierMode::Upper, 200_000, 4).unwrap();
        let (p, lost) = barrier_event_exact(&spec, BarrierMode::Upper, 600).unwrap();
        assert!(lost < 1e-12);
        let sd = (p * (1.0 - p) / est.trials as f64).sqrt();
        assert!((est.p_hat - p).abs() < 3.0 * sd, "{} vs {p}", est.p_hat);
    }

    #[test]
    fn exact_barrier_handles_large_populations() {
        // x^2/2 = 2000 is far past where 2^-t underflows
        let mut spec = upper_spec(1.0);
        spec.len = 2;
        spec.x = (4000.0f64).sqrt();
        spec.y = spec.x;
        spec.a = 0.0;
        spec.b = 0.0;
        spec.delta_window = 1e6;
        spec.c = f64::INFINITY;
        let (p, lost) = barrier_event_exact(&spec, BarrierMode::Upper, 8000).unwrap();
        assert!(lost < 1e-12, "lost {lost}");
        // only T_2 below y is excluded
        assert!(p > 0.4 && p < 0.6, "{p}");
    }

    #[test]
    fn raising_lower_curve_never_adds_hits() {
        let mut spec = upper_spec(1.0);
        let base = barrier_event_mc(&spec, BarrierMode::Upper, 20_000, 9).unwrap();
        spec.a = 3.0;
        spec.b = 3.0;
        let lower = barrier_event_mc(&spec, BarrierMode::Upper, 20_000, 9).unwrap();
        assert!(lower.hits >= base.hits);
    }

    #[test]
    fn zero_trials_and_bad_specs_error() {
        let spec = upper_spec(1.0);
        assert_eq!(
            barrier_event_mc(&spec, BarrierMode::Upper, 0, 0),
            Err(GwError::ZeroTrials)
        );
        let mut bad = spec.clone();
        bad.x = 3.0;
        assert!(bad.start().is_err());
        let mut bad = spec;
        bad.b = 5.0;
        assert!(bad.validate(BarrierMode::Upper).is_err());
    }

    #[test]
    fn lower_windows_encode_extinction() {
        let l = 16usize;
        let x = (2.0f64 * 22.0).sqrt();
        let spec = BarrierSpec {
            len: l,
            a: x,
            b: 0.0,
            x,
            y: 0.0,
            c: 1.2,
            c_tilde: 3.0,
            epsilon: 0.1,
            delta_window: 1.0,
            r: 2,
            mu: 0.41,
            eta: 1.5,
        };
        spec.validate(BarrierMode::Lower).unwrap();
        let w = spec.windows(BarrierMode::Lower);
        assert_eq!(w[l - 1], PopWindow { lo: 0, hi: 0 });
        assert_eq!(w[1], PopWindow::FREE);
        let (p, lost) = barrier_event_exact(&spec, BarrierMode::Lower, 800).unwrap();
        assert!(lost < 1e-12);
        let est = barrier_event_mc(&spec, BarrierMode::Lower, 400_000, 5).unwrap();
        assert!(p > 0.0);
        let sd = (p * (1.0 - p) / est.trials as f64).sqrt();
        assert!((est.p_hat - p).abs() < 3.0 * sd, "{est:?} exact {p}");
    }

    proptest! {
        #[test]
        fn extinction_monotone(m in 0u64..50, k in 1u64..50) {
            prop_assert!(extinct_by(m + 1, k) <= extinct_by(m, k));
            prop_assert!(extinct_by(m, k + 1) >= extinct_by(m, k));
        }

        #[test]
        fn trajectories_absorb_at_zero(m in 0u64..20, seed in any::<u64>()) {
            let mut rng = TrialStream::new(seed, 0);
            let p = GWTrajectory::simulate(m, 30, &mut rng);
            prop_assert_eq!(p.generations[0], m);
            for w in p.generations.windows(2) {
                if w[0] == 0 {
                    prop_assert_eq!(w[1], 0);
                }
            }
        }
    }
}
