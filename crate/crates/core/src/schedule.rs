//! Parameter arithmetic: the scale family, the control curves and the
//! circle-to-circle probability table with its error ratios.
//!
//! Everything here is deterministic double-precision arithmetic. Integer
//! outputs are produced only at the floor/ceiling points of the formulas,
//! after snapping values within `1e-9` of an integer onto it so that results
//! do not depend on the last bit of a logarithm.

use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("n = {0} is too small (need n >= 16 so that log log n > 0)")]
    SideTooSmall(u32),
    #[error("depth L = {0} is below 1")]
    DepthTooSmall(i64),
    #[error("ratio ell = {0} must exceed 1")]
    RatioTooSmall(f64),
    #[error("parameter {name} = {value} outside {range}")]
    ParamRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("argument {arg} outside the domain of {curve}")]
    OutOfDomain { curve: &'static str, arg: f64 },
    #[error("index triple ({0}, {1}, {2}) violates i1 < i2 < i3 <= L")]
    BadTriple(usize, usize, usize),
    #[error("radii must be strictly decreasing and end at 1")]
    BadRadii,
    #[error("bracket is undefined: {0}")]
    Bracket(&'static str),
}

/// Model parameters. `c1`, `c2`, `kappa_*` and `c_star` are unknown constants
/// in the theory; the defaults are for plotting and bracketing only.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    pub n: u32,
    pub delta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub c_star: f64,
    pub kappa_plus: f64,
    pub kappa_minus: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ParamSet {
    pub fn with_n(n: u32) -> Self {
        ParamSet {
            n,
            delta: 0.05,
            gamma: 0.96,
            alpha: 0.2,
            beta: 0.35,
            c_star: 2.0,
            kappa_plus: 2.0,
            kappa_minus: 2.0,
            c1: 1.0,
            c2: 1.0,
        }
    }

    /// Range checks on the individual fields (not the joint constraints).
    pub fn check_ranges(&self) -> Result<(), ScheduleError> {
        let open01 = |name, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(ScheduleError::ParamRange {
                    name,
                    value: v,
                    range: "(0, 1)",
                })
            }
        };
        let positive = |name, v: f64| {
            if v > 0.0 {
                Ok(())
            } else {
                Err(ScheduleError::ParamRange {
                    name,
                    value: v,
                    range: "(0, inf)",
                })
            }
        };
        let nonneg = |name, v: f64| {
            if v >= 0.0 {
                Ok(())
            } else {
                Err(ScheduleError::ParamRange {
                    name,
                    value: v,
                    range: "[0, inf)",
                })
            }
        };
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return Err(ScheduleError::ParamRange {
                name: "delta",
                value: self.delta,
                range: "(0, 1/2)",
            });
        }
        open01("gamma", self.gamma)?;
        open01("alpha", self.alpha)?;
        open01("beta", self.beta)?;
        positive("c_star", self.c_star)?;
        positive("kappa_plus", self.kappa_plus)?;
        positive("kappa_minus", self.kappa_minus)?;
        nonneg("c1", self.c1)?;
        nonneg("c2", self.c2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintCheck {
    pub label: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: [ConstraintCheck; 3],
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn check(label: &'static str, lhs: f64, rhs: f64) -> ConstraintCheck {
    ConstraintCheck {
        label,
        lhs,
        rhs,
        slack: lhs - rhs,
        pass: lhs > rhs,
    }
}

/// The three joint constraints on `(delta, alpha, beta, gamma)`, each with
/// its slack `lhs - rhs`.
pub fn validate_params(p: &ParamSet) -> ValidationReport {
    ValidationReport {
        checks: [
            check(
                "2 gamma - 2 beta - alpha > 1",
                2.0 * p.gamma - 2.0 * p.beta - p.alpha,
                1.0,
            ),
            check("(1 - 2 delta) beta > alpha", (1.0 - 2.0 * p.delta) * p.beta, p.alpha),
            check(
                "alpha + beta > 1/2 + delta - alpha delta",
                p.alpha + p.beta,
                0.5 + p.delta - p.alpha * p.delta,
            ),
        ],
    }
}

pub(crate) fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

fn ceil_int(v: f64) -> f64 {
    snap(v).ceil()
}

fn floor_int(v: f64) -> f64 {
    snap(v).floor()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedScales {
    pub n: u32,
    pub log_n: f64,
    pub loglog_n: f64,
    pub ell: f64,
    pub w: f64,
    pub s: f64,
    pub depth: usize,
    pub m_plus: u64,
    pub m_minus: u64,
    /// `r_0 > r_1 > ... > r_L = 1` with `r_k = ell^(L - k)`.
    pub radii: Vec<f64>,
    /// True when `(L, ell)` were given directly instead of derived from `n`.
    pub toy: bool,
}

impl DerivedScales {
    pub fn from_params(p: &ParamSet) -> Result<Self, ScheduleError> {
        let (log_n, loglog_n) = logs(p.n)?;
        let ell = loglog_n.powf(p.alpha).exp();
        let w = loglog_n.powf(p.beta);
        let raw = floor_int(log_n / ell.ln() - p.c_star * w);
        if raw < 1.0 {
            return Err(ScheduleError::DepthTooSmall(raw as i64));
        }
        Ok(Self::assemble(p, log_n, loglog_n, ell, raw as usize, false))
    }

    /// A directly specified depth and ratio; the counts `m_n^±` still follow
    /// their formulas with this `ell`.
    pub fn toy(p: &ParamSet, depth: usize, ell: f64) -> Result<Self, ScheduleError> {
        let (log_n, loglog_n) = logs(p.n)?;
        if depth < 1 {
            return Err(ScheduleError::DepthTooSmall(depth as i64));
        }
        if !(ell > 1.0) {
            return Err(ScheduleError::RatioTooSmall(ell));
        }
        Ok(Self::assemble(p, log_n, loglog_n, ell, depth, true))
    }

    fn assemble(
        p: &ParamSet,
        log_n: f64,
        loglog_n: f64,
        ell: f64,
        depth: usize,
        toy: bool,
    ) -> Self {
        let w = loglog_n.powf(p.beta);
        let s = loglog_n.powf(p.gamma);
        let base = 2.0 * log_n * log_n / ell.ln();
        let shift = loglog_n / (2.0 * log_n);
        let m_plus = floor_int((1.0 - shift + s / log_n) * base).max(0.0) as u64;
        let m_minus = ceil_int((1.0 - shift - s / log_n) * base).max(0.0) as u64;
        let radii = (0..=depth)
            .map(|k| ell.powi((depth - k) as i32))
            .collect();
        DerivedScales {
            n: p.n,
            log_n,
            loglog_n,
            ell,
            w,
            s,
            depth,
            m_plus,
            m_minus,
            radii,
            toy,
        }
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.radii[k]
    }
}

fn logs(n: u32) -> Result<(f64, f64), ScheduleError> {
    if n < 16 {
        return Err(ScheduleError::SideTooSmall(n));
    }
    let log_n = (n as f64).ln();
    Ok((log_n, log_n.ln()))
}

/// Parameters together with the scales derived from them.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub params: ParamSet,
    pub scales: DerivedScales,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BarrierCurve {
    APlus,
    AMinus,
    BPlus,
    BMinus,
    /// `f_n(s) = min(s^(1/2-delta), (L-1-s)^(1/2-delta))`
    FBump,
    /// `g_n(s) = min(s^(1/2+delta), (L-1-s)^(1/2+delta))`
    GBump,
    /// `f_{a,b}(i; L) = a + (b - a) i / L`
    Linear { a: f64, b: f64, len: f64 },
}

impl BarrierCurve {
    pub fn name(&self) -> &'static str {
        match self {
            BarrierCurve::APlus => "a_plus",
            BarrierCurve::AMinus => "a_minus",
            BarrierCurve::BPlus => "b_plus",
            BarrierCurve::BMinus => "b_minus",
            BarrierCurve::FBump => "f_bump",
            BarrierCurve::GBump => "g_bump",
            BarrierCurve::Linear { .. } => "linear",
        }
    }
}

/// `i_L = min(i, L - i)`.
pub fn i_l(i: f64, len: f64) -> f64 {
    i.min(len - i)
}

/// `f_{a,b}(i; L)`.
pub fn linear_barrier(a: f64, b: f64, i: f64, len: f64) -> f64 {
    a + (b - a) * i / len
}

impl Schedule {
    pub fn strict(params: ParamSet) -> Result<Self, ScheduleError> {
        params.check_ranges()?;
        let scales = DerivedScales::from_params(&params)?;
        Ok(Schedule { params, scales })
    }

    pub fn toy(params: ParamSet, depth: usize, ell: f64) -> Result<Self, ScheduleError> {
        params.check_ranges()?;
        let scales = DerivedScales::toy(&params, depth, ell)?;
        Ok(Schedule { params, scales })
    }

    pub fn depth(&self) -> usize {
        self.scales.depth
    }

    /// `d_n(s) = ceil(s log log n / log ell)`.
    pub fn d_n(&self, s: f64) -> Result<u64, ScheduleError> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(ScheduleError::OutOfDomain { curve: "d_n", arg: s });
        }
        Ok(ceil_int(s * self.scales.loglog_n / self.scales.ell.ln()) as u64)
    }

    fn bump(&self, s: f64, exponent: f64) -> f64 {
        let len = self.scales.depth as f64;
        s.powf(exponent).min((len - 1.0 - s).powf(exponent))
    }

    /// Evaluates `curve` at `arg`, including the prescribed rounding.
    pub fn eval(&self, curve: &BarrierCurve, arg: f64) -> Result<f64, ScheduleError> {
        let len = self.scales.depth as f64;
        let in_range = |lo: f64, hi: f64| arg.is_finite() && arg >= lo && arg <= hi;
        let out = || ScheduleError::OutOfDomain {
            curve: curve.name(),
            arg,
        };
        let sc = &self.scales;
        let p = &self.params;
        match *curve {
            BarrierCurve::APlus => {
                if !in_range(0.0, len) {
                    return Err(out());
                }
                let centre = (sc.m_plus as f64).sqrt() * (1.0 - arg / len);
                let bump = p.kappa_plus
                    * ((arg + 1.0) * (len - arg) / (len + 1.0)).sqrt()
                    * sc.loglog_n.sqrt();
                Ok(ceil_int((centre + bump).powi(2)))
            }
            BarrierCurve::AMinus => {
                if !in_range(0.0, len) {
                    return Err(out());
                }
                let centre = (sc.m_plus as f64).sqrt() * (1.0 - arg / len);
                let v = (centre - p.kappa_minus * sc.loglog_n / sc.ell.ln().sqrt()).max(1.0);
                Ok(floor_int(v * v))
            }
            BarrierCurve::FBump | BarrierCurve::GBump => {
                if !in_range(0.0, len - 1.0) {
                    return Err(out());
                }
                let e = if matches!(curve, BarrierCurve::FBump) {
                    0.5 - p.delta
                } else {
                    0.5 + p.delta
                };
                Ok(self.bump(arg, e))
            }
            BarrierCurve::BMinus | BarrierCurve::BPlus => {
                if !in_range(0.0, len - 1.0) {
                    return Err(out());
                }
                let centre = (1.0 - arg / len) * (sc.m_minus as f64).sqrt();
                if matches!(curve, BarrierCurve::BMinus) {
                    Ok(ceil_int((centre + self.bump(arg, 0.5 - p.delta)).powi(2)))
                } else {
                    Ok(floor_int((centre + self.bump(arg, 0.5 + p.delta)).powi(2)))
                }
            }
            BarrierCurve::Linear { a, b, len } => {
                if !(len > 0.0) || !in_range(0.0, len) {
                    return Err(out());
                }
                Ok(linear_barrier(a, b, arg, len))
            }
        }
    }

    /// Unrounded `{(1 - s/L) sqrt(m^-) + bump}^2` for the two corridor edges.
    pub fn corridor_real(&self, s: f64) -> (f64, f64) {
        let len = self.scales.depth as f64;
        let centre = (1.0 - s / len) * (self.scales.m_minus as f64).sqrt();
        (
            (centre + self.bump(s, 0.5 - self.params.delta)).powi(2),
            (centre + self.bump(s, 0.5 + self.params.delta)).powi(2),
        )
    }
}

/// One row of the probability table: the `±` pair and the matching `Δ` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbEntry {
    pub i1: usize,
    pub i2: usize,
    pub i3: usize,
    pub p_minus: f64,
    pub p_plus: f64,
    pub delta_minus: f64,
    pub delta_plus: f64,
}

/// Circle-to-circle probabilities for a decreasing radii list ending at 1.
///
/// `inward(i1, i2, i3)` is the probability, started from circle `i2`, of
/// reaching the inner circle `i3` before the outer circle `i1`;
/// `outward(i1, i2, i3)` is its complement with the signs swapped.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbTable {
    radii: Vec<f64>,
    c1: f64,
    c2: f64,
}

impl ProbTable {
    pub fn new(radii: &[f64], c1: f64, c2: f64) -> Result<Self, ScheduleError> {
        if radii.len() < 2
            || radii.windows(2).any(|w| !(w[0] > w[1]))
            || *radii.last().unwrap() != 1.0
        {
            return Err(ScheduleError::BadRadii);
        }
        Ok(ProbTable {
            radii: radii.to_vec(),
            c1,
            c2,
        })
    }

    pub fn depth(&self) -> usize {
        self.radii.len() - 1
    }

    fn check(&self, i1: usize, i2: usize, i3: usize) -> Result<(), ScheduleError> {
        if i1 < i2 && i2 < i3 && i3 <= self.depth() {
            Ok(())
        } else {
            Err(ScheduleError::BadTriple(i1, i2, i3))
        }
    }

    fn inward_pm(&self, i1: usize, i2: usize, i3: usize) -> (f64, f64) {
        let r = &self.radii;
        let num = (r[i1] / r[i2]).ln();
        if i3 == self.depth() {
            let err = self.c2 * (1.0 / r[i2] + 1.0 / r[i1].ln());
            let den = r[i1].ln();
            ((num - err) / den, (num + err) / den)
        } else {
            let err = self.c1 / r[i3];
            let den = (r[i1] / r[i3]).ln();
            ((num - err) / den, (num + err) / den)
        }
    }

    pub fn inward(&self, i1: usize, i2: usize, i3: usize) -> Result<ProbEntry, ScheduleError> {
        self.check(i1, i2, i3)?;
        let (p_minus, p_plus) = self.inward_pm(i1, i2, i3);
        let base = (i2 - i1) as f64 / (i3 - i1) as f64;
        Ok(ProbEntry {
            i1,
            i2,
            i3,
            p_minus,
            p_plus,
            delta_minus: p_minus / base,
            delta_plus: p_plus / base,
        })
    }

    pub fn outward(&self, i1: usize, i2: usize, i3: usize) -> Result<ProbEntry, ScheduleError> {
        self.check(i1, i2, i3)?;
        let (in_minus, in_plus) = self.inward_pm(i1, i2, i3);
        let (p_minus, p_plus) = (1.0 - in_plus, 1.0 - in_minus);
        let base = (i3 - i2) as f64 / (i3 - i1) as f64;
        Ok(ProbEntry {
            i1,
            i2,
            i3,
            p_minus,
            p_plus,
            delta_minus: p_minus / base,
            delta_plus: p_plus / base,
        })
    }

    /// All rows: inward rows as `(i1, i2, i3)`, then outward rows written as
    /// `(i3, i2, i1)` so that the first column is always the far circle.
    pub fn rows(&self) -> Vec<ProbEntry> {
        let l = self.depth();
        let mut inward = Vec::new();
        let mut outward = Vec::new();
        for i1 in 0..=l {
            for i2 in i1 + 1..=l {
                for i3 in i2 + 1..=l {
                    inward.push(self.inward(i1, i2, i3).unwrap());
                    let mut o = self.outward(i1, i2, i3).unwrap();
                    std::mem::swap(&mut o.i1, &mut o.i3);
                    outward.push(o);
                }
            }
        }
        inward.extend(outward);
        inward
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["i1", "i2", "i3", "p_minus", "p_plus", "delta_minus", "delta_plus"])?;
        for e in self.rows() {
            w.write_record([
                e.i1.to_string(),
                e.i2.to_string(),
                e.i3.to_string(),
                format!("{:.12}", e.p_minus),
                format!("{:.12}", e.p_plus),
                format!("{:.12}", e.delta_minus),
                format!("{:.12}", e.delta_plus),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// The multiplicative bracket `[Δ_1^- Δ_*^-, Δ_1^+ Δ_*^+]` for the event
    /// `{T_i = m_i, k <= i <= L - kt - 1} ∩ {T_{L-1} = 0}` driven by `m`
    /// top-level excursions. `counts[i]` holds `m_i` for `k <= i <= L - kt - 1`
    /// (entries outside that range are ignored). Lower factors below zero are
    /// clamped to zero, which only makes the lower end vacuous.
    pub fn transfer_bracket(
        &self,
        k: usize,
        kt: usize,
        m: u64,
        counts: &[u64],
    ) -> Result<(f64, f64), ScheduleError> {
        let l = self.depth();
        if k < 1 || k + kt + 1 > l {
            return Err(ScheduleError::Bracket("need 1 <= k <= L - kt - 1"));
        }
        let top = l - kt - 1;
        if counts.len() <= top {
            return Err(ScheduleError::Bracket("counts shorter than L - kt"));
        }
        let pair = |out: ProbEntry, inw: ProbEntry| -> (f64, f64) {
            (
                out.delta_minus.min(inw.delta_minus).max(0.0),
                out.delta_plus.max(inw.delta_plus),
            )
        };
        let mut lo = 1.0f64;
        let mut hi = 1.0f64;
        let mut apply = |(a, b): (f64, f64), e: u64| {
            lo *= a.powf(e as f64);
            hi *= b.powf(e as f64);
        };
        apply(pair(self.outward(0, 1, k + 1)?, self.inward(0, 1, k + 1)?), m);
        apply(pair(self.outward(0, k, k + 1)?, self.inward(0, k, k + 1)?), counts[k]);
        for i in k + 1..=top {
            let f = pair(self.outward(i - 1, i, i + 1)?, self.inward(i - 1, i, i + 1)?);
            apply(f, counts[i - 1] + counts[i]);
        }
        let last = counts[top];
        if kt == 0 {
            if last != 0 {
                return Err(ScheduleError::Bracket("m_{L-1} must be 0 when kt = 0"));
            }
        } else {
            let e = self.outward(l - kt - 1, l - kt, l)?;
            lo *= e.delta_minus.max(0.0).powf(last as f64);
            hi *= e.delta_plus.powf(last as f64);
        }
        Ok((lo, hi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(delta: f64, alpha: f64, beta: f64, gamma: f64) -> ParamSet {
        ParamSet {
            delta,
            alpha,
            beta,
            gamma,
            ..ParamSet::with_n(1 << 20)
        }
    }

    #[test]
    fn default_constraints_pass_with_expected_slack() {
        let r = validate_params(&params(0.05, 0.2, 0.35, 0.96));
        assert!(r.all_pass());
        assert_relative_eq!(r.checks[0].lhs, 1.02, epsilon = 1e-12);
        assert_relative_eq!(r.checks[1].lhs, 0.315, epsilon = 1e-12);
        assert_relative_eq!(r.checks[2].lhs, 0.55, epsilon = 1e-12);
        assert_relative_eq!(r.checks[2].rhs, 0.54, epsilon = 1e-12);
    }

    #[test]
    fn third_constraint_fails() {
        let r = validate_params(&params(0.1, 0.05, 0.3, 0.95));
        assert!(r.checks[0].pass);
        assert!(!r.checks[2].pass);
        assert_relative_eq!(r.checks[2].lhs, 0.35, epsilon = 1e-12);
        assert_relative_eq!(r.checks[2].rhs, 0.595, epsilon = 1e-12);
    }

    #[test]
    fn first_constraint_fails_for_large_beta() {
        for gamma in [0.5, 0.9, 0.999] {
            let r = validate_params(&params(0.05, 0.1, 0.5, gamma));
            assert!(!r.checks[0].pass);
        }
    }

    #[test]
    fn strict_scales_match_direct_arithmetic() {
        let p = ParamSet::with_n(1_000_000);
        let s = Schedule::strict(p.clone()).unwrap();
        let ln = (1e6f64).ln();
        let ll = ln.ln();
        let ell = ll.powf(0.2).exp();
        assert_relative_eq!(s.scales.ell, ell, max_relative = 1e-14);
        let depth = (ln / ell.ln() - 2.0 * ll.powf(0.35)).floor() as usize;
        assert_eq!(s.depth(), depth);
        assert_eq!(s.scales.radii[depth], 1.0);
        for k in 1..=depth {
            assert_relative_eq!(
                s.scales.radii[k - 1] / s.scales.radii[k],
                ell,
                max_relative = 1e-12
            );
        }
        let base = 2.0 * ln * ln / ell.ln();
        let diff = s.scales.m_plus as f64 - s.scales.m_minus as f64;
        let ident = 4.0 * ll.powf(0.96) * ln / ell.ln();
        assert!((diff - ident).abs() <= 2.0, "{diff} vs {ident}");
        assert_eq!(
            s.scales.m_plus,
            ((1.0 - ll / (2.0 * ln) + ll.powf(0.96) / ln) * base).floor() as u64
        );
    }

    #[test]
    fn small_or_shallow_inputs_error() {
        assert_eq!(
            Schedule::strict(ParamSet::with_n(15)).unwrap_err(),
            ScheduleError::SideTooSmall(15)
        );
        let mut p = ParamSet::with_n(64);
        p.c_star = 50.0;
        assert!(matches!(
            Schedule::strict(p).unwrap_err(),
            ScheduleError::DepthTooSmall(_)
        ));
    }

    #[test]
    fn toy_schedule_counts() {
        let s = Schedule::toy(ParamSet::with_n(64), 3, 3.0).unwrap();
        assert_eq!(s.scales.radii, vec![27.0, 9.0, 3.0, 1.0]);
        assert_eq!(s.scales.m_plus, 36);
        assert!(s.scales.m_minus <= s.scales.m_plus);
    }

    #[test]
    fn d_n_spot_value_and_integer_case() {
        let s = Schedule::toy(ParamSet::with_n(4096), 4, 4.0).unwrap();
        let ratio = s.scales.loglog_n / 4f64.ln();
        // s chosen so the ratio is exactly 3
        assert_eq!(s.d_n(3.0 / ratio).unwrap(), 3);
        assert_eq!(s.d_n(2.0).unwrap(), (2.0 * ratio).ceil() as u64);
        assert!(s.d_n(0.0).is_err());
    }

    #[test]
    fn curve_endpoints_and_clamp() {
        let s = Schedule::toy(ParamSet::with_n(64), 5, 2.0).unwrap();
        let lin = BarrierCurve::Linear {
            a: 3.0,
            b: -1.0,
            len: 7.0,
        };
        assert_eq!(s.eval(&lin, 0.0).unwrap(), 3.0);
        assert_eq!(s.eval(&lin, 7.0).unwrap(), -1.0);
        assert!(s.eval(&lin, 7.5).is_err());
        let len = s.depth() as f64;
        assert_eq!(s.eval(&BarrierCurve::FBump, len - 1.0).unwrap(), 0.0);
        assert_eq!(s.eval(&BarrierCurve::GBump, len - 1.0).unwrap(), 0.0);
        assert_eq!(s.eval(&BarrierCurve::FBump, 0.0).unwrap(), 0.0);
        assert_eq!(s.eval(&BarrierCurve::AMinus, len).unwrap(), 1.0);
        let mut big = s.clone();
        big.params.kappa_minus = 100.0;
        for i in 0..=s.depth() {
            assert_eq!(big.eval(&BarrierCurve::AMinus, i as f64).unwrap(), 1.0);
        }
        assert!(s.eval(&BarrierCurve::BPlus, len).is_err());
        assert!(s.eval(&BarrierCurve::APlus, -0.5).is_err());
    }

    #[test]
    fn bumps_are_minima_of_both_branches() {
        let s = Schedule::toy(ParamSet::with_n(256), 9, 2.0).unwrap();
        let d = s.params.delta;
        for k in 0..=16 {
            let x = k as f64 * 0.5;
            let f = s.eval(&BarrierCurve::FBump, x).unwrap();
            assert_eq!(f, x.powf(0.5 - d).min((8.0 - x).powf(0.5 - d)));
            let fm = s.eval(&BarrierCurve::FBump, 8.0 - x).unwrap();
            assert_relative_eq!(f, fm, epsilon = 1e-12);
        }
    }

    #[test]
    fn prob_table_zero_constants_is_exact() {
        let radii = [256.0, 64.0, 16.0, 4.0, 1.0];
        let t = ProbTable::new(&radii, 0.0, 0.0).unwrap();
        for e in t.rows() {
            assert_relative_eq!(e.p_minus, e.p_plus, epsilon = 1e-15);
            assert_relative_eq!(e.delta_minus, 1.0, epsilon = 1e-12);
            assert_relative_eq!(e.delta_plus, 1.0, epsilon = 1e-12);
        }
        let e = t.inward(0, 1, 3).unwrap();
        assert_relative_eq!(e.p_plus, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn prob_table_log_ratio_example() {
        let t = ProbTable::new(&[16.0, 8.0, 4.0, 1.0], 0.0, 1.0).unwrap();
        assert_relative_eq!(t.inward(0, 1, 2).unwrap().p_plus, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn prob_table_rejects_bad_input() {
        assert!(ProbTable::new(&[4.0, 4.0, 1.0], 1.0, 1.0).is_err());
        assert!(ProbTable::new(&[4.0, 2.0], 1.0, 1.0).is_err());
        let t = ProbTable::new(&[4.0, 2.0, 1.0], 1.0, 1.0).unwrap();
        assert!(t.inward(1, 1, 2).is_err());
        assert!(t.outward(0, 2, 1).is_err());
        assert!(t.inward(0, 1, 3).is_err());
    }

    #[test]
    fn csv_layout() {
        let t = ProbTable::new(&[9.0, 3.0, 1.0], 1.0, 1.0).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "i1,i2,i3,p_minus,p_plus,delta_minus,delta_plus");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("2,1,0,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn bracket_with_zero_constants_is_one() {
        let t = ProbTable::new(&[256.0, 64.0, 16.0, 4.0, 1.0], 0.0, 0.0).unwrap();
        let (lo, hi) = t.transfer_bracket(1, 0, 1, &[1, 1, 1, 0]).unwrap();
        assert_relative_eq!(lo, 1.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 1.0, epsilon = 1e-12);
        assert!(t.transfer_bracket(1, 0, 1, &[1, 1, 1, 2]).is_err());
        assert!(t.transfer_bracket(0, 0, 1, &[1, 1, 1, 0]).is_err());
    }

    #[test]
    fn deltas_approach_one_as_ratio_grows() {
        let mut prev = f64::INFINITY;
        for ell in [4.0f64, 8.0, 16.0, 32.0] {
            let radii: Vec<f64> = (0..=4).map(|k| ell.powi(4 - k)).collect();
            let t = ProbTable::new(&radii, 1.0, 1.0).unwrap();
            let worst = t
                .rows()
                .iter()
                .filter(|e| e.i1.max(e.i3) < 4)
                .map(|e| (e.delta_plus - 1.0).abs().max((e.delta_minus - 1.0).abs()))
                .fold(0.0, f64::max);
            assert!(worst < prev);
            prev = worst;
        }
    }

    proptest! {
        #[test]
        fn plus_dominates_minus_and_complements_sum(ell in 1.5f64..40.0, depth in 2usize..7, c1 in 0.0f64..3.0, c2 in 0.0f64..3.0) {
            let radii: Vec<f64> = (0..=depth).map(|k| ell.powi((depth - k) as i32)).collect();
            let t = ProbTable::new(&radii, c1, c2).unwrap();
            for i1 in 0..depth {
                for i2 in i1 + 1..depth {
                    for i3 in i2 + 1..=depth {
                        let a = t.inward(i1, i2, i3).unwrap();
                        let b = t.outward(i1, i2, i3).unwrap();
                        prop_assert!(a.p_plus >= a.p_minus);
                        prop_assert!(b.p_plus >= b.p_minus);
                        prop_assert!((a.p_plus + b.p_minus - 1.0).abs() < 1e-12);
                        prop_assert!((a.p_minus + b.p_plus - 1.0).abs() < 1e-12);
                    }
                }
            }
            prop_assert_eq!(t.rows(), t.rows());
        }

        #[test]
        fn a_plus_dominates_centre(n in 16u32..100_000, depth in 1usize..12, ell in 1.5f64..10.0, kp in 0.01f64..5.0) {
            let mut p = ParamSet::with_n(n);
            p.kappa_plus = kp;
            let s = Schedule::toy(p, depth, ell).unwrap();
            for i in 0..=depth {
                let centre = s.scales.m_plus as f64 * (1.0 - i as f64 / depth as f64).powi(2);
                prop_assert!(s.eval(&BarrierCurve::APlus, i as f64).unwrap() >= centre - 1e-9);
            }
        }

        #[test]
        fn corridor_is_ordered_on_window(n in 1000u32..10_000_000, depth in 4usize..14, ell in 1.5f64..6.0, delta in 0.01f64..0.45) {
            let mut p = ParamSet::with_n(n);
            p.delta = delta;
            let s = Schedule::toy(p, depth, ell).unwrap();
            let w = s.scales.w.max(1.0);
            let len = depth as f64;
            let mut i = w.ceil();
            while i <= len - 1.0 - w {
                let (lo, hi) = s.corridor_real(i);
                prop_assert!(lo <= hi + 1e-9);
                if hi - lo >= 1.0 {
                    prop_assert!(s.eval(&BarrierCurve::BMinus, i).unwrap() <= s.eval(&BarrierCurve::BPlus, i).unwrap());
                }
                i += 1.0;
            }
        }

        #[test]
        fn d_n_is_monotone(a in 0.01f64..50.0, b in 0.01f64..50.0) {
            let s = Schedule::toy(ParamSet::with_n(1 << 16), 5, 3.0).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(s.d_n(lo).unwrap() <= s.d_n(hi).unwrap());
        }
    }
}
