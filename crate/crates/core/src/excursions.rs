//! Stopping-time ladders between concentric circles and the traversal
//! counts built on them.
//!
//! All counting is streaming: a walk is advanced once and every level keeps
//! only an inside/outside phase bit, so memory is `O(L)` whatever the run
//! length. Circle membership is read from a per-plan table holding one bit
//! per circle for every torus cell.

use thiserror::Error;

use crate::lattice::{circle, LatticeError, StepSource, TorusPoint, WalkState};
use crate::schedule::{BarrierCurve, Schedule, ScheduleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExcursionError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("annulus needs 0 < r < R < n/2 with disjoint circles, got r = {inner}, R = {outer}")]
    DegenerateAnnulus { inner: f64, outer: f64 },
    #[error("invalid radii: {0}")]
    BadRadii(String),
    #[error("level {level} is not recorded (levels start at {first})")]
    UndefinedLevel { level: usize, first: usize },
    #[error("record does not cover levels {0}..={1}")]
    IncompleteRecord(usize, usize),
    #[error("m must be at least 1")]
    ZeroExcursions,
}

/// Centre with inner radius `r` and outer radius `R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnnulusSpec {
    pub center: TorusPoint,
    pub inner: f64,
    pub outer: f64,
}

impl AnnulusSpec {
    pub fn new(center: TorusPoint, inner: f64, outer: f64) -> Result<Self, ExcursionError> {
        let half = center.side() as f64 / 2.0;
        if !(inner > 0.0 && inner < outer && outer < half) {
            return Err(ExcursionError::DegenerateAnnulus { inner, outer });
        }
        Ok(AnnulusSpec {
            center,
            inner,
            outer,
        })
    }
}

/// Bit table: for each torus cell, which of a list of circles contain it.
#[derive(Clone, Debug)]
struct CircleTable {
    masks: Vec<u32>,
}

impl CircleTable {
    fn new(center: TorusPoint, radii: &[f64]) -> Result<Self, ExcursionError> {
        assert!(radii.len() <= 32);
        let n = center.side() as usize;
        let mut masks = vec![0u32; n * n];
        for (j, &r) in radii.iter().enumerate() {
            for p in circle(center, r)? {
                masks[p.index()] |= 1 << j;
            }
        }
        Ok(CircleTable { masks })
    }

    #[inline]
    fn at(&self, p: &TorusPoint) -> u32 {
        self.masks[p.index()]
    }

    fn overlap(&self, a: u32, b: u32) -> bool {
        self.masks.iter().any(|&m| m & a != 0 && m & b != 0)
    }
}

/// The `R_k < D_k` ladder of one annulus, as absolute step indices of the walk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExcursionClock {
    pub returns: Vec<u64>,
    pub departures: Vec<u64>,
}

/// Precomputed circles of an annulus, reusable across walks.
#[derive(Clone, Debug)]
pub struct AnnulusGeometry {
    spec: AnnulusSpec,
    table: CircleTable,
}

const INNER: u32 = 1;
const OUTER: u32 = 2;

impl AnnulusGeometry {
    pub fn new(spec: AnnulusSpec) -> Result<Self, ExcursionError> {
        let table = CircleTable::new(spec.center, &[spec.inner, spec.outer])?;
        if table.overlap(INNER, OUTER) {
            return Err(ExcursionError::DegenerateAnnulus {
                inner: spec.inner,
                outer: spec.outer,
            });
        }
        Ok(AnnulusGeometry { spec, table })
    }

    pub fn spec(&self) -> &AnnulusSpec {
        &self.spec
    }

    pub fn on_inner(&self, p: &TorusPoint) -> bool {
        self.table.at(p) & INNER != 0
    }

    pub fn on_outer(&self, p: &TorusPoint) -> bool {
        self.table.at(p) & OUTER != 0
    }

    /// Runs the walk until the `m`-th departure `D_m`. `cap` bounds the
    /// number of steps taken by this call.
    pub fn clock<S: StepSource>(
        &self,
        walk: &mut WalkState<S>,
        m: usize,
        cap: u64,
    ) -> Result<ExcursionClock, ExcursionError> {
        if m == 0 {
            return Err(ExcursionError::ZeroExcursions);
        }
        let t0 = walk.steps();
        let mut clock = ExcursionClock {
            returns: Vec::with_capacity(m),
            departures: Vec::with_capacity(m),
        };
        let mut seek_inner = true;
        loop {
            let bits = self.table.at(&walk.position());
            if seek_inner {
                if bits & INNER != 0 {
                    clock.returns.push(walk.steps());
                    seek_inner = false;
                }
            } else if bits & OUTER != 0 {
                clock.departures.push(walk.steps());
                if clock.departures.len() == m {
                    return Ok(clock);
                }
                seek_inner = true;
            }
            let taken = walk.steps() - t0;
            if taken >= cap {
                return Err(LatticeError::BudgetExceeded { cap, steps: taken }.into());
            }
            walk.step();
        }
    }
}

/// First `m` excursions of `walk` across `annulus`.
pub fn excursion_clock<S: StepSource>(
    walk: &mut WalkState<S>,
    annulus: &AnnulusSpec,
    m: usize,
    cap: u64,
) -> Result<ExcursionClock, ExcursionError> {
    AnnulusGeometry::new(*annulus)?.clock(walk, m, cap)
}

/// Traversal counts indexed by level, starting at `first_level`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraversalRecord {
    first_level: usize,
    counts: Vec<u64>,
}

impl TraversalRecord {
    pub fn new(first_level: usize, counts: Vec<u64>) -> Self {
        TraversalRecord {
            first_level,
            counts,
        }
    }

    pub fn first_level(&self) -> usize {
        self.first_level
    }

    /// One past the last recorded level.
    pub fn end_level(&self) -> usize {
        self.first_level + self.counts.len()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, level: usize) -> Result<u64, ExcursionError> {
        if level < self.first_level || level >= self.end_level() {
            return Err(ExcursionError::UndefinedLevel {
                level,
                first: self.first_level,
            });
        }
        Ok(self.counts[level - self.first_level])
    }
}

/// Result of one traversal run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraversalOutcome {
    pub record: TraversalRecord,
    /// Step index of `D_m` for the driving annulus.
    pub top_departure: u64,
    /// First visit to the centre strictly before `D_m`, if any.
    pub center_hit: Option<u64>,
}

/// Per-level `(R_k, D_k)` step indices collected by [`TraversalPlan::run_logged`];
/// an unfinished last traversal has `D_k = u64::MAX`.
pub type TraversalLog = Vec<Vec<(u64, u64)>>;

/// Circle layout for one traversal-count variant around a fixed centre.
#[derive(Clone, Debug)]
pub struct TraversalPlan {
    center: TorusPoint,
    table: CircleTable,
    top: (u32, u32),
    levels: Vec<(u32, u32)>,
    first_level: usize,
    arm: u32,
}

fn check_radii(center: TorusPoint, radii: &[f64]) -> Result<(), ExcursionError> {
    if radii.len() < 2 {
        return Err(ExcursionError::BadRadii("need at least two radii".into()));
    }
    if radii.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(ExcursionError::BadRadii("radii must strictly decrease".into()));
    }
    if *radii.last().unwrap() != 1.0 {
        return Err(ExcursionError::BadRadii("innermost radius must be 1".into()));
    }
    if !(radii[0] < center.side() as f64 / 2.0) {
        return Err(ExcursionError::BadRadii(format!(
            "r_0 = {} is not below n/2 = {}",
            radii[0],
            center.side() as f64 / 2.0
        )));
    }
    Ok(())
}

struct Builder {
    radii: Vec<f64>,
}

impl Builder {
    fn bit(&mut self, r: f64) -> u32 {
        let j = match self.radii.iter().position(|&q| q == r) {
            Some(j) => j,
            None => {
                self.radii.push(r);
                self.radii.len() - 1
            }
        };
        1 << j
    }
}

impl TraversalPlan {
    fn build(
        center: TorusPoint,
        top: (f64, f64),
        levels: &[(f64, f64)],
        first_level: usize,
        arm: Option<f64>,
    ) -> Result<Self, ExcursionError> {
        let mut b = Builder { radii: Vec::new() };
        let top_bits = (b.bit(top.0), b.bit(top.1));
        let level_bits: Vec<(u32, u32)> = levels.iter().map(|&(o, i)| (b.bit(o), b.bit(i))).collect();
        let arm_bits = arm.map(|r| b.bit(r)).unwrap_or(0);
        if b.radii.len() > 32 {
            return Err(ExcursionError::BadRadii("more than 32 circles".into()));
        }
        let table = CircleTable::new(center, &b.radii)?;
        for &(o, i) in std::iter::once(&top_bits).chain(level_bits.iter()) {
            if table.overlap(o, i) {
                return Err(ExcursionError::BadRadii(
                    "inner and outer circles of an annulus intersect".into(),
                ));
            }
        }
        Ok(TraversalPlan {
            center,
            table,
            top: top_bits,
            levels: level_bits,
            first_level,
            arm: arm_bits,
        })
    }

    /// `T_i^{x,m}`: driven by `(r_0, r_1)`, all levels counted from time 0.
    pub fn standard(center: TorusPoint, radii: &[f64]) -> Result<Self, ExcursionError> {
        Self::intermediate(center, radii, 0)
    }

    /// `T_i^{k,x,m}`: driven by the level-`k` annulus `(r_k, r_{k+1})`.
    pub fn intermediate(center: TorusPoint, radii: &[f64], k: usize) -> Result<Self, ExcursionError> {
        check_radii(center, radii)?;
        let l = radii.len() - 1;
        if k >= l {
            return Err(ExcursionError::BadRadii(format!("driving level {k} >= L = {l}")));
        }
        let levels: Vec<(f64, f64)> = (k + 1..l).map(|i| (radii[i], radii[i + 1])).collect();
        Self::build(center, (radii[k], radii[k + 1]), &levels, k, None)
    }

    /// `T~_i^{x,m}`: level clocks start at the first hit of `∂B(x, r_1)`.
    pub fn tilde(center: TorusPoint, radii: &[f64]) -> Result<Self, ExcursionError> {
        check_radii(center, radii)?;
        let l = radii.len() - 1;
        let levels: Vec<(f64, f64)> = (1..l).map(|i| (radii[i], radii[i + 1])).collect();
        Self::build(center, (radii[0], radii[1]), &levels, 0, Some(radii[1]))
    }

    /// `T^_i^{x,m}` with `r^± = (1 ± eps) r`: driving annulus `(r_0^-, r_1^+)`,
    /// level annuli `(r_i^+, r_{i+1}^-)`, clocks started at `∂B(x, r_1^+)`.
    pub fn hat(center: TorusPoint, radii: &[f64], eps: f64) -> Result<Self, ExcursionError> {
        check_radii(center, radii)?;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(ExcursionError::BadRadii(format!("eps = {eps} not in (0, 1)")));
        }
        let l = radii.len() - 1;
        let (up, down) = (1.0 + eps, 1.0 - eps);
        let levels: Vec<(f64, f64)> = (1..l)
            .map(|i| (radii[i] * up, radii[i + 1] * down))
            .collect();
        Self::build(
            center,
            (radii[0] * down, radii[1] * up),
            &levels,
            0,
            Some(radii[1] * up),
        )
    }

    pub fn center(&self) -> TorusPoint {
        self.center
    }

    pub fn first_level(&self) -> usize {
        self.first_level
    }

    pub fn run<S: StepSource>(
        &self,
        walk: &mut WalkState<S>,
        m: u64,
        cap: u64,
    ) -> Result<TraversalOutcome, ExcursionError> {
        self.drive(walk, m, cap, None)
    }

    /// Same as [`run`](Self::run) but also returns every level's `(R_k, D_k)`
    /// pairs, with the driving annulus first.
    pub fn run_logged<S: StepSource>(
        &self,
        walk: &mut WalkState<S>,
        m: u64,
        cap: u64,
    ) -> Result<(TraversalOutcome, TraversalLog), ExcursionError> {
        let mut log = vec![Vec::new(); self.levels.len() + 1];
        let out = self.drive(walk, m, cap, Some(&mut log))?;
        Ok((out, log))
    }

    fn drive<S: StepSource>(
        &self,
        walk: &mut WalkState<S>,
        m: u64,
        cap: u64,
        mut log: Option<&mut TraversalLog>,
    ) -> Result<TraversalOutcome, ExcursionError> {
        let nlev = self.levels.len();
        let t0 = walk.steps();
        let center_idx = self.center.index();
        let mut center_hit = None;
        if m == 0 {
            if walk.position().index() == center_idx {
                center_hit = Some(t0);
            }
            return Ok(TraversalOutcome {
                record: TraversalRecord::new(self.first_level, vec![0; nlev + 1]),
                top_departure: t0,
                center_hit,
            });
        }
        let mut counts = vec![0u64; nlev + 1];
        let mut seek_inner = vec![true; nlev + 1];
        let mut departures = 0u64;
        let mut armed = self.arm == 0;
        let (top_outer, top_inner) = self.top;
        loop {
            let pos = walk.position();
            let t = walk.steps();
            if center_hit.is_none() && pos.index() == center_idx {
                center_hit = Some(t);
            }
            let bits = self.table.at(&pos);
            if bits != 0 {
                if seek_inner[0] {
                    if bits & top_inner != 0 {
                        counts[0] += 1;
                        seek_inner[0] = false;
                        if let Some(l) = log.as_deref_mut() {
                            l[0].push((t, u64::MAX));
                        }
                    }
                } else if bits & top_outer != 0 {
                    departures += 1;
                    seek_inner[0] = true;
                    if let Some(l) = log.as_deref_mut() {
                        l[0].last_mut().unwrap().1 = t;
                    }
                    if departures == m {
                        return Ok(TraversalOutcome {
                            record: TraversalRecord::new(self.first_level, counts),
                            top_departure: t,
                            center_hit,
                        });
                    }
                }
                if !armed && bits & self.arm != 0 {
                    armed = true;
                }
                if armed {
                    for (j, &(outer, inner)) in self.levels.iter().enumerate() {
                        let k = j + 1;
                        if seek_inner[k] {
                            if bits & inner != 0 {
                                counts[k] += 1;
                                seek_inner[k] = false;
                                if let Some(l) = log.as_deref_mut() {
                                    l[k].push((t, u64::MAX));
                                }
                            }
                        } else if bits & outer != 0 {
                            seek_inner[k] = true;
                            if let Some(l) = log.as_deref_mut() {
                                l[k].last_mut().unwrap().1 = t;
                            }
                        }
                    }
                }
            }
            let taken = t - t0;
            if taken >= cap {
                return Err(LatticeError::BudgetExceeded { cap, steps: taken }.into());
            }
            walk.step();
        }
    }
}

/// `T_i^{x,m}` for all levels in one pass.
pub fn traversal_counts<S: StepSource>(
    walk: &mut WalkState<S>,
    x: TorusPoint,
    radii: &[f64],
    m: u64,
    cap: u64,
) -> Result<TraversalRecord, ExcursionError> {
    Ok(TraversalPlan::standard(x, radii)?.run(walk, m, cap)?.record)
}

/// `T_i^{k,x,m}`; the record starts at level `k`.
pub fn intermediate_traversals<S: StepSource>(
    walk: &mut WalkState<S>,
    x: TorusPoint,
    radii: &[f64],
    k: usize,
    m: u64,
    cap: u64,
) -> Result<TraversalRecord, ExcursionError> {
    Ok(TraversalPlan::intermediate(x, radii, k)?.run(walk, m, cap)?.record)
}

/// `T~_i^{x,m}`.
pub fn tilde_traversal<S: StepSource>(
    walk: &mut WalkState<S>,
    x: TorusPoint,
    radii: &[f64],
    m: u64,
    cap: u64,
) -> Result<TraversalRecord, ExcursionError> {
    Ok(TraversalPlan::tilde(x, radii)?.run(walk, m, cap)?.record)
}

/// `T^_i^{x,m}` with the inflation `eps = sqrt(2) / (log n)^2`.
pub fn hat_traversal<S: StepSource>(
    walk: &mut WalkState<S>,
    x: TorusPoint,
    radii: &[f64],
    m: u64,
    cap: u64,
) -> Result<TraversalRecord, ExcursionError> {
    let ln = (x.side() as f64).ln();
    let eps = 2f64.sqrt() / (ln * ln);
    Ok(TraversalPlan::hat(x, radii, eps)?.run(walk, m, cap)?.record)
}

/// Integer corridor `[b^-(i), b^+(i)]` on the window `lo..=hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Corridor {
    pub lo: usize,
    pub hi: usize,
    pub lower: Vec<u64>,
    pub upper: Vec<u64>,
}

impl Corridor {
    /// Levels `i` with `w_n <= i <= L - 1 - w_n`, bounds `b_n^-(i)` and `b_n^+(i)`.
    /// Returns `None` when the window is empty.
    pub fn from_schedule(s: &Schedule) -> Result<Option<Self>, ExcursionError> {
        let w = s.scales.w;
        let len = s.depth() as f64;
        let lo = w.ceil();
        let hi = (len - 1.0 - w).floor();
        if lo > hi {
            return Ok(None);
        }
        let (lo, hi) = (lo as usize, hi as usize);
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for i in lo..=hi {
            lower.push(s.eval(&BarrierCurve::BMinus, i as f64)? as u64);
            upper.push(s.eval(&BarrierCurve::BPlus, i as f64)? as u64);
        }
        Ok(Some(Corridor {
            lo,
            hi,
            lower,
            upper,
        }))
    }
}

/// The late-point event: `b^-(i) <= T_i <= b^+(i)` on the window and the
/// centre unvisited before the driving departure `D_m`.
pub fn detect_late_event(
    record: &TraversalRecord,
    center_hit: Option<u64>,
    departure: u64,
    corridor: &Corridor,
) -> Result<bool, ExcursionError> {
    if record.first_level() > corridor.lo || record.end_level() <= corridor.hi {
        return Err(ExcursionError::IncompleteRecord(corridor.lo, corridor.hi));
    }
    let unvisited = center_hit.is_none_or(|h| h > departure);
    if !unvisited {
        return Ok(false);
    }
    for (j, i) in (corridor.lo..=corridor.hi).enumerate() {
        let t = record.get(i)?;
        if t < corridor.lower[j] || t > corridor.upper[j] {
            return Ok(false);
        }
    }
    Ok(true)
}

fn in_disc(dx: i64, dy: i64, r: f64) -> bool {
    (((dx * dx + dy * dy) as f64).sqrt()) < r
}

/// Whether some lattice point lies in both `B(0, r)` and `B(v, r)` in the plane.
fn lens_has_point(vx: i64, vy: i64, r: f64) -> bool {
    let reach = r.ceil() as i64;
    let lo_x = (-reach).max(vx - reach);
    let hi_x = reach.min(vx + reach);
    for ux in lo_x..=hi_x {
        let h1 = r * r - (ux * ux) as f64;
        let h2 = r * r - ((ux - vx) * (ux - vx)) as f64;
        if h1 <= 0.0 || h2 <= 0.0 {
            continue;
        }
        let (s1, s2) = (h1.sqrt(), h2.sqrt());
        let lo = (-s1).max(vy as f64 - s2);
        let hi = s1.min(vy as f64 + s2);
        if lo > hi + 1.0 {
            continue;
        }
        let a = lo.ceil() as i64 - 1;
        let b = hi.floor() as i64 + 1;
        let probe = |uy: i64| in_disc(ux, uy, r) && in_disc(ux - vx, uy - vy, r);
        if b - a > 6 {
            if probe((a + b) / 2) {
                return true;
            }
        } else if (a..=b).any(probe) {
            return true;
        }
    }
    false
}

/// Whether `B(x, r)` and `B(y, r)` share a lattice point of the torus.
fn balls_meet(x: &TorusPoint, y: &TorusPoint, r: f64) -> bool {
    let n = x.side() as i64;
    let (vx, vy) = x.displacement_to(y);
    for a in -1..=1 {
        for b in -1..=1 {
            if lens_has_point(vx + a * n, vy + b * n, r) {
                return true;
            }
        }
    }
    false
}

/// `min { k : B(x, r_k) ∩ B(y, r_k) = ∅ }`, or `None` when no level
/// separates the two points (always the case for `x == y`).
pub fn branching_level(x: &TorusPoint, y: &TorusPoint, radii: &[f64]) -> Option<usize> {
    if x == y {
        return None;
    }
    radii.iter().position(|&r| !balls_meet(x, y, r))
}
