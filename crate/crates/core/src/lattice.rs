//! Torus geometry and the simple-random-walk engine.
//!
//! Points live on `Z_n^2`, balls use the strict Euclidean rule `d(c, p) < r`
//! with real radii, and the walk draws its moves from a [`StepSource`] so that
//! tests can script trajectories while experiments use counter-keyed streams.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("torus sides differ: {0} vs {1}")]
    SideMismatch(u32, u32),
    #[error("torus side must be positive")]
    ZeroSide,
    #[error("point set is empty")]
    EmptySet,
    #[error("point set has no exterior neighbours")]
    NoExterior,
    #[error("radius {radius} is not in (0, {n}/2]")]
    InvalidRadius { radius: f64, n: u32 },
    #[error("step budget of {cap} exhausted after {steps} steps")]
    BudgetExceeded { cap: u64, steps: u64 },
}

/// A vertex of `Z_n^2`. Coordinates are always reduced into `[0, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TorusPoint {
    x: u32,
    y: u32,
    n: u32,
}

pub type PointSet = BTreeSet<TorusPoint>;

impl TorusPoint {
    /// Builds a point from arbitrary integer coordinates, reducing them mod `n`.
    ///
    /// Panics if `n == 0`.
    pub fn new(x: i64, y: i64, n: u32) -> Self {
        assert!(n > 0, "torus side must be positive");
        let m = n as i64;
        TorusPoint {
            x: x.rem_euclid(m) as u32,
            y: y.rem_euclid(m) as u32,
            n,
        }
    }

    pub fn origin(n: u32) -> Self {
        Self::new(0, 0, n)
    }

    pub fn from_index(index: usize, n: u32) -> Self {
        let n_us = n as usize;
        TorusPoint {
            x: (index % n_us) as u32,
            y: (index / n_us) as u32,
            n,
        }
    }

    pub fn x(&self) -> u32 {
        self.x
    }

    pub fn y(&self) -> u32 {
        self.y
    }

    pub fn side(&self) -> u32 {
        self.n
    }

    /// Row-major cell index `y * n + x`.
    #[inline]
    pub fn index(&self) -> usize {
        self.y as usize * self.n as usize + self.x as usize
    }

    pub fn offset(&self, dx: i64, dy: i64) -> Self {
        Self::new(self.x as i64 + dx, self.y as i64 + dy, self.n)
    }

    pub fn neighbors(&self) -> [TorusPoint; 4] {
        [
            self.offset(1, 0),
            self.offset(0, 1),
            self.offset(-1, 0),
            self.offset(0, -1),
        ]
    }

    /// Minimal wrapped displacement `other - self`, each coordinate in `(-n/2, n/2]`.
    pub fn displacement_to(&self, other: &TorusPoint) -> (i64, i64) {
        let n = self.n as i64;
        (
            wrap_delta(other.x as i64 - self.x as i64, n),
            wrap_delta(other.y as i64 - self.y as i64, n),
        )
    }
}

#[inline]
pub(crate) fn wrap_delta(d: i64, n: i64) -> i64 {
    let d = d.rem_euclid(n);
    if d > n / 2 {
        d - n
    } else {
        d
    }
}

/// Euclidean length of the minimal wrapped displacement between `a` and `b`.
pub fn torus_distance(a: &TorusPoint, b: &TorusPoint) -> Result<f64, LatticeError> {
    if a.n != b.n {
        return Err(LatticeError::SideMismatch(a.n, b.n));
    }
    let (dx, dy) = a.displacement_to(b);
    Ok(((dx * dx + dy * dy) as f64).sqrt())
}

/// The open ball `B(center, radius) = { p : d(center, p) < radius }`.
///
/// Radii up to `n/2` inclusive are accepted: with the strict inequality no
/// displacement coordinate reaches `n/2`, so the ball never meets itself
/// across the seam.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball {
    center: TorusPoint,
    radius: f64,
}

impl Ball {
    pub fn new(center: TorusPoint, radius: f64) -> Result<Self, LatticeError> {
        let n = center.n;
        if !(radius > 0.0) || radius > n as f64 / 2.0 {
            return Err(LatticeError::InvalidRadius { radius, n });
        }
        Ok(Ball { center, radius })
    }

    pub fn center(&self) -> TorusPoint {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn contains(&self, p: &TorusPoint) -> bool {
        let (dx, dy) = self.center.displacement_to(p);
        (((dx * dx + dy * dy) as f64).sqrt()) < self.radius
    }

    pub fn points(&self) -> PointSet {
        let reach = self.radius.ceil() as i64;
        let mut out = PointSet::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                if (((dx * dx + dy * dy) as f64).sqrt()) < self.radius {
                    out.insert(self.center.offset(dx, dy));
                }
            }
        }
        out
    }

    /// `∂B`: the exterior neighbours of the ball, or the centre itself when
    /// the ball is a single vertex.
    pub fn boundary(&self) -> PointSet {
        boundary(&self.points()).expect("a ball with radius < n/2 has an exterior")
    }
}

/// Exterior vertex boundary of `set`; a singleton is its own boundary.
pub fn boundary(set: &PointSet) -> Result<PointSet, LatticeError> {
    if set.is_empty() {
        return Err(LatticeError::EmptySet);
    }
    if set.len() == 1 {
        return Ok(set.clone());
    }
    let mut out = PointSet::new();
    for p in set {
        for q in p.neighbors() {
            if !set.contains(&q) {
                out.insert(q);
            }
        }
    }
    if out.is_empty() {
        return Err(LatticeError::NoExterior);
    }
    Ok(out)
}

/// Convenience for `∂B(center, radius)`.
pub fn circle(center: TorusPoint, radius: f64) -> Result<PointSet, LatticeError> {
    Ok(Ball::new(center, radius)?.boundary())
}

/// Dense bitset over the `n^2` cells of the torus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSet {
    n: u32,
    words: Vec<u64>,
    len: usize,
}

impl CellSet {
    pub fn new(n: u32) -> Self {
        let cells = n as usize * n as usize;
        CellSet {
            n,
            words: vec![0; cells.div_ceil(64)],
            len: 0,
        }
    }

    pub fn from_points<'a>(n: u32, points: impl IntoIterator<Item = &'a TorusPoint>) -> Self {
        let mut set = Self::new(n);
        for p in points {
            debug_assert_eq!(p.n, n);
            set.insert(p.index());
        }
        set
    }

    pub fn side(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Returns `true` if the cell was newly inserted.
    #[inline]
    pub fn insert(&mut self, index: usize) -> bool {
        let (w, b) = (index >> 6, index & 63);
        let fresh = self.words[w] & (1 << b) == 0;
        if fresh {
            self.words[w] |= 1 << b;
            self.len += 1;
        }
        fresh
    }

    #[inline]
    pub fn contains(&self, index: usize) -> bool {
        self.words[index >> 6] & (1 << (index & 63)) != 0
    }

    pub fn contains_point(&self, p: &TorusPoint) -> bool {
        p.n == self.n && self.contains(p.index())
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + b)
            })
        })
    }

    pub fn points(&self) -> impl Iterator<Item = TorusPoint> + '_ {
        let n = self.n;
        self.iter().map(move |i| TorusPoint::from_index(i, n))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Right,
    Up,
    Left,
    Down,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::Right,
        Direction::Up,
        Direction::Left,
        Direction::Down,
    ];

    #[inline]
    fn from_bits(bits: u64) -> Self {
        Self::ALL[(bits & 3) as usize]
    }
}

/// Anything that can feed uniformly chosen moves to a walk.
pub trait StepSource {
    fn next_direction(&mut self) -> Direction;
}

/// Counter-based random stream keyed by `(master seed, trial index)`.
///
/// Different trial indices select disjoint ChaCha streams, so a trial's
/// output does not depend on which worker ran it or in what order.
#[derive(Clone, Debug)]
pub struct TrialStream {
    rng: ChaCha8Rng,
    bits: u64,
    remaining: u32,
}

impl TrialStream {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trial);
        TrialStream {
            rng,
            bits: 0,
            remaining: 0,
        }
    }
}

impl StepSource for TrialStream {
    #[inline]
    fn next_direction(&mut self) -> Direction {
        if self.remaining == 0 {
            self.bits = self.rng.next_u64();
            self.remaining = 32;
        }
        let d = Direction::from_bits(self.bits);
        self.bits >>= 2;
        self.remaining -= 1;
        d
    }
}

impl RngCore for TrialStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Replays a fixed list of moves, cycling when exhausted.
#[derive(Clone, Debug)]
pub struct ScriptedSteps {
    moves: Vec<Direction>,
    next: usize,
}

impl ScriptedSteps {
    pub fn new(moves: Vec<Direction>) -> Self {
        assert!(!moves.is_empty(), "scripted walk needs at least one move");
        ScriptedSteps { moves, next: 0 }
    }
}

impl StepSource for ScriptedSteps {
    fn next_direction(&mut self) -> Direction {
        let d = self.moves[self.next];
        self.next = (self.next + 1) % self.moves.len();
        d
    }
}

/// Default budget for cover runs: `50 * (4/pi) n^2 (log n)^2`, at least one step.
pub fn default_cover_budget(n: u32) -> u64 {
    let nf = n as f64;
    let ln = nf.ln();
    (50.0 * 4.0 / PI * nf * nf * ln * ln).ceil().max(1.0) as u64
}

/// Position, step counter and random stream of one simple random walk.
#[derive(Clone, Debug)]
pub struct WalkState<S = TrialStream> {
    pos: TorusPoint,
    steps: u64,
    source: S,
}

impl<S: StepSource> WalkState<S> {
    pub fn new(start: TorusPoint, source: S) -> Self {
        WalkState {
            pos: start,
            steps: 0,
            source,
        }
    }

    pub fn position(&self) -> TorusPoint {
        self.pos
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    /// Gives the stream back, e.g. to restart the walk elsewhere.
    pub fn into_source(self) -> S {
        self.source
    }

    /// Moves the walk to one uniformly chosen neighbour.
    #[inline]
    pub fn step(&mut self) -> TorusPoint {
        let n = self.pos.n;
        let p = &mut self.pos;
        match self.source.next_direction() {
            Direction::Right => p.x = if p.x + 1 == n { 0 } else { p.x + 1 },
            Direction::Left => p.x = if p.x == 0 { n - 1 } else { p.x - 1 },
            Direction::Up => p.y = if p.y + 1 == n { 0 } else { p.y + 1 },
            Direction::Down => p.y = if p.y == 0 { n - 1 } else { p.y - 1 },
        }
        self.steps += 1;
        self.pos
    }

    /// Steps until the walk first stands in `target` (0 if it already does).
    pub fn hitting_time(&mut self, target: &CellSet, cap: u64) -> Result<u64, LatticeError> {
        if target.is_empty() {
            return Err(LatticeError::EmptySet);
        }
        if target.side() != self.pos.n {
            return Err(LatticeError::SideMismatch(target.side(), self.pos.n));
        }
        let mut taken = 0u64;
        while !target.contains(self.pos.index()) {
            if taken == cap {
                return Err(LatticeError::BudgetExceeded { cap, steps: taken });
            }
            self.step();
            taken += 1;
        }
        Ok(taken)
    }

    /// Steps until every vertex of the torus has been visited.
    pub fn cover_time(&mut self, cap: u64) -> Result<u64, LatticeError> {
        let n = self.pos.n;
        let mut visited = CellSet::new(n);
        visited.insert(self.pos.index());
        let total = n as usize * n as usize;
        let mut taken = 0u64;
        while visited.len() < total {
            if taken == cap {
                return Err(LatticeError::BudgetExceeded { cap, steps: taken });
            }
            let p = self.step();
            taken += 1;
            visited.insert(p.index());
        }
        Ok(taken)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(x: i64, y: i64, n: u32) -> TorusPoint {
        TorusPoint::new(x, y, n)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(torus_distance(&pt(0, 0, 8), &pt(0, 1, 8)).unwrap(), 1.0);
        assert_eq!(torus_distance(&pt(0, 0, 8), &pt(7, 0, 8)).unwrap(), 1.0);
        assert_eq!(torus_distance(&pt(0, 0, 100), &pt(3, 4, 100)).unwrap(), 5.0);
        assert!(matches!(
            torus_distance(&pt(0, 0, 8), &pt(0, 0, 9)),
            Err(LatticeError::SideMismatch(8, 9))
        ));
    }

    #[test]
    fn coordinates_reduce() {
        assert_eq!(pt(-1, 9, 8), pt(7, 1, 8));
    }

    #[test]
    fn singleton_boundary_is_itself() {
        let s: PointSet = [pt(3, 3, 10)].into_iter().collect();
        assert_eq!(boundary(&s).unwrap(), s);
    }

    #[test]
    fn boundary_of_plus_shape_by_enumeration() {
        let n = 9;
        let c = pt(4, 4, n);
        let ball = Ball::new(c, 1.2).unwrap().points();
        assert_eq!(ball.len(), 5);
        // every vertex outside the ball with a neighbour inside it
        let mut expected = PointSet::new();
        for i in 0..(n * n) as usize {
            let p = TorusPoint::from_index(i, n);
            if !ball.contains(&p) && p.neighbors().iter().any(|q| ball.contains(q)) {
                expected.insert(p);
            }
        }
        let got = boundary(&ball).unwrap();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 8);
        let far = got
            .iter()
            .filter(|p| torus_distance(&c, p).unwrap() == 2.0)
            .count();
        assert_eq!(far, 4);
    }

    #[test]
    fn boundary_errors() {
        assert_eq!(boundary(&PointSet::new()), Err(LatticeError::EmptySet));
        let all: PointSet = (0..16).map(|i| TorusPoint::from_index(i, 4)).collect();
        assert_eq!(boundary(&all), Err(LatticeError::NoExterior));
    }

    #[test]
    fn ball_radius_is_validated() {
        assert!(Ball::new(pt(0, 0, 10), 5.01).is_err());
        assert_eq!(Ball::new(pt(0, 0, 10), 5.0).unwrap().points().len(), 69);
        assert!(Ball::new(pt(0, 0, 10), 0.0).is_err());
        assert!(Ball::new(pt(0, 0, 10), 4.99).is_ok());
    }

    #[test]
    fn forced_up_move() {
        let mut w = WalkState::new(pt(0, 0, 4), ScriptedSteps::new(vec![Direction::Up]));
        assert_eq!(w.step(), pt(0, 1, 4));
        assert_eq!(w.steps(), 1);
    }

    #[test]
    fn equal_seeds_equal_trajectories() {
        let mut a = WalkState::new(pt(0, 0, 32), TrialStream::new(7, 3));
        let mut b = WalkState::new(pt(0, 0, 32), TrialStream::new(7, 3));
        for _ in 0..10_000 {
            assert_eq!(a.step(), b.step());
        }
        let mut c = WalkState::new(pt(0, 0, 32), TrialStream::new(7, 4));
        let differs = (0..100).any(|_| a.step() != c.step());
        assert!(differs);
    }

    #[test]
    fn neighbour_frequencies() {
        let n = 16;
        let mut w = WalkState::new(pt(0, 0, n), TrialStream::new(11, 0));
        let mut counts = [0u64; 4];
        let total = 1_000_000;
        for _ in 0..total {
            let before = w.position();
            let after = w.step();
            let (dx, dy) = before.displacement_to(&after);
            let k = match (dx, dy) {
                (1, 0) => 0,
                (0, 1) => 1,
                (-1, 0) => 2,
                (0, -1) => 3,
                other => panic!("non-neighbour move {other:?}"),
            };
            counts[k] += 1;
        }
        for c in counts {
            assert!((c as f64 / total as f64 - 0.25).abs() < 0.002);
        }
    }

    #[test]
    fn hitting_time_trivial_cases() {
        let n = 16;
        let start = pt(5, 5, n);
        let inside = CellSet::from_points(n, &[start]);
        let mut w = WalkState::new(start, TrialStream::new(1, 1));
        assert_eq!(w.hitting_time(&inside, 10).unwrap(), 0);
        let ring = CellSet::from_points(n, &start.neighbors());
        assert_eq!(w.hitting_time(&ring, 10).unwrap(), 1);
        let far = CellSet::from_points(n, &[pt(13, 13, n)]);
        let mut w = WalkState::new(start, TrialStream::new(1, 2));
        assert!(matches!(
            w.hitting_time(&far, 3),
            Err(LatticeError::BudgetExceeded { cap: 3, steps: 3 })
        ));
    }

    #[test]
    fn exit_time_of_ball_from_centre() {
        // E H_{∂B(0,R)} from the centre lies in [R^2, (R+1)^2]
        let (n, r) = (128u32, 20.0);
        let c = pt(0, 0, n);
        let target = CellSet::from_points(n, &Ball::new(c, r).unwrap().boundary());
        let trials = 4000;
        let samples: Vec<f64> = (0..trials)
            .map(|t| {
                let mut w = WalkState::new(c, TrialStream::new(5, t));
                w.hitting_time(&target, u64::MAX).unwrap() as f64
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / trials as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!(mean > r * r - 3.0 * se && mean < (r + 1.0) * (r + 1.0) + 3.0 * se);
    }

    #[test]
    fn cover_time_of_single_vertex() {
        let mut w = WalkState::new(pt(0, 0, 1), TrialStream::new(0, 0));
        assert_eq!(w.cover_time(10).unwrap(), 0);
    }

    /// Exact expected cover time on Z_2^2 by solving the (position, visited) chain.
    fn exact_cover_time_n2() -> f64 {
        // states: position p in 0..4, visited mask v containing p; absorbing when v == 15
        let neigh = |p: usize| -> [usize; 4] {
            let (x, y) = (p % 2, p / 2);
            let r = (1 - x) + 2 * y;
            let u = x + 2 * (1 - y);
            [r, u, r, u]
        };
        let mut idx = std::collections::HashMap::new();
        let mut states = Vec::new();
        for v in 1..15usize {
            for p in 0..4 {
                if v & (1 << p) != 0 {
                    idx.insert((p, v), states.len());
                    states.push((p, v));
                }
            }
        }
        let k = states.len();
        let mut a = vec![vec![0.0f64; k + 1]; k];
        for (i, &(p, v)) in states.iter().enumerate() {
            a[i][i] = 1.0;
            a[i][k] = 1.0;
            for q in neigh(p) {
                let nv = v | (1 << q);
                if nv != 15 {
                    a[i][idx[&(q, nv)]] -= 0.25;
                }
            }
        }
        // Gauss-Jordan
        for col in 0..k {
            let piv = (col..k)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, piv);
            let d = a[col][col];
            for c in col..=k {
                a[col][c] /= d;
            }
            for r in 0..k {
                if r != col {
                    let f = a[r][col];
                    if f != 0.0 {
                        for c in col..=k {
                            a[r][c] -= f * a[col][c];
                        }
                    }
                }
            }
        }
        a[idx[&(0, 1)]][k]
    }

    #[test]
    fn cover_time_n2_matches_exact_chain() {
        let exact = exact_cover_time_n2();
        let trials = 200_000u64;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for t in 0..trials {
            let mut w = WalkState::new(pt(0, 0, 2), TrialStream::new(99, t));
            let c = w.cover_time(10_000).unwrap() as f64;
            sum += c;
            sq += c * c;
        }
        let mean = sum / trials as f64;
        let se = ((sq / trials as f64 - mean * mean) / trials as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} exact {exact} se {se}");
    }

    #[test]
    fn default_budget_is_generous() {
        assert_eq!(default_cover_budget(1), 1);
        assert!(default_cover_budget(64) > 1_000_000);
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(n in 1u32..40, a in any::<(i64, i64)>(), b in any::<(i64, i64)>(), c in any::<(i64, i64)>()) {
            let (a, b, c) = (pt(a.0 % 1000, a.1 % 1000, n), pt(b.0 % 1000, b.1 % 1000, n), pt(c.0 % 1000, c.1 % 1000, n));
            let ab = torus_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, torus_distance(&b, &a).unwrap());
            prop_assert_eq!(ab == 0.0, a == b);
            let ac = torus_distance(&a, &c).unwrap();
            let cb = torus_distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn trajectories_are_nearest_neighbour(n in 2u32..20, seed in any::<u64>()) {
            let mut w = WalkState::new(pt(0, 0, n), TrialStream::new(seed, 0));
            for i in 0..500u64 {
                let before = w.position();
                let after = w.step();
                prop_assert_eq!(w.steps(), i + 1);
                prop_assert!(after.x() < n && after.y() < n);
                prop_assert_eq!(torus_distance(&before, &after).unwrap(), 1.0);
            }
        }

        #[test]
        fn hitting_larger_set_is_no_later(seed in any::<u64>(), r_small in 2.0f64..6.0, extra in 0.5f64..6.0) {
            let n = 32;
            let c = pt(16, 16, n);
            let start = pt(16 + 13, 16, n);
            let inner = Ball::new(c, r_small).unwrap().points();
            let outer = Ball::new(c, r_small + extra).unwrap().points();
            let small = CellSet::from_points(n, &inner);
            let big = CellSet::from_points(n, &outer);
            let mut w1 = WalkState::new(start, TrialStream::new(seed, 0));
            let mut w2 = WalkState::new(start, TrialStream::new(seed, 0));
            let t_big = w1.hitting_time(&big, u64::MAX).unwrap();
            let t_small = w2.hitting_time(&small, u64::MAX).unwrap();
            prop_assert!(t_big <= t_small);
        }

        #[test]
        fn cover_dominates_single_hits(seed in any::<u64>(), tx in 0u32..8, ty in 0u32..8) {
            let n = 8;
            let start = pt(0, 0, n);
            let mut w1 = WalkState::new(start, TrialStream::new(seed, 1));
            let cover = w1.cover_time(u64::MAX).unwrap();
            let mut w2 = WalkState::new(start, TrialStream::new(seed, 1));
            let target = CellSet::from_points(n, &[pt(tx as i64, ty as i64, n)]);
            prop_assert!(w2.hitting_time(&target, u64::MAX).unwrap() <= cover);
        }
    }
}
