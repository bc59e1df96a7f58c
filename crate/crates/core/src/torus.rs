//! Angles on the circle of directions, triadic intervals, projections, cones
//! and the anisotropic metrics attached to direction intervals.
//!
//! Angles are measured in turns: `θ ∈ [0, 1)` stands for the unit vector
//! `e_θ = (cos 2πθ, sin 2πθ)`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack used by every geometric predicate in this module.
pub const EPS: f64 = 1e-12;

/// Deepest supported triadic level; `3^33 < 2^53` keeps indices exact in `f64`.
pub const MAX_TRIADIC_LEVEL: u32 = 33;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x1: 0.0, x2: 0.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Point { x1, x2 }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2
    }

    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x1 + (other.x1 - self.x1) * t,
            self.x2 + (other.x2 - self.x2) * t,
        )
    }

    /// Direction of the line through the origin and `self`, as an angle mod 1/2.
    pub fn line_angle(self) -> f64 {
        let a = self.x2.atan2(self.x1) / std::f64::consts::TAU;
        let a = a.rem_euclid(0.5);
        if a >= 0.5 {
            0.0
        } else {
            a
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x1 + o.x1, self.x2 + o.x2)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x1 - o.x1, self.x2 - o.x2)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x1, -self.x2)
    }
}

impl Mul<Point> for f64 {
    type Output = Point;
    fn mul(self, p: Point) -> Point {
        Point::new(self * p.x1, self * p.x2)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

/// A point of `ℝ/ℤ`, stored as its representative in `[0, 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Angle(f64);

impl Angle {
    pub fn new(value: f64) -> Self {
        let v = value.rem_euclid(1.0);
        // rem_euclid can round tiny negative inputs up to exactly 1.0
        Angle(if v >= 1.0 { 0.0 } else { v })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn perp(self) -> Angle {
        Angle::new(self.0 + 0.25)
    }

    pub fn shifted(self, delta: f64) -> Angle {
        Angle::new(self.0 + delta)
    }

    /// `e_θ`. Quarter turns are reduced first so that axis directions come out exact.
    pub fn direction(self) -> Point {
        let q = (self.0 * 4.0).round();
        let r = self.0 - q / 4.0;
        let (s, c) = (std::f64::consts::TAU * r).sin_cos();
        match (q as i64).rem_euclid(4) {
            0 => Point::new(c, s),
            1 => Point::new(-s, c),
            2 => Point::new(-c, -s),
            _ => Point::new(s, -c),
        }
    }

    /// `e_{θ⊥}`, the direction rotated by a quarter turn.
    pub fn normal(self) -> Point {
        let e = self.direction();
        Point::new(-e.x2, e.x1)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Signed shortest arc from `from` to `to`, in `[-1/2, 1/2)`.
pub fn signed_arc(from: Angle, to: Angle) -> f64 {
    let d = (to.0 - from.0).rem_euclid(1.0);
    if d >= 0.5 {
        d - 1.0
    } else {
        d
    }
}

pub fn direction_vector(theta: Angle) -> Point {
    theta.direction()
}

/// `π_θ(p) = p · e_θ`.
pub fn project(theta: Angle, p: Point) -> f64 {
    p.dot(theta.direction())
}

/// `π_θ^⊥(p) = π_{θ+1/4}(p)`.
pub fn project_perp(theta: Angle, p: Point) -> f64 {
    p.dot(theta.normal())
}

/// A closed arc of directions with a center and a half-width in turns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleInterval {
    pub center: Angle,
    pub half_width: f64,
}

impl AngleInterval {
    pub fn new(center: Angle, half_width: f64) -> Result<Self> {
        if !(half_width > 0.0 && half_width <= 0.5) {
            return Err(Error::Precondition(format!(
                "half-width {half_width} outside (0, 1/2]"
            )));
        }
        Ok(AngleInterval { center, half_width })
    }

    /// The arc `[start, start + length]`.
    pub fn from_start(start: f64, length: f64) -> Result<Self> {
        Self::new(Angle::new(start + length / 2.0), length / 2.0)
    }

    pub fn full() -> Self {
        AngleInterval {
            center: Angle::new(0.5),
            half_width: 0.5,
        }
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn is_full(&self) -> bool {
        self.half_width >= 0.5
    }

    pub fn start(&self) -> f64 {
        self.center.value() - self.half_width
    }

    pub fn end(&self) -> f64 {
        self.center.value() + self.half_width
    }

    pub fn contains(&self, theta: Angle) -> bool {
        self.is_full() || signed_arc(self.center, theta).abs() <= self.half_width + EPS
    }

    /// Same midpoint, length scaled by `factor` and capped at 1.
    pub fn dilate(&self, factor: f64) -> Self {
        AngleInterval {
            center: self.center,
            half_width: (self.half_width * factor).min(0.5),
        }
    }

    pub fn perp(&self) -> Self {
        AngleInterval {
            center: self.center.perp(),
            half_width: self.half_width,
        }
    }

    /// Whether `other` lies inside `self` (closed arcs, slack [`EPS`]).
    pub fn contains_interval(&self, other: &AngleInterval) -> bool {
        if self.is_full() {
            return true;
        }
        if other.is_full() {
            return false;
        }
        signed_arc(self.center, other.center).abs() + other.half_width
            <= self.half_width + EPS
    }

    pub fn frame(&self) -> AnisoFrame {
        AnisoFrame::new(self.center, self.length())
    }
}

/// A triadic interval `[k 3^{-j}, (k+1) 3^{-j})` of the torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TriadicInterval {
    pub level: u32,
    pub index: u64,
}

pub fn pow3(level: u32) -> u64 {
    3u64.pow(level)
}

impl TriadicInterval {
    pub const ROOT: TriadicInterval = TriadicInterval { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Result<Self> {
        if level > MAX_TRIADIC_LEVEL {
            return Err(Error::Precondition(format!(
                "triadic level {level} exceeds {MAX_TRIADIC_LEVEL}"
            )));
        }
        if index >= pow3(level) {
            return Err(Error::Precondition(format!(
                "index {index} out of range at level {level}"
            )));
        }
        Ok(TriadicInterval { level, index })
    }

    /// The level-`level` triadic interval containing `theta`.
    pub fn containing(theta: Angle, level: u32) -> Self {
        let n = pow3(level);
        let k = ((theta.value() * n as f64).floor() as u64).min(n - 1);
        TriadicInterval { level, index: k }
    }

    pub fn length(&self) -> f64 {
        1.0 / pow3(self.level) as f64
    }

    pub fn start(&self) -> f64 {
        self.index as f64 / pow3(self.level) as f64
    }

    pub fn end(&self) -> f64 {
        (self.index + 1) as f64 / pow3(self.level) as f64
    }

    pub fn center(&self) -> Angle {
        Angle::new((2 * self.index + 1) as f64 / (2 * pow3(self.level)) as f64)
    }

    /// Half-open membership; the level-`j` intervals partition the torus.
    pub fn contains(&self, theta: Angle) -> bool {
        Self::containing(theta, self.level).index == self.index
    }

    pub fn parent(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(Error::Precondition("the root interval has no parent".into()));
        }
        Ok(TriadicInterval {
            level: self.level - 1,
            index: self.index / 3,
        })
    }

    pub fn children(&self) -> [TriadicInterval; 3] {
        let l = self.level + 1;
        let k = self.index * 3;
        [
            TriadicInterval { level: l, index: k },
            TriadicInterval { level: l, index: k + 1 },
            TriadicInterval { level: l, index: k + 2 },
        ]
    }

    /// The child sharing this interval's center.
    pub fn middle_child(&self) -> Self {
        self.children()[1]
    }

    /// The ancestor at `level`, or `self` when `level` equals its own level.
    pub fn ancestor_at(&self, level: u32) -> Option<Self> {
        if level > self.level {
            return None;
        }
        Some(TriadicInterval {
            level,
            index: self.index / pow3(self.level - level),
        })
    }

    /// `self ⊆ other`.
    pub fn is_within(&self, other: &TriadicInterval) -> bool {
        self.ancestor_at(other.level) == Some(*other)
    }

    pub fn is_disjoint(&self, other: &TriadicInterval) -> bool {
        !self.is_within(other) && !other.is_within(self)
    }

    /// All descendants at `level` (including `self` when the levels agree).
    pub fn descendants_at(&self, level: u32) -> Vec<TriadicInterval> {
        if level < self.level {
            return Vec::new();
        }
        let span = pow3(level - self.level);
        (self.index * span..(self.index + 1) * span)
            .map(|index| TriadicInterval { level, index })
            .collect()
    }

    pub fn as_interval(&self) -> AngleInterval {
        AngleInterval {
            center: self.center(),
            half_width: self.length() / 2.0,
        }
    }

    /// `C·J` as an arc: same center, length `C·H(J)` capped at 1.
    pub fn dilate(&self, factor: f64) -> AngleInterval {
        self.as_interval().dilate(factor)
    }

    /// `3J`, which is the parent when `J` is a middle child.
    pub fn triple(&self) -> AngleInterval {
        self.dilate(3.0)
    }

    /// If `self` is the middle child of its parent, that parent (so `3·self` is triadic).
    pub fn tripled_triadic(&self) -> Option<TriadicInterval> {
        if self.level > 0 && self.index % 3 == 1 {
            self.parent().ok()
        } else {
            None
        }
    }
}

/// Orders triadic intervals by left endpoint, then by level (coarser first); exact.
pub fn cmp_by_start(a: &TriadicInterval, b: &TriadicInterval) -> std::cmp::Ordering {
    let lhs = a.index as u128 * pow3(b.level) as u128;
    let rhs = b.index as u128 * pow3(a.level) as u128;
    lhs.cmp(&rhs).then(a.level.cmp(&b.level))
}

/// Members not contained in another member, sorted by start.
pub fn maximal_triadic(intervals: impl IntoIterator<Item = TriadicInterval>) -> Vec<TriadicInterval> {
    let set: std::collections::BTreeSet<TriadicInterval> = intervals.into_iter().collect();
    let mut out: Vec<TriadicInterval> = set
        .iter()
        .filter(|t| {
            (0..t.level).all(|l| !set.contains(&t.ancestor_at(l).expect("coarser level")))
        })
        .copied()
        .collect();
    out.sort_by(cmp_by_start);
    out
}

/// The coarsest disjoint triadic family with the same union: maximal members,
/// with complete sibling triples replaced by their parent, repeatedly.
pub fn coarsen_triadic(intervals: impl IntoIterator<Item = TriadicInterval>) -> Vec<TriadicInterval> {
    let mut set: std::collections::BTreeSet<TriadicInterval> =
        maximal_triadic(intervals).into_iter().collect();
    let deepest = set.iter().map(|t| t.level).max().unwrap_or(0);
    for level in (1..=deepest).rev() {
        let at: Vec<TriadicInterval> = set.iter().filter(|t| t.level == level).copied().collect();
        for t in at {
            if !set.contains(&t) {
                continue;
            }
            let p = t.parent().expect("level >= 1");
            let kids = p.children();
            if kids.iter().all(|c| set.contains(c)) {
                for c in &kids {
                    set.remove(c);
                }
                set.insert(p);
            }
        }
    }
    let mut out: Vec<TriadicInterval> = set.into_iter().collect();
    out.sort_by(cmp_by_start);
    out
}

impl fmt::Display for TriadicInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}/3^{}, {}/3^{})", self.index, self.level, self.index + 1, self.level)
    }
}

/// Rotation + anisotropic scaling turning `d_I` into the Euclidean metric.
///
/// `to_mapped(p) = (π_I^⊥(p)/H(I), π_I(p))`, and `from_mapped` is `S_I ∘ R_I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnisoFrame {
    pub center: Angle,
    pub width: f64,
    e: Point,
    n: Point,
}

impl AnisoFrame {
    pub fn new(center: Angle, width: f64) -> Self {
        AnisoFrame {
            center,
            width,
            e: center.direction(),
            n: center.normal(),
        }
    }

    pub fn along(&self, p: Point) -> f64 {
        p.dot(self.e)
    }

    pub fn across(&self, p: Point) -> f64 {
        p.dot(self.n)
    }

    pub fn to_mapped(&self, p: Point) -> Point {
        Point::new(self.across(p) / self.width, self.along(p))
    }

    pub fn from_mapped(&self, u: Point) -> Point {
        (self.width * u.x1) * self.n + u.x2 * self.e
    }

    pub fn dist(&self, x: Point, y: Point) -> f64 {
        let d = y - x;
        (self.across(d) / self.width).hypot(self.along(d))
    }
}

/// `d_I(x, y) = (H(I)^{-2}|π_I^⊥(x−y)|² + |π_I(x−y)|²)^{1/2}`.
pub fn d_metric(interval: &AngleInterval, x: Point, y: Point) -> f64 {
    let h = interval.length();
    let a = project_perp(interval.center, x) - project_perp(interval.center, y);
    let b = project(interval.center, x) - project(interval.center, y);
    ((a / h).powi(2) + b * b).sqrt()
}

/// A finite union of closed arcs of directions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub arcs: Vec<AngleInterval>,
}

impl DirectionSet {
    pub fn empty() -> Self {
        DirectionSet { arcs: Vec::new() }
    }

    pub fn single(arc: AngleInterval) -> Self {
        DirectionSet { arcs: vec![arc] }
    }

    pub fn from_triadic<'a>(intervals: impl IntoIterator<Item = &'a TriadicInterval>) -> Self {
        DirectionSet {
            arcs: intervals.into_iter().map(|t| t.as_interval()).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    /// Sum of arc lengths; equals the measure when the arcs are disjoint.
    pub fn length(&self) -> f64 {
        self.arcs.iter().map(|a| a.length()).sum()
    }

    pub fn contains(&self, theta: Angle) -> bool {
        self.arcs.iter().any(|a| a.contains(theta))
    }

    pub fn perp(&self) -> Self {
        DirectionSet {
            arcs: self.arcs.iter().map(|a| a.perp()).collect(),
        }
    }

    /// The union as sorted disjoint intervals of `[0, 1)`.
    pub fn pieces(&self) -> Vec<(f64, f64)> {
        let mut raw = Vec::new();
        for a in &self.arcs {
            if a.is_full() {
                raw.push((0.0, 1.0));
                continue;
            }
            let s = a.start().rem_euclid(1.0);
            let e = s + a.length();
            if e <= 1.0 {
                raw.push((s, e));
            } else {
                raw.push((s, 1.0));
                raw.push((0.0, e - 1.0));
            }
        }
        raw.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (s, e) in raw {
            match out.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => out.push((s, e)),
            }
        }
        out
    }

    /// Measure of the union inside `[start, end) ⊆ [0, 1)`.
    pub fn measure_in(&self, start: f64, end: f64) -> f64 {
        self.pieces()
            .iter()
            .map(|&(s, e)| (e.min(end) - s.max(start)).max(0.0))
            .sum()
    }

    /// Measure of the union.
    pub fn measure(&self) -> f64 {
        self.measure_in(0.0, 1.0)
    }

    /// `outer ∖ inner` for two arcs sharing a center with `inner ⊆ outer`,
    /// returned as the two closed side arcs.
    pub fn annular(outer: &AngleInterval, inner: &AngleInterval) -> Self {
        if outer.half_width <= inner.half_width {
            return DirectionSet::empty();
        }
        let side = outer.half_width - inner.half_width;
        let mut arcs = Vec::new();
        if outer.is_full() {
            let rest = 1.0 - inner.length();
            if rest > 0.0 {
                arcs.push(
                    AngleInterval::from_start(inner.end(), rest).expect("positive arc"),
                );
            }
            return DirectionSet { arcs };
        }
        arcs.push(AngleInterval::from_start(inner.end(), side).expect("positive arc"));
        arcs.push(AngleInterval::from_start(inner.start() - side, side).expect("positive arc"));
        DirectionSet { arcs }
    }
}

/// A (possibly truncated) two-sided cone `X(x, G, r, R)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub apex: Point,
    pub directions: DirectionSet,
    pub inner: f64,
    pub outer: f64,
}

impl ConeSpec {
    pub fn new(apex: Point, directions: DirectionSet, inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner) {
            return Err(Error::Precondition(format!(
                "cone radii must satisfy 0 <= inner < outer, got {inner}, {outer}"
            )));
        }
        Ok(ConeSpec {
            apex,
            directions,
            inner,
            outer,
        })
    }

    pub fn untruncated(apex: Point, directions: DirectionSet) -> Self {
        ConeSpec {
            apex,
            directions,
            inner: 0.0,
            outer: f64::INFINITY,
        }
    }

    /// Membership through the algebraic test `|π^⊥_θ(y−x)| ≤ sin(2πa)|y−x|` per arc.
    pub fn contains(&self, y: Point) -> bool {
        Cone::from_spec(self).contains(y)
    }

    /// Membership through the angle of the line `x y`, independent of the algebraic test.
    pub fn contains_by_angle(&self, y: Point) -> bool {
        let d = y - self.apex;
        if d.x1 == 0.0 && d.x2 == 0.0 {
            return self.inner == 0.0 && !self.directions.is_empty();
        }
        let dist = d.norm();
        if dist < self.inner - EPS || dist > self.outer + EPS {
            return false;
        }
        let phi = Angle::new(d.line_angle());
        self.directions
            .arcs
            .iter()
            .any(|a| a.contains(phi) || a.contains(phi.shifted(0.5)))
    }
}

/// Algebraic cone membership for a single arc of half-width `a ≤ 1/4`.
///
/// The apex belongs to untruncated cones (inner radius 0) and is excluded otherwise.
pub fn in_cone(spec: &ConeSpec, y: Point) -> Result<bool> {
    if spec.directions.arcs.len() != 1 {
        return Err(Error::Precondition(
            "in_cone expects exactly one direction interval".into(),
        ));
    }
    let arc = spec.directions.arcs[0];
    if arc.half_width > 0.25 {
        return Err(Error::Precondition(format!(
            "half-width {} exceeds 1/4; the algebraic characterization needs sin(2πa) ≥ 0 on a monotone branch",
            arc.half_width
        )));
    }
    Ok(spec.contains(y))
}

/// A cone with precomputed arc normals, for hot loops over many points.
#[derive(Clone, Debug)]
pub struct Cone {
    apex: Point,
    inner: f64,
    outer: f64,
    all_lines: bool,
    arcs: Vec<(Point, f64)>,
}

impl Cone {
    pub fn from_spec(spec: &ConeSpec) -> Self {
        Self::new(spec.apex, &spec.directions, spec.inner, spec.outer)
    }

    pub fn new(apex: Point, directions: &DirectionSet, inner: f64, outer: f64) -> Self {
        // An arc of length ≥ 1/2 contains a representative of every line direction.
        let all_lines = directions.arcs.iter().any(|a| a.half_width >= 0.25);
        let arcs = directions
            .arcs
            .iter()
            .map(|a| {
                (
                    a.center.normal(),
                    (std::f64::consts::TAU * a.half_width).sin(),
                )
            })
            .collect();
        Cone {
            apex,
            inner,
            outer,
            all_lines,
            arcs,
        }
    }

    pub fn apex(&self) -> Point {
        self.apex
    }

    pub fn contains(&self, y: Point) -> bool {
        let d = y - self.apex;
        if d.x1 == 0.0 && d.x2 == 0.0 {
            return self.inner == 0.0 && (self.all_lines || !self.arcs.is_empty());
        }
        let dist = d.norm();
        if dist < self.inner - EPS || dist > self.outer + EPS {
            return false;
        }
        self.contains_direction(d, dist)
    }

    /// Direction test only, for a displacement `d` of length `dist > 0`.
    pub fn contains_direction(&self, d: Point, dist: f64) -> bool {
        if self.all_lines {
            return true;
        }
        self.arcs
            .iter()
            .any(|&(n, s)| d.dot(n).abs() <= s * dist + EPS)
    }
}

/// Constant of the cone-in-ball inclusion `X(x, αI, r) ⊂ B_I(x, Cαr)`.
pub const CONE_IN_BALL_CONSTANT: f64 = 8.0;

/// `cos(π(α+1)/(4α))`, the common factor in the lower bound
/// `sin(παH) − sin(πH) ≥ 2(α−1)H·cos(π(α+1)/(4α))` for `αH ≤ 1/2`.
fn widening_margin(alpha: f64) -> f64 {
    (std::f64::consts::PI * (alpha + 1.0) / (4.0 * alpha)).cos()
}

/// Radius factor `c(α)` with `B(y, c H(I) r) ⊂ X(x, αI, r/2, 4r)` whenever `y ∈ X(x, I, r, 2r)`.
pub fn ball_in_cone_factor(alpha: f64) -> f64 {
    assert!(alpha > 1.0, "ball-in-cone needs α > 1");
    ((alpha - 1.0) * widening_margin(alpha) / 2.0).min(0.5)
}

/// Separation factor `C(α)` with `X(x, I, r, R) ⊂ X(y, αI, r/2, 2R)` once `r > C d_I(x, y)`.
pub fn cone_in_cone_factor(alpha: f64) -> f64 {
    assert!(alpha > 1.0, "cone-in-cone needs α > 1");
    let c = (std::f64::consts::PI + 1.0) / ((alpha - 1.0) * widening_margin(alpha));
    c.max(5.0)
}

/// Factor `K(C)` with `d_I ≤ K d_J` whenever `I ⊂ CJ` and `J ⊂ CI`.
///
/// Center offset at most `C H(J)/2` and `H(I) ≥ H(J)/C` give `K = πC² + C + 1`.
pub fn comparability_factor(c: f64) -> f64 {
    std::f64::consts::PI * c * c + c + 1.0
}
