//! Finite models of one-dimensional sets: unions of segments, unions of dyadic
//! squares (4-corners Cantor generations), their skeletons, atom
//! discretizations, and sampled regularity/content estimators.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{Angle, Point, EPS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Precondition("segment endpoints must be finite".into()));
        }
        if a == b {
            return Err(Error::Precondition(format!("degenerate segment at {a}")));
        }
        Ok(Segment { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.dist(self.b)
    }

    /// Direction of the supporting line, in `[0, 1/2)`.
    pub fn direction(&self) -> Angle {
        Angle::new((self.b - self.a).line_angle())
    }

    pub fn is_horizontal(&self) -> bool {
        self.a.x2 == self.b.x2
    }

    pub fn is_vertical(&self) -> bool {
        self.a.x1 == self.b.x1
    }

    pub fn midpoint(&self) -> Point {
        self.a.lerp(self.b, 0.5)
    }

    /// Length of `self ∩ B(x, r)`.
    pub fn length_in_ball(&self, x: Point, r: f64) -> f64 {
        let len = self.length();
        let u = (1.0 / len) * (self.b - self.a);
        let w = self.a - x;
        // |w + t u|² ≤ r²  ⇔  (t + w·u)² ≤ r² − h², h the distance to the line.
        let p = w.dot(u);
        let h = w.x1 * u.x2 - w.x2 * u.x1;
        let disc = r * r - h * h;
        if disc <= 0.0 {
            return 0.0;
        }
        let s = disc.sqrt();
        let (lo, hi) = (-p - s, -p + s);
        if lo >= 0.0 && hi <= len {
            return 2.0 * s;
        }
        (hi.min(len) - lo.max(0.0)).max(0.0)
    }

    /// Euclidean distance from `x` to the segment.
    pub fn distance_to(&self, x: Point) -> f64 {
        let d = self.b - self.a;
        let t = ((x - self.a).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
        self.a.lerp(self.b, t).dist(x)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentUnion {
    pub segments: Vec<Segment>,
    pub parallel_hint: Option<Angle>,
}

impl SegmentUnion {
    pub fn new(segments: Vec<Segment>) -> Self {
        SegmentUnion {
            segments,
            parallel_hint: None,
        }
    }

    /// Records a common direction after checking every segment against it.
    pub fn with_parallel_hint(mut self, theta: Angle) -> Result<Self> {
        for (i, s) in self.segments.iter().enumerate() {
            let d = s.b - s.a;
            let off = d.dot(theta.normal()).abs() / d.norm();
            if off > EPS {
                return Err(Error::Precondition(format!(
                    "segment {i} is not parallel to direction {theta}"
                )));
            }
        }
        self.parallel_hint = Some(theta);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn min_segment_length(&self) -> Option<f64> {
        self.segments.iter().map(Segment::length).reduce(f64::min)
    }

    pub fn endpoints(&self) -> impl Iterator<Item = Point> + '_ {
        self.segments.iter().flat_map(|s| [s.a, s.b])
    }

    /// `(min corner, max corner)` of the bounding box.
    pub fn bounding_box(&self) -> Option<(Point, Point)> {
        bounding_box(self.endpoints())
    }

    /// Exact diameter; the farthest pair of a segment union is a pair of endpoints.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self.endpoints().collect();
        let mut best = 0.0f64;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max(pts[i].dist(pts[j]));
            }
        }
        best
    }

    pub fn length_in_ball(&self, x: Point, r: f64) -> f64 {
        self.segments.iter().map(|s| s.length_in_ball(x, r)).sum()
    }

    pub fn distance_to(&self, x: Point) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Arclength measure discretized into atoms of length at most `pitch`,
    /// placed at the midpoints of equal sub-pieces of each segment.
    pub fn atoms(&self, pitch: f64) -> Result<DiscreteMeasure> {
        if !(pitch > 0.0) {
            return Err(Error::Precondition(format!("atom pitch must be positive, got {pitch}")));
        }
        let mut atoms = Vec::new();
        let mut segment_of = Vec::new();
        for (si, s) in self.segments.iter().enumerate() {
            let len = s.length();
            let n = (len / pitch).ceil().max(1.0) as usize;
            let w = len / n as f64;
            for i in 0..n {
                let t = (i as f64 + 0.5) / n as f64;
                atoms.push(Atom {
                    point: s.a.lerp(s.b, t),
                    weight: w,
                });
                segment_of.push(si);
            }
        }
        let mut m = DiscreteMeasure::new(atoms)?;
        m.source_segment = Some(segment_of);
        Ok(m)
    }

    /// Default pitch: shortest segment length over 64.
    pub fn default_pitch(&self) -> Option<f64> {
        self.min_segment_length().map(|l| l / 64.0)
    }
}

fn bounding_box(points: impl Iterator<Item = Point>) -> Option<(Point, Point)> {
    points.fold(None, |acc, p| match acc {
        None => Some((p, p)),
        Some((lo, hi)) => Some((
            Point::new(lo.x1.min(p.x1), lo.x2.min(p.x2)),
            Point::new(hi.x1.max(p.x1), hi.x2.max(p.x2)),
        )),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Point,
    pub weight: f64,
}

/// Finitely supported measure with positive weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<Atom>,
    /// Index of the segment each atom was cut from, when built from a segment union.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_segment: Option<Vec<usize>>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Precondition("a discrete measure needs at least one atom".into()));
        }
        for (i, a) in atoms.iter().enumerate() {
            if !(a.weight > 0.0 && a.weight.is_finite()) || !a.point.is_finite() {
                return Err(Error::Precondition(format!(
                    "atom {i} has weight {} at {}",
                    a.weight, a.point
                )));
            }
        }
        Ok(DiscreteMeasure {
            atoms,
            source_segment: None,
        })
    }

    pub fn unit_atoms(points: &[Point]) -> Result<Self> {
        Self::new(
            points
                .iter()
                .map(|&point| Atom { point, weight: 1.0 })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.atoms.iter().map(|a| a.point)
    }

    pub fn total_mass(&self) -> f64 {
        crate::exact::exact_sum(&self.atoms.iter().map(|a| a.weight).collect::<Vec<_>>())
    }

    /// Exact mass of the atoms with the given indices.
    pub fn mass_of(&self, ids: impl IntoIterator<Item = usize>) -> f64 {
        let w: Vec<f64> = ids.into_iter().map(|i| self.atoms[i].weight).collect();
        crate::exact::exact_sum(&w)
    }
}

/// A union of closed dyadic squares `[i 2^{-k}, (i+1) 2^{-k}] × [j 2^{-k}, (j+1) 2^{-k}]`
/// inside the unit square.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicSquareSet {
    pub level: u32,
    pub cells: BTreeSet<(u64, u64)>,
}

/// Largest supported dyadic level (cell coordinates stay exact in `f64`).
pub const MAX_DYADIC_LEVEL: u32 = 48;

impl DyadicSquareSet {
    pub fn new(level: u32, cells: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        if level > MAX_DYADIC_LEVEL {
            return Err(Error::Resource(format!("dyadic level {level} exceeds {MAX_DYADIC_LEVEL}")));
        }
        let n = 1u64 << level;
        let cells: BTreeSet<(u64, u64)> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(Error::Precondition("square set has no cells".into()));
        }
        if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| i >= n || j >= n) {
            return Err(Error::Precondition(format!(
                "cell ({i}, {j}) outside the level-{level} grid"
            )));
        }
        Ok(DyadicSquareSet { level, cells })
    }

    pub fn side(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_center(&self, (i, j): (u64, u64)) -> Point {
        let s = self.side();
        Point::new((i as f64 + 0.5) * s, (j as f64 + 0.5) * s)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let s = self.side();
        let (lo, hi) = bounding_box(self.cells.iter().map(|&(i, j)| Point::new(i as f64, j as f64)))
            .expect("nonempty");
        (
            Point::new(lo.x1 * s, lo.x2 * s),
            Point::new((hi.x1 + 1.0) * s, (hi.x2 + 1.0) * s),
        )
    }

    pub fn diameter(&self) -> f64 {
        let pts: Vec<Point> = self
            .cells
            .iter()
            .flat_map(|&(i, j)| {
                let s = self.side();
                let (x, y) = (i as f64 * s, j as f64 * s);
                [
                    Point::new(x, y),
                    Point::new(x + s, y),
                    Point::new(x, y + s),
                    Point::new(x + s, y + s),
                ]
            })
            .collect();
        // The farthest pair is a pair of hull vertices.
        let hull = convex_hull(&pts);
        let mut best = 0.0f64;
        for i in 0..hull.len() {
            for j in i + 1..hull.len() {
                best = best.max(hull[i].dist(hull[j]));
            }
        }
        best
    }

    /// Chebyshev distance from `p` to the union of squares.
    pub fn chebyshev_distance(&self, p: Point) -> f64 {
        let s = self.side();
        self.cells
            .iter()
            .map(|&(i, j)| {
                let (x0, y0) = (i as f64 * s, j as f64 * s);
                let dx = (x0 - p.x1).max(p.x1 - x0 - s).max(0.0);
                let dy = (y0 - p.x2).max(p.x2 - y0 - s).max(0.0);
                dx.max(dy)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.chebyshev_distance(p) == 0.0
    }
}

/// Andrew's monotone chain.
fn convex_hull(pts: &[Point]) -> Vec<Point> {
    let mut p: Vec<Point> = pts.to_vec();
    p.sort_by(|a, b| a.x1.total_cmp(&b.x1).then(a.x2.total_cmp(&b.x2)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: Point, a: Point, b: Point| (a.x1 - o.x1) * (b.x2 - o.x2) - (a.x2 - o.x2) * (b.x1 - o.x1);
    let mut lower: Vec<Point> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Largest generation accepted by [`four_corners`].
pub const MAX_FOUR_CORNERS_GENERATION: u32 = 12;

/// `n`-th generation of the 4-corners Cantor set: the `4^n` squares of side
/// `4^{-n}` whose lower-left corners have base-4 digits in `{0, 3}`.
pub fn four_corners(n: u32) -> Result<DyadicSquareSet> {
    if n > MAX_FOUR_CORNERS_GENERATION {
        return Err(Error::Resource(format!(
            "four_corners({n}) would have 4^{n} cells; limit is generation {MAX_FOUR_CORNERS_GENERATION}"
        )));
    }
    let mut coords = vec![0u64];
    for _ in 0..n {
        coords = coords
            .iter()
            .flat_map(|&c| [4 * c, 4 * c + 3])
            .collect();
    }
    let cells = coords
        .iter()
        .flat_map(|&i| coords.iter().map(move |&j| (i, j)));
    DyadicSquareSet::new(2 * n, cells)
}

/// Boundary edges of every cell, each shared edge kept once.
pub fn skeleton(e: &DyadicSquareSet) -> SegmentUnion {
    let mut horizontal: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut vertical: BTreeSet<(u64, u64)> = BTreeSet::new();
    for &(i, j) in &e.cells {
        horizontal.insert((i, j));
        horizontal.insert((i, j + 1));
        vertical.insert((i, j));
        vertical.insert((i + 1, j));
    }
    let s = e.side();
    let p = |i: u64, j: u64| Point::new(i as f64 * s, j as f64 * s);
    let mut segments = Vec::with_capacity(horizontal.len() + vertical.len());
    // Order: horizontal edges by (row, column), then vertical edges by (column, row).
    let mut h: Vec<_> = horizontal.into_iter().collect();
    h.sort_by_key(|&(i, j)| (j, i));
    for (i, j) in h {
        segments.push(Segment { a: p(i, j), b: p(i + 1, j) });
    }
    for (i, j) in vertical {
        segments.push(Segment { a: p(i, j), b: p(i, j + 1) });
    }
    SegmentUnion::new(segments)
}

/// Splits an axis-parallel union into its horizontal and vertical parts.
pub fn split_parallel(s: &SegmentUnion) -> Result<(SegmentUnion, SegmentUnion)> {
    let mut h = Vec::new();
    let mut v = Vec::new();
    for (i, seg) in s.segments.iter().enumerate() {
        if seg.is_horizontal() {
            h.push(*seg);
        } else if seg.is_vertical() {
            v.push(*seg);
        } else {
            return Err(Error::Precondition(format!(
                "segment {i} from {} to {} is neither horizontal nor vertical",
                seg.a, seg.b
            )));
        }
    }
    Ok((
        SegmentUnion {
            segments: h,
            parallel_hint: Some(Angle::new(0.0)),
        },
        SegmentUnion {
            segments: v,
            parallel_hint: Some(Angle::new(0.25)),
        },
    ))
}

/// A set model accepted by the regularity and content estimators.
#[derive(Clone, Debug, PartialEq)]
pub enum SetModel {
    Segments(SegmentUnion),
    Squares(DyadicSquareSet),
}

impl SetModel {
    pub fn diameter(&self) -> f64 {
        match self {
            SetModel::Segments(s) => s.diameter(),
            SetModel::Squares(q) => q.diameter(),
        }
    }

    /// Mass of `E ∩ B(x, r)`: exact arclength for segments; for squares each
    /// cell whose center lies in the ball counts its side length.
    pub fn mass_in_ball(&self, x: Point, r: f64) -> f64 {
        match self {
            SetModel::Segments(s) => s.length_in_ball(x, r),
            SetModel::Squares(q) => {
                let r2 = r * r;
                let n = q
                    .cells
                    .iter()
                    .filter(|&&c| (q.cell_center(c) - x).norm_sq() <= r2)
                    .count();
                n as f64 * q.side()
            }
        }
    }

    fn sample_point(&self, rng: &mut ChaCha8Rng, cumulative: &[f64]) -> Point {
        let total = *cumulative.last().expect("nonempty");
        let u = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1);
        match self {
            SetModel::Segments(s) => {
                let seg = s.segments[k];
                seg.a.lerp(seg.b, rng.random::<f64>())
            }
            SetModel::Squares(q) => {
                let &(i, j) = q.cells.iter().nth(k).expect("index in range");
                let s = q.side();
                Point::new(
                    (i as f64 + rng.random::<f64>()) * s,
                    (j as f64 + rng.random::<f64>()) * s,
                )
            }
        }
    }
}

/// Sampled Ahlfors-regularity constant
/// `max max(H(E∩B(x,r))/r, r/H(E∩B(x,r)))` over random `x ∈ E` and
/// log-uniform `r` in `[r_min, diam E)`.
///
/// `r_min` is `diam · 2^{-20}` for segments and the cell side for squares (the
/// cell-counting mass is meaningless below one cell). Samples are generated
/// sequentially from `seed`, so a larger `sample_count` extends the same
/// sample sequence and the estimate is nondecreasing in it.
pub fn ahlfors_constant(e: &SetModel, sample_count: usize, seed: u64) -> Result<f64> {
    if sample_count == 0 {
        return Err(Error::Precondition("sample_count must be at least 1".into()));
    }
    let cumulative: Vec<f64> = match e {
        SetModel::Segments(s) => {
            if s.is_empty() {
                return Err(Error::Precondition("empty segment union".into()));
            }
            s.segments
                .iter()
                .scan(0.0, |acc, seg| {
                    *acc += seg.length();
                    Some(*acc)
                })
                .collect()
        }
        SetModel::Squares(q) => (1..=q.len()).map(|k| k as f64).collect(),
    };
    let diam = e.diameter();
    let r_min = match e {
        SetModel::Segments(_) => diam * 2f64.powi(-20),
        SetModel::Squares(q) => q.side().min(diam),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<(Point, f64)> = (0..sample_count)
        .map(|_| {
            let x = e.sample_point(&mut rng, &cumulative);
            let u: f64 = rng.random();
            let r = r_min * (diam / r_min).powf(u);
            (x, r)
        })
        .collect();
    let worst = samples
        .par_iter()
        .map(|&(x, r)| {
            let m = e.mass_in_ball(x, r);
            if m <= 0.0 {
                f64::INFINITY
            } else {
                (m / r).max(r / m)
            }
        })
        .reduce(|| 1.0, f64::max);
    Ok(worst.max(1.0))
}

/// A covering piece: a small set of known center, circumradius and mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub center: Point,
    pub radius: f64,
    pub weight: f64,
}

/// Pieces of a segment union cut at `pitch`.
pub fn segment_pieces(s: &SegmentUnion, pitch: f64) -> Result<Vec<Piece>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let m = s.atoms(pitch)?;
    let src = m.source_segment.as_ref().expect("segment atoms");
    let mut counts = vec![0usize; s.len()];
    for &k in src {
        counts[k] += 1;
    }
    Ok(m
        .atoms
        .iter()
        .zip(src)
        .map(|(a, &k)| Piece {
            center: a.point,
            radius: s.segments[k].length() / counts[k] as f64 / 2.0,
            weight: a.weight,
        })
        .collect())
}

/// One piece per cell.
pub fn square_pieces(q: &DyadicSquareSet) -> Vec<Piece> {
    let s = q.side();
    q.cells
        .iter()
        .map(|&c| Piece {
            center: q.cell_center(c),
            radius: s * std::f64::consts::FRAC_1_SQRT_2,
            weight: s,
        })
        .collect()
}

/// Candidate centers examined per greedy round.
const CONTENT_CANDIDATES: usize = 256;

/// Greedy upper estimate of the Hausdorff content `H_∞` of the union of
/// `pieces`, using balls of radius at least `min_radius`.
///
/// Each round places the ball (center on an uncovered piece, radius from a
/// geometric ladder) that covers the most uncovered mass per unit radius,
/// preferring the larger ball on ties. Ball radii are enlarged by the largest
/// covered piece radius, so the result is the cost of a genuine cover of the
/// pieces and bounds `H_∞` from above. The single ball circumscribing the
/// bounding box is always a candidate answer.
pub fn hausdorff_content(pieces: &[Piece], min_radius: f64) -> f64 {
    if pieces.is_empty() {
        return 0.0;
    }
    let (lo, hi) = bounding_box(pieces.iter().flat_map(|p| {
        [
            p.center - Point::new(p.radius, p.radius),
            p.center + Point::new(p.radius, p.radius),
        ]
    }))
    .expect("nonempty");
    let single = (0.5 * (hi - lo).norm()).max(min_radius);
    let max_piece = pieces.iter().map(|p| p.radius).fold(0.0, f64::max);
    let base = min_radius.max(max_piece).max(single * 1e-9);
    let mut ladder = Vec::new();
    let mut r = base;
    while r < 2.0 * single {
        ladder.push(r);
        r *= std::f64::consts::SQRT_2;
    }
    ladder.push(2.0 * single);

    let mut uncovered: Vec<usize> = (0..pieces.len()).collect();
    let mut total = 0.0;
    while !uncovered.is_empty() {
        let step = (uncovered.len() / CONTENT_CANDIDATES).max(1);
        let candidates: Vec<usize> = uncovered.iter().step_by(step).copied().collect();
        let best = candidates
            .par_iter()
            .map(|&c| {
                let center = pieces[c].center;
                let mut d: Vec<(f64, f64)> = uncovered
                    .iter()
                    .map(|&i| (pieces[i].center.dist(center), pieces[i].weight))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut best = (f64::NEG_INFINITY, 0.0, c);
                let mut acc = 0.0;
                let mut k = 0;
                for &rad in &ladder {
                    while k < d.len() && d[k].0 <= rad {
                        acc += d[k].1;
                        k += 1;
                    }
                    let cost = rad + max_piece;
                    let score = acc / cost;
                    if score >= best.0 {
                        best = (score, rad, c);
                    }
                }
                best
            })
            .reduce(
                || (f64::NEG_INFINITY, 0.0, usize::MAX),
                |a, b| {
                    if b.0 > a.0 || (b.0 == a.0 && (b.1 > a.1 || (b.1 == a.1 && b.2 < a.2))) {
                        b
                    } else {
                        a
                    }
                },
            );
        let (_, rad, c) = best;
        let center = pieces[c].center;
        let before = uncovered.len();
        let mut cover_max = 0.0f64;
        uncovered.retain(|&i| {
            let inside = pieces[i].center.dist(center) <= rad;
            if inside {
                cover_max = cover_max.max(pieces[i].radius);
            }
            !inside
        });
        debug_assert!(uncovered.len() < before);
        total += (rad + cover_max).max(min_radius);
        if total >= single {
            return single;
        }
    }
    total.min(single)
}

/// A polygonal curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<Point>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Precondition("a polyline needs at least two vertices".into()));
        }
        Ok(Polyline { vertices })
    }

    pub fn as_segments(&self) -> SegmentUnion {
        SegmentUnion::new(
            self.vertices
                .windows(2)
                .filter(|w| w[0] != w[1])
                .map(|w| Segment { a: w[0], b: w[1] })
                .collect(),
        )
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        self.as_segments().distance_to(p)
    }
}

/// Pieces of `E ∩ Γ(3δ)`: pieces of `E` whose center is within `3δ` of the curve.
pub fn pieces_near_curve(e_pieces: &[Piece], curve: &Polyline, delta: f64) -> Vec<Piece> {
    let segs = curve.as_segments();
    e_pieces
        .par_iter()
        .filter(|p| segs.distance_to(p.center) <= 3.0 * delta)
        .copied()
        .collect()
}

/// Pieces of `E(δ) ∩ Γ`, with `E(δ)` realized on the dyadic grid of level
/// `⌈log₂(1/δ)⌉`: a curve piece counts when its grid cell lies within
/// Chebyshev distance `δ` of `E`.
pub fn curve_in_neighborhood(
    curve: &Polyline,
    delta: f64,
    chebyshev_to_e: impl Fn(Point) -> f64 + Sync,
    pitch: f64,
) -> Result<Vec<Piece>> {
    if !(delta > 0.0) {
        return Err(Error::Precondition("neighborhood width must be positive".into()));
    }
    let level = (1.0 / delta).log2().ceil().max(0.0) as i32;
    let side = 0.5f64.powi(level);
    let pieces = segment_pieces(&curve.as_segments(), pitch)?;
    Ok(pieces
        .into_par_iter()
        .filter(|p| {
            let i = (p.center.x1 / side).floor();
            let j = (p.center.x2 / side).floor();
            // Chebyshev distance from the cell to E: distance from the cell center minus half a side.
            let c = Point::new((i + 0.5) * side, (j + 0.5) * side);
            chebyshev_to_e(c) - 0.5 * side <= delta
        })
        .collect())
}

/// Chebyshev distance from `p` to a segment union.
pub fn chebyshev_distance_segments(s: &SegmentUnion, p: Point) -> f64 {
    s.segments
        .iter()
        .map(|seg| chebyshev_to_segment(seg, p))
        .fold(f64::INFINITY, f64::min)
}

/// `min_t ‖a + t(b−a) − p‖_∞` over `t ∈ [0, 1]`; the objective is convex and
/// piecewise linear in `t`, minimized at an endpoint or where the two
/// coordinate gaps are equal in magnitude.
fn chebyshev_to_segment(seg: &Segment, p: Point) -> f64 {
    let d = seg.b - seg.a;
    let w = seg.a - p;
    let f = |t: f64| (w.x1 + t * d.x1).abs().max((w.x2 + t * d.x2).abs());
    let mut best = f(0.0).min(f(1.0));
    for t in [
        -w.x1 / d.x1,
        -w.x2 / d.x2,
        -(w.x1 - w.x2) / (d.x1 - d.x2),
        -(w.x1 + w.x2) / (d.x1 + d.x2),
    ] {
        if t.is_finite() && (0.0..=1.0).contains(&t) {
            best = best.min(f(t));
        }
    }
    best
}
