//! Anisotropic dyadic lattices over a grid base lattice, and Whitney
//! decompositions of open subsets of the line.
//!
//! Base cells are half-open grid squares of side `ρ^m` in the mapped
//! coordinates of an interval `J`, where `d_J` becomes Euclidean. Cell indices
//! are integer divisions of one finest-level index, so levels nest exactly.
//! Cubes built by [`descend`] are unions of Euclidean base cells grouped around
//! a greedy net in the metric `d_J`.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::torus::{d_metric, AngleInterval, AnisoFrame, Point, TriadicInterval};

/// Bits available for `mantissa · b^M` in the finest-level index.
const INDEX_BITS: u32 = 124;

/// `floor(u · scale)` computed exactly.
fn exact_floor_mul(u: f64, scale: i128) -> i128 {
    if u == 0.0 {
        return 0;
    }
    let bits = u.to_bits();
    let negative = bits >> 63 == 1;
    let exp_field = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i128;
    let (mant, exp) = if exp_field == 0 {
        (frac, -1074)
    } else {
        (frac | (1i128 << 52), exp_field - 1075)
    };
    let prod = if negative { -(mant * scale) } else { mant * scale };
    if exp >= 0 {
        prod << exp
    } else if exp <= -127 {
        if prod < 0 { -1 } else { 0 }
    } else {
        // Arithmetic shift rounds toward −∞.
        prod >> (-exp)
    }
}

fn ipow(base: u32, e: u32) -> i128 {
    (base as i128).pow(e)
}

pub type CellKey = (i128, i128);

/// Nested half-open grids in the mapped coordinates of an interval.
#[derive(Clone, Debug)]
pub struct BaseLattice {
    pub interval: AngleInterval,
    pub base: u32,
    /// Finest level whose indices are stored; coarser levels are exact quotients.
    pub finest: i32,
    /// Coarsest level allowed (`ρ^{coarsest}` may exceed 1).
    pub coarsest: i32,
    frame: AnisoFrame,
    mapped: Vec<Point>,
    fine: Vec<CellKey>,
}

impl BaseLattice {
    pub fn new(points: &[Point], interval: AngleInterval, base: u32) -> Result<Self> {
        if base < 2 {
            return Err(Error::Precondition(format!("scale base must be at least 2, got {base}")));
        }
        let frame = interval.frame();
        let mapped: Vec<Point> = points.iter().map(|&p| frame.to_mapped(p)).collect();
        if mapped.iter().any(|u| !u.is_finite()) {
            return Err(Error::Precondition("non-finite point in lattice carrier".into()));
        }
        let bits_per_level = (base as f64).log2();
        // `mantissa · b^finest` must fit the index; coarser levels only divide it.
        let finest = ((INDEX_BITS - 53) as f64 / bits_per_level).floor() as i32;
        let coarsest = finest - (126.0 / bits_per_level).floor() as i32;
        let scale = ipow(base, finest as u32);
        let fine = mapped
            .iter()
            .map(|u| (exact_floor_mul(u.x1, scale), exact_floor_mul(u.x2, scale)))
            .collect();
        Ok(BaseLattice {
            interval,
            base,
            finest,
            coarsest,
            frame,
            mapped,
            fine,
        })
    }

    /// The Euclidean lattice, mapped by the full interval centered at direction 0.
    pub fn euclidean(points: &[Point], base: u32) -> Result<Self> {
        Self::new(points, AngleInterval::full(), base)
    }

    pub fn len(&self) -> usize {
        self.mapped.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapped.is_empty()
    }

    pub fn mapped(&self, id: usize) -> Point {
        self.mapped[id]
    }

    pub fn rho(&self) -> f64 {
        1.0 / self.base as f64
    }

    fn check_level(&self, m: i32) -> Result<()> {
        if m > self.finest || m < self.coarsest {
            return Err(Error::Resource(format!(
                "grid level {m} outside the representable range [{}, {}] for base {}",
                self.coarsest, self.finest, self.base
            )));
        }
        Ok(())
    }

    pub fn cell_of(&self, id: usize, m: i32) -> Result<CellKey> {
        self.check_level(m)?;
        let d = ipow(self.base, (self.finest - m) as u32);
        let (a, b) = self.fine[id];
        Ok((a.div_euclid(d), b.div_euclid(d)))
    }

    /// Groups `ids` by their level-`m` cell.
    pub fn cells(&self, ids: &[usize], m: i32) -> Result<BTreeMap<CellKey, Vec<usize>>> {
        let mut out: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        for &id in ids {
            out.entry(self.cell_of(id, m)?).or_default().push(id);
        }
        Ok(out)
    }

    /// Member closest to the cell's geometric center in mapped coordinates; ties lexicographic.
    pub fn cell_center(&self, key: CellKey, m: i32, members: &[usize]) -> usize {
        let side = (self.base as f64).powi(-m);
        let c = Point::new((key.0 as f64 + 0.5) * side, (key.1 as f64 + 0.5) * side);
        *members
            .iter()
            .min_by(|&&a, &&b| {
                let (ua, ub) = (self.mapped[a], self.mapped[b]);
                ua.dist(c)
                    .total_cmp(&ub.dist(c))
                    .then(ua.x1.total_cmp(&ub.x1))
                    .then(ua.x2.total_cmp(&ub.x2))
                    .then(a.cmp(&b))
            })
            .expect("cells are nonempty")
    }

    pub fn frame(&self) -> &AnisoFrame {
        &self.frame
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaseCell {
    pub key: CellKey,
    pub level: i32,
    pub center_id: usize,
    pub atom_ids: Vec<usize>,
}

/// The level-`m` cells of the grid in the mapped coordinates of `interval`.
pub fn base_cells(points: &[Point], interval: AngleInterval, base: u32, m: i32) -> Result<Vec<BaseCell>> {
    let lat = BaseLattice::new(points, interval, base)?;
    let ids: Vec<usize> = (0..points.len()).collect();
    Ok(lat
        .cells(&ids, m)?
        .into_iter()
        .map(|(key, atom_ids)| BaseCell {
            key,
            level: m,
            center_id: lat.cell_center(key, m, &atom_ids),
            atom_ids,
        })
        .collect())
}

/// The unique `m` with `𝓗(J)ρ^{s+2} < 5ρ^m ≤ 𝓗(J)ρ^{s+1}`, where `s = k + l`.
pub fn side_level(width: f64, base: u32, scale: u32) -> i32 {
    let q = 5.0 / width;
    let b = base as f64;
    let mut j = 0i32;
    while b.powi(j) < q {
        j += 1;
    }
    while j > i32::MIN / 2 && b.powi(j - 1) >= q {
        j -= 1;
    }
    j + scale as i32 + 1
}

/// A cube of `𝔻_{k+l}(P, J)`: level-`base_level` cells grouped around the net point `center_id`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnisoCube {
    pub center_id: usize,
    pub center: Point,
    pub level: u32,
    pub interval: TriadicInterval,
    pub base_level: i32,
    pub atom_ids: Vec<usize>,
}

impl AnisoCube {
    /// Radius of `B_Q = B_{J_Q}(x_Q, 4ρ^k)`.
    pub fn ball_radius(&self, base: u32) -> f64 {
        4.0 * (base as f64).powi(-(self.level as i32))
    }
}

/// The cubes `𝔻_{k+l}(P, J)`, built over the Euclidean base lattice `lat`.
pub fn descend(
    lat: &BaseLattice,
    carrier: &[usize],
    interval: TriadicInterval,
    k: u32,
    l: u32,
) -> Result<Vec<AnisoCube>> {
    if carrier.is_empty() {
        return Err(Error::Precondition("cannot descend from an empty carrier".into()));
    }
    let s = k + l;
    let r = (lat.base as f64).powi(-(s as i32));
    let m = side_level(interval.length(), lat.base, s);
    let arc = interval.as_interval();
    let frame = arc.frame();
    let cells = lat.cells(carrier, m)?;
    let mut centers: Vec<(usize, Point, Vec<usize>)> = cells
        .into_iter()
        .map(|(key, ids)| {
            let c = lat.cell_center(key, m, &ids);
            (c, frame.to_mapped(lat_point(lat, c)), ids)
        })
        .collect();
    centers.sort_by(|a, b| a.1.x1.total_cmp(&b.1.x1).then(a.1.x2.total_cmp(&b.1.x2)).then(a.0.cmp(&b.0)));

    // Greedy maximal 3r-separated net, bucketed by 3r squares in J-mapped coordinates.
    let bucket = |u: Point| ((u.x1 / (3.0 * r)).floor() as i64, (u.x2 / (3.0 * r)).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut net: Vec<usize> = Vec::new();
    let near = |grid: &HashMap<(i64, i64), Vec<usize>>, u: Point| -> Vec<usize> {
        let (a, b) = bucket(u);
        let mut out: Vec<usize> = Vec::new();
        for da in -1..=1 {
            for db in -1..=1 {
                if let Some(v) = grid.get(&(a + da, b + db)) {
                    out.extend(v);
                }
            }
        }
        out.sort_unstable();
        out
    };
    for (i, c) in centers.iter().enumerate() {
        let far = near(&grid, c.1).iter().all(|&n| centers[n].1.dist(c.1) > 3.0 * r);
        if far {
            grid.entry(bucket(c.1)).or_default().push(i);
            net.push(i);
        }
    }
    let mut members: BTreeMap<usize, Vec<usize>> = net.iter().map(|&n| (n, Vec::new())).collect();
    for c in &centers {
        let cand = near(&grid, c.1);
        let d = |n: usize| centers[n].1.dist(c.1);
        let owner = cand
            .iter()
            .copied()
            .find(|&n| d(n) <= r)
            .or_else(|| cand.iter().copied().find(|&n| d(n) <= 3.0 * r))
            .ok_or_else(|| Error::invariant("maximal net", format!("cell center {} has no net point within 3ρ^{s}", c.0)))?;
        members.get_mut(&owner).expect("owner is a net point").extend(&c.2);
    }
    Ok(members
        .into_iter()
        .map(|(n, mut ids)| {
            ids.sort_unstable();
            AnisoCube {
                center_id: centers[n].0,
                center: lat_point(lat, centers[n].0),
                level: s,
                interval,
                base_level: m,
                atom_ids: ids,
            }
        })
        .collect())
}

fn lat_point(lat: &BaseLattice, id: usize) -> Point {
    lat.frame().from_mapped(lat.mapped(id))
}

/// `𝔻_k(P, J')` for a triadic child `J'` of `J_P`.
pub fn shatter(lat: &BaseLattice, cube: &AnisoCube, child: TriadicInterval) -> Result<Vec<AnisoCube>> {
    if child.parent().ok() != Some(cube.interval) {
        return Err(Error::Precondition(format!("{child} is not a triadic child of {}", cube.interval)));
    }
    descend(lat, &cube.atom_ids, child, cube.level, 0)
}

/// `𝔻_{k+1}(P, J_P)`.
pub fn children(lat: &BaseLattice, cube: &AnisoCube) -> Result<Vec<AnisoCube>> {
    descend(lat, &cube.atom_ids, cube.interval, cube.level, 1)
}

/// Measured lattice properties for one `descend` call.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeReport {
    pub partition: bool,
    /// `max d_J(a, x_Q)/ρ^{k+l}` over cubes and members; must be at most 4.
    pub max_outer_ratio: f64,
    /// Every carrier atom within `0.5ρ^{k+l}` of a center belongs to that cube.
    pub inner_ball_contained: bool,
    /// `min d_J(x_Q, x_Q')/ρ^{k+l}` over distinct cubes; must exceed 3.
    pub min_separation_ratio: f64,
    pub cube_count: usize,
}

impl LatticeReport {
    pub fn holds(&self) -> bool {
        self.partition && self.max_outer_ratio <= 4.0 && self.inner_ball_contained && self.min_separation_ratio > 3.0
    }
}

pub fn check_descend(points: &[Point], carrier: &[usize], cubes: &[AnisoCube], base: u32) -> LatticeReport {
    let mut seen: Vec<usize> = cubes.iter().flat_map(|q| q.atom_ids.iter().copied()).collect();
    seen.sort_unstable();
    let mut want = carrier.to_vec();
    want.sort_unstable();
    let partition = seen == want;
    let mut max_outer_ratio: f64 = 0.0;
    let mut inner_ball_contained = true;
    let mut min_separation_ratio = f64::INFINITY;
    for (i, q) in cubes.iter().enumerate() {
        let r = (base as f64).powi(-(q.level as i32));
        let arc = q.interval.as_interval();
        for &a in &q.atom_ids {
            max_outer_ratio = max_outer_ratio.max(d_metric(&arc, points[a], q.center) / r);
        }
        for &a in carrier {
            if d_metric(&arc, points[a], q.center) < 0.5 * r && q.atom_ids.binary_search(&a).is_err() {
                inner_ball_contained = false;
            }
        }
        for p in &cubes[i + 1..] {
            min_separation_ratio = min_separation_ratio.min(d_metric(&arc, p.center, q.center) / r);
        }
    }
    LatticeReport {
        partition,
        max_outer_ratio,
        inner_ball_contained,
        min_separation_ratio,
        cube_count: cubes.len(),
    }
}

/// `[index·2^{-level}, (index+1)·2^{-level})`; `level` may be negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DyadicInterval {
    pub level: i32,
    pub index: i64,
}

impl DyadicInterval {
    pub fn length(&self) -> f64 {
        2f64.powi(-self.level)
    }

    pub fn start(&self) -> f64 {
        self.index as f64 * self.length()
    }

    pub fn end(&self) -> f64 {
        (self.index + 1) as f64 * self.length()
    }

    pub fn containing(t: f64, level: i32) -> Self {
        DyadicInterval {
            level,
            index: (t * 2f64.powi(level)).floor() as i64,
        }
    }

    pub fn parent(&self) -> Self {
        DyadicInterval {
            level: self.level - 1,
            index: self.index.div_euclid(2),
        }
    }

    /// `(start − λ·len·(c−1)/2, end + …)` for the dilation by `c` about the center.
    pub fn dilate(&self, c: f64) -> (f64, f64) {
        let h = self.length() * (c - 1.0) / 2.0;
        (self.start() - h, self.end() + h)
    }
}

/// A finite union of disjoint open intervals, endpoints possibly infinite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpenSet {
    pub intervals: Vec<(f64, f64)>,
}

impl OpenSet {
    pub fn new(mut raw: Vec<(f64, f64)>) -> Result<Self> {
        raw.retain(|(a, b)| a < b);
        if raw.iter().any(|(a, b)| a.is_nan() || b.is_nan()) {
            return Err(Error::Precondition("NaN endpoint".into()));
        }
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (a, b) in raw {
            // Overlapping open intervals merge; touching ones keep the shared endpoint out.
            match out.last_mut() {
                Some(last) if a < last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        if out.len() == 1 && out[0].0 == f64::NEG_INFINITY && out[0].1 == f64::INFINITY {
            return Err(Error::Precondition("the open set must not be all of ℝ".into()));
        }
        Ok(OpenSet { intervals: out })
    }

    fn component(&self, t: f64) -> Option<(f64, f64)> {
        let k = self.intervals.partition_point(|&(a, _)| a < t);
        (k > 0 && t < self.intervals[k - 1].1).then(|| self.intervals[k - 1])
    }

    pub fn contains(&self, t: f64) -> bool {
        self.component(t).is_some()
    }

    /// Whether the half-open interval `[a, b)` lies in the set.
    pub fn contains_interval(&self, a: f64, b: f64) -> bool {
        self.component(a).is_some_and(|(_, hi)| b <= hi)
    }
}

/// Whether `3I ⊂ U`.
pub fn whitney_admissible(u: &OpenSet, i: DyadicInterval) -> bool {
    let (a, b) = i.dilate(3.0);
    u.contains_interval(a, b)
}

/// The Whitney interval of `U` containing `t`, or `None` when `t ∉ U`.
pub fn whitney_interval_at(u: &OpenSet, t: f64) -> Option<DyadicInterval> {
    let (lo, hi) = u.component(t)?;
    let dist = (t - lo).min(hi - t);
    // Any dyadic I ∋ t with 2|I| < dist has 3I ⊂ U.
    let mut i = DyadicInterval::containing(t, (-(dist / 4.0).log2()).ceil() as i32);
    while !whitney_admissible(u, i) {
        i = DyadicInterval::containing(t, i.level + 1);
    }
    while whitney_admissible(u, i.parent()) {
        i = i.parent();
    }
    Some(i)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhitneyDecomposition {
    pub set: OpenSet,
    /// Members of length at least `min_length` meeting the window, sorted by start.
    pub intervals: Vec<DyadicInterval>,
    pub min_length: f64,
    pub window: (f64, f64),
    /// Parts of `U ∩ window` covered only by shorter members.
    pub residual: Vec<(f64, f64)>,
}

/// Whitney intervals of `U` (maximal dyadic `I` with `3I ⊂ U`) down to length
/// `min_length` (a power of two), restricted to those meeting `window`.
pub fn whitney(u: &OpenSet, min_length: f64, window: (f64, f64)) -> Result<WhitneyDecomposition> {
    let lvl = -min_length.log2();
    if !(min_length > 0.0) || lvl.fract() != 0.0 {
        return Err(Error::Precondition(format!("min_length must be a power of two, got {min_length}")));
    }
    if !(window.0 < window.1 && window.0.is_finite() && window.1.is_finite()) {
        return Err(Error::Precondition("window must be a bounded interval".into()));
    }
    let level = lvl as i32;
    let mut intervals: Vec<DyadicInterval> = Vec::new();
    let mut residual: Vec<(f64, f64)> = Vec::new();
    for &(a, b) in &u.intervals {
        let (lo, hi) = (a.max(window.0), b.min(window.1));
        if lo >= hi {
            continue;
        }
        let mut cell = DyadicInterval::containing(lo, level);
        let mut gap_start: Option<f64> = None;
        while cell.start() < hi {
            let probe = cell.start().max(lo);
            let probe = if probe == a { 0.5 * (probe + cell.end().min(hi)) } else { probe };
            match whitney_interval_at(u, probe).filter(|w| w.level <= level) {
                Some(w) => {
                    if let Some(g) = gap_start.take() {
                        residual.push((g, w.start()));
                    }
                    if intervals.last() != Some(&w) {
                        intervals.push(w);
                    }
                    cell = DyadicInterval::containing(w.end(), level);
                }
                None => {
                    gap_start.get_or_insert(cell.start().max(lo));
                    cell.index += 1;
                }
            }
        }
        if let Some(g) = gap_start {
            residual.push((g, b.min(hi.max(g))));
        }
    }
    Ok(WhitneyDecomposition {
        set: u.clone(),
        intervals,
        min_length,
        window,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Angle;

    #[test]
    fn exact_index_matches_floor() {
        for (u, s) in [(0.3, 16), (-0.3, 16), (1.0, 2), (-1.0, 2), (1e-20, 1 << 40), (-2.5, 3)] {
            assert_eq!(exact_floor_mul(u, s) as f64, (u * s as f64).floor());
        }
    }

    #[test]
    fn base_cell_examples() {
        let pts = [Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let cells = base_cells(&pts, AngleInterval::full(), 2, 0).unwrap();
        assert_eq!(cells.len(), 2);
        // 𝓗(J) = 1/4 centered at direction 0: a vertical offset 0.3 is 1.2 in d_J.
        let j = AngleInterval::new(Angle::new(0.0), 0.125).unwrap();
        let pair = [Point::new(0.1, 0.05), Point::new(0.1, 0.35)];
        assert!((d_metric(&j, pair[0], pair[1]) - 1.2).abs() < 1e-12);
        let lat = BaseLattice::new(&pair, j, 2).unwrap();
        assert_eq!(lat.cell_of(0, -1).unwrap(), lat.cell_of(1, -1).unwrap());
        assert_ne!(lat.cell_of(0, 0).unwrap(), lat.cell_of(1, 0).unwrap());
    }

    #[test]
    fn side_level_rule() {
        for base in [2u32, 3, 16] {
            for lev in 0..6u32 {
                let h = TriadicInterval::new(lev, 0).unwrap().length();
                for s in 0..5 {
                    let m = side_level(h, base, s);
                    let rho = 1.0 / base as f64;
                    assert!(h * rho.powi(s as i32 + 2) < 5.0 * rho.powi(m));
                    assert!(5.0 * rho.powi(m) <= h * rho.powi(s as i32 + 1));
                }
            }
        }
        // Re-shattering by a grandchild shrinks 𝓗(J) by 9, so m grows by 4 when ρ = 1/2.
        let m0 = side_level(1.0 / 3.0, 2, 2);
        let m2 = side_level(1.0 / 27.0, 2, 2);
        assert_eq!(m2 - m0, 4);
    }

    #[test]
    fn descend_examples() {
        let j = TriadicInterval::ROOT;
        let single = [Point::new(0.2, 0.3)];
        let lat = BaseLattice::euclidean(&single, 2).unwrap();
        let cubes = descend(&lat, &[0], j, 1, 0).unwrap();
        assert_eq!(cubes.len(), 1);
        assert_eq!(cubes[0].atom_ids, vec![0]);

        let s = 4u32;
        let r = 0.5f64.powi(s as i32);
        let line: Vec<Point> = (0..6).map(|i| Point::new(0.1 + 3.5 * r * i as f64, 0.0)).collect();
        let lat = BaseLattice::euclidean(&line, 2).unwrap();
        let ids: Vec<usize> = (0..6).collect();
        let cubes = descend(&lat, &ids, j, s, 0).unwrap();
        assert_eq!(cubes.len(), 6);

        let close = [Point::new(0.1, 0.0), Point::new(0.1 + 0.8 * r, 0.0)];
        let lat = BaseLattice::euclidean(&close, 2).unwrap();
        let cubes = descend(&lat, &[0, 1], j, s, 0).unwrap();
        assert_eq!(cubes.len(), 1);
        assert!(check_descend(&close, &[0, 1], &cubes, 2).holds());
    }

    #[test]
    fn shatter_and_children_partition() {
        let pts: Vec<Point> = (0..200)
            .map(|i| {
                let t = i as f64 / 200.0;
                Point::new(t, 0.3 * (7.0 * t).sin())
            })
            .collect();
        let lat = BaseLattice::euclidean(&pts, 2).unwrap();
        let ids: Vec<usize> = (0..pts.len()).collect();
        let j = TriadicInterval::new(1, 0).unwrap();
        let top = descend(&lat, &ids, j, 1, 0).unwrap();
        assert!(check_descend(&pts, &ids, &top, 2).holds());
        for q in &top {
            let kids = shatter(&lat, q, j.middle_child()).unwrap();
            assert!(kids.iter().all(|c| c.level == q.level && c.interval == j.middle_child()));
            assert!(check_descend(&pts, &q.atom_ids, &kids, 2).holds());
            let next = children(&lat, q).unwrap();
            assert!(check_descend(&pts, &q.atom_ids, &next, 2).holds());
        }
        assert!(shatter(&lat, &top[0], TriadicInterval::new(2, 8).unwrap()).is_err());
        assert!(descend(&lat, &[], j, 0, 0).is_err());
    }

    #[test]
    fn whitney_examples() {
        let u = OpenSet::new(vec![(0.0, 1.0)]).unwrap();
        let w = whitney(&u, 2f64.powi(-10), (0.0, 1.0)).unwrap();
        assert!(w.intervals.contains(&DyadicInterval { level: 3, index: 2 }));
        assert_eq!(whitney_interval_at(&u, 0.3), Some(DyadicInterval { level: 3, index: 2 }));
        assert!(OpenSet::new(vec![(f64::NEG_INFINITY, f64::INFINITY)]).is_err());

        let punctured = OpenSet::new(vec![(f64::NEG_INFINITY, 0.0), (0.0, f64::INFINITY)]).unwrap();
        for n in 1..20 {
            let t = 2f64.powi(-n) * 1.5;
            let r = whitney_interval_at(&punctured, t).unwrap();
            let l = whitney_interval_at(&punctured, -t).unwrap();
            // Half-open intervals make the two sides agree only up to a factor 2.
            for w in [r, l] {
                assert!(w.length() <= t && w.length() >= t / 8.0);
            }
            assert!(r.length() / l.length() <= 2.0 && l.length() / r.length() <= 2.0);
        }
    }

    #[test]
    fn whitney_residual_reaches_component_ends() {
        let u = OpenSet::new(vec![(-0.3, 0.7)]).unwrap();
        let w = whitney(&u, 2f64.powi(-6), (-2.0, 2.0)).unwrap();
        assert_eq!(w.residual.first().unwrap().0, -0.3);
        assert_eq!(w.residual.last().unwrap().1, 0.7);
        let mut ends: Vec<(f64, f64)> = w.intervals.iter().map(|i| (i.start(), i.end())).chain(w.residual.clone()).collect();
        ends.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!(ends.windows(2).all(|p| p[0].1 == p[1].0));
    }
}
