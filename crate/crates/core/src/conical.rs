//! Cone masses, conical energies, bad scales, and the selection of points and
//! directions along which projections of the measure stay bounded.
//!
//! Scales use `ρ = 1/b` for an integer base `b ≥ 2`, so the normalized annulus
//! masses `μ(X(x, G, ρ^{k+1}, ρ^k)) / ρ^k = b^k μ(…)` are exact integer multiples
//! of exactly accumulated masses.
//!
//! Annuli are half-open: an atom at distance `s` from the apex sits in scale
//! `k` when `ρ^{k+1} < s ≤ ρ^k`. The apex itself belongs to no annulus.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::projection::{project_segments, ProjectedMeasure};
use crate::sets::{DiscreteMeasure, Segment, SegmentUnion};
use crate::torus::{coarsen_triadic, Angle, AngleInterval, Cone, DirectionSet, Point, TriadicInterval, EPS};

/// `b` with `ρ = 1/b`; rejects values of `ρ` that are not reciprocals of integers `≥ 2`.
pub fn scale_base(rho: f64) -> Result<u32> {
    if !(rho > 0.0 && rho <= 0.5) {
        return Err(Error::Precondition(format!("ρ = {rho} outside (0, 1/2]")));
    }
    let b = (1.0 / rho).round();
    if ((1.0 / rho) - b).abs() > 1e-9 || b > u32::MAX as f64 {
        return Err(Error::Precondition(format!("ρ = {rho} is not 1/b for an integer b")));
    }
    Ok(b as u32)
}

fn base_pow(base: u32, k: u32) -> Result<u64> {
    (base as u64)
        .checked_pow(k)
        .ok_or_else(|| Error::Resource(format!("{base}^{k} overflows the exact scale weights")))
}

/// The scale `k ≥ 0` with `ρ^{k+1} < dist ≤ ρ^k`, or `None` for `dist = 0` or `dist > 1`.
pub fn annulus_scale(dist: f64, base: u32) -> Option<u32> {
    if !(dist > 0.0 && dist <= 1.0 && dist.is_finite()) {
        return None;
    }
    let b = base as f64;
    let mut k = ((-dist.ln() / b.ln()).floor().max(0.0) as i32).min(1000);
    while k > 0 && dist * b.powi(k) > 1.0 {
        k -= 1;
    }
    while dist * b.powi(k + 1) <= 1.0 {
        k += 1;
    }
    Some(k as u32)
}

/// Whether the distance range `[lo, hi]` meets the annulus of scale `k`.
fn range_meets_scale(lo: f64, hi: f64, base: u32, k: u32) -> bool {
    let b = base as f64;
    lo * b.powi(k as i32) <= 1.0 && hi * b.powi(k as i32 + 1) > 1.0
}

/// Line-direction membership for a direction set, fast for many arcs.
#[derive(Clone, Debug)]
pub struct DirectionIndex {
    cone: Option<Cone>,
    pieces: Vec<(f64, f64)>,
}

/// Above this many arcs membership switches from the algebraic test to a sorted search.
const ALGEBRAIC_ARC_LIMIT: usize = 16;

impl DirectionIndex {
    pub fn new(set: &DirectionSet) -> Self {
        if set.arcs.len() <= ALGEBRAIC_ARC_LIMIT {
            DirectionIndex {
                cone: Some(Cone::new(Point::ORIGIN, set, 0.0, f64::INFINITY)),
                pieces: Vec::new(),
            }
        } else {
            DirectionIndex {
                cone: None,
                pieces: set.pieces(),
            }
        }
    }

    /// Whether the line spanned by `d` (of length `dist > 0`) has a direction in the set.
    pub fn admits(&self, d: Point, dist: f64) -> bool {
        if let Some(c) = &self.cone {
            return c.contains_direction(d, dist);
        }
        let phi = d.line_angle();
        self.contains_angle(phi) || self.contains_angle(phi + 0.5)
    }

    fn contains_angle(&self, phi: f64) -> bool {
        let p = &self.pieces;
        let k = p.partition_point(|&(s, _)| s <= phi + EPS);
        let inside = k > 0 && phi <= p[k - 1].1 + EPS;
        // Wrap-around: an arc ending at 1 also touches 0.
        inside
            || (phi < EPS && p.last().is_some_and(|&(_, e)| e >= 1.0 - EPS))
            || (phi > 1.0 - EPS && p.first().is_some_and(|&(s, _)| s <= EPS))
    }
}

/// `μ(X(x, G, r, R))` with closed membership; the apex counts when `r = 0`.
pub fn cone_mass(mu: &DiscreteMeasure, x: Point, g: &DirectionSet, r: f64, big_r: f64) -> Result<f64> {
    if !(r >= 0.0 && big_r > r) {
        return Err(Error::Precondition(format!("cone radii must satisfy 0 <= r < R, got {r}, {big_r}")));
    }
    if g.is_empty() {
        return Ok(0.0);
    }
    let cone = Cone::new(x, g, r, big_r);
    Ok(mu
        .atoms
        .iter()
        .filter(|a| cone.contains(a.point))
        .map(|a| a.weight)
        .sum::<ExactSum>()
        .to_f64())
}

/// Per-scale normalized annulus masses `m_k = μ(X(x, G, ρ^{k+1}, ρ^k)) / ρ^k` for `k ∈ [first, last]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyProfile {
    pub base: u32,
    pub first_scale: u32,
    pub last_scale: u32,
    pub masses: Vec<f64>,
    pub total: f64,
    #[serde(skip)]
    exact: Vec<ExactSum>,
}

impl EnergyProfile {
    pub fn rho(&self) -> f64 {
        1.0 / self.base as f64
    }

    /// `m_k`, zero outside the profile's range.
    pub fn mass(&self, k: u32) -> f64 {
        if k < self.first_scale || k > self.last_scale {
            return 0.0;
        }
        self.masses[(k - self.first_scale) as usize]
    }

    pub fn exact_masses(&self) -> &[ExactSum] {
        &self.exact
    }

    pub fn exact_total(&self) -> ExactSum {
        let mut s = ExactSum::zero();
        for m in &self.exact {
            s += m;
        }
        s
    }

    /// Sum of `m_k` over `k ∈ [lo, hi] ∩ [first, last]`.
    pub fn partial_sum(&self, lo: u32, hi: u32) -> f64 {
        let mut s = ExactSum::zero();
        for k in lo.max(self.first_scale)..=hi.min(self.last_scale) {
            s += &self.exact[(k - self.first_scale) as usize];
        }
        s.to_f64()
    }
}

/// The truncated conical energy `Σ_{k=l}^{j} μ(X(x, G, ρ^{k+1}, ρ^k)) / ρ^k`, scale by scale.
pub fn conical_energy(
    mu: &DiscreteMeasure,
    x: Point,
    g: &DirectionSet,
    base: u32,
    first: u32,
    last: u32,
) -> Result<EnergyProfile> {
    if base < 2 {
        return Err(Error::Precondition(format!("scale base must be at least 2, got {base}")));
    }
    if first > last {
        return Err(Error::Precondition(format!("empty scale range [{first}, {last}]")));
    }
    let weights: Vec<u64> = (first..=last).map(|k| base_pow(base, k)).collect::<Result<_>>()?;
    let index = DirectionIndex::new(g);
    let mut raw = vec![ExactSum::zero(); weights.len()];
    if !g.is_empty() {
        for a in &mu.atoms {
            let d = a.point - x;
            let s = d.norm();
            if let Some(k) = annulus_scale(s, base) {
                if k >= first && k <= last && index.admits(d, s) {
                    raw[(k - first) as usize].add_f64(a.weight);
                }
            }
        }
    }
    let exact: Vec<ExactSum> = raw.iter().zip(&weights).map(|(m, &w)| m.scaled(w)).collect();
    let masses = exact.iter().map(ExactSum::to_f64).collect();
    let mut total = ExactSum::zero();
    for m in &exact {
        total += m;
    }
    Ok(EnergyProfile {
        base,
        first_scale: first,
        last_scale: last,
        masses,
        total: total.to_f64(),
        exact,
    })
}

/// `∫_lo^hi μ(X(x, G, r)) / r² dr`; an atom at distance `s > 0` inside the cone
/// contributes `w (1/max(s, lo) − 1/hi)` when `s < hi`. `hi` may be infinite.
pub fn energy_between(mu: &DiscreteMeasure, x: Point, g: &DirectionSet, lo: f64, hi: f64) -> f64 {
    energy_between_with(mu, x, &DirectionIndex::new(g), lo, hi)
}

pub fn energy_between_with(mu: &DiscreteMeasure, x: Point, index: &DirectionIndex, lo: f64, hi: f64) -> f64 {
    let inv_hi = if hi.is_finite() { 1.0 / hi } else { 0.0 };
    let mut s = ExactSum::zero();
    for a in &mu.atoms {
        let d = a.point - x;
        let dist = d.norm();
        if dist == 0.0 || dist >= hi || !index.admits(d, dist) {
            continue;
        }
        let term = a.weight * (1.0 / dist.max(lo) - inv_hi);
        if term > 0.0 {
            s.add_f64(term);
        }
    }
    s.to_f64()
}

/// `∫_lo^hi μ(X(x, G, ρr, r)) / r² dr`: an atom at distance `s` counts for `r ∈ [s, s/ρ)`.
pub fn annulus_energy(mu: &DiscreteMeasure, x: Point, g: &DirectionSet, base: u32, lo: f64, hi: f64) -> f64 {
    let index = DirectionIndex::new(g);
    let mut s = ExactSum::zero();
    for a in &mu.atoms {
        let d = a.point - x;
        let dist = d.norm();
        if dist == 0.0 || !index.admits(d, dist) {
            continue;
        }
        let from = dist.max(lo);
        let to = (dist * base as f64).min(hi);
        if from < to {
            s.add_f64(a.weight * (1.0 / from - 1.0 / to));
        }
    }
    s.to_f64()
}

/// Set model queried by [`bad_scales`]; restricted scales `Bad_F` come from passing `F` itself.
#[derive(Clone, Copy, Debug)]
pub enum ScaleModel<'a> {
    Atoms(&'a [Point]),
    Segments(&'a SegmentUnion),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BadScaleSet {
    pub scales: BTreeSet<u32>,
    pub apex: Point,
    pub directions: DirectionSet,
    pub first: u32,
    pub last: u32,
}

impl BadScaleSet {
    pub fn count(&self) -> usize {
        self.scales.len()
    }

    pub fn contains(&self, k: u32) -> bool {
        self.scales.contains(&k)
    }
}

fn cross(u: Point, v: Point) -> f64 {
    u.x1 * v.x2 - u.x2 * v.x1
}

/// Distance range from `x` over the sub-segment `[t0, t1]` of `s`.
fn distance_range(s: &Segment, x: Point, t0: f64, t1: f64) -> (f64, f64) {
    let p = s.a.lerp(s.b, t0);
    let q = s.a.lerp(s.b, t1);
    let hi = p.dist(x).max(q.dist(x));
    let lo = if p == q {
        p.dist(x)
    } else {
        Segment { a: p, b: q }.distance_to(x)
    };
    (lo, hi)
}

/// Distance ranges of the parts of `s` inside the double cone at `x` with directions `arc`.
fn segment_cone_ranges(s: &Segment, x: Point, arc: &AngleInterval) -> Vec<(f64, f64)> {
    if arc.half_width >= 0.25 {
        return vec![distance_range(s, x, 0.0, 1.0)];
    }
    let mut out = Vec::new();
    for flip in [0.0, 0.5] {
        let lo = Angle::new(arc.start() + flip).direction();
        let hi = Angle::new(arc.end() + flip).direction();
        let da = s.a - x;
        let db = s.b - x;
        // d(t) lies in the convex wedge iff cross(lo, d) ≥ 0 and cross(d, hi) ≥ 0.
        let constraints = [(cross(lo, da), cross(lo, db)), (cross(da, hi), cross(db, hi))];
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for (f0, f1) in constraints {
            let (ok0, ok1) = (f0 >= -EPS, f1 >= -EPS);
            match (ok0, ok1) {
                (true, true) => {}
                (false, false) => {
                    t0 = 1.0;
                    t1 = 0.0;
                }
                _ => {
                    let t = (-EPS - f0) / (f1 - f0);
                    if ok0 {
                        t1 = t1.min(t);
                    } else {
                        t0 = t0.max(t);
                    }
                }
            }
        }
        if t0 <= t1 {
            out.push(distance_range(s, x, t0, t1));
        }
    }
    out
}

/// `Bad(x, J, l, j) = {l ≤ k ≤ j : X(x, J, ρ^{k+1}, ρ^k) ∩ F ≠ ∅}`.
pub fn bad_scales(
    model: ScaleModel<'_>,
    x: Point,
    directions: &DirectionSet,
    base: u32,
    first: u32,
    last: u32,
) -> Result<BadScaleSet> {
    if base < 2 {
        return Err(Error::Precondition(format!("scale base must be at least 2, got {base}")));
    }
    if first > last {
        return Err(Error::Precondition(format!("empty scale range [{first}, {last}]")));
    }
    let mut scales = BTreeSet::new();
    if !directions.is_empty() {
        match model {
            ScaleModel::Atoms(points) => {
                let index = DirectionIndex::new(directions);
                for &p in points {
                    let d = p - x;
                    let s = d.norm();
                    if let Some(k) = annulus_scale(s, base) {
                        if k >= first && k <= last && index.admits(d, s) {
                            scales.insert(k);
                        }
                    }
                }
            }
            ScaleModel::Segments(e) => {
                for seg in &e.segments {
                    for arc in &directions.arcs {
                        for (lo, hi) in segment_cone_ranges(seg, x, arc) {
                            for k in first..=last {
                                if range_meets_scale(lo, hi, base, k) {
                                    scales.insert(k);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(BadScaleSet {
        scales,
        apex: x,
        directions: directions.clone(),
        first,
        last,
    })
}

/// Weak-type constant used for the threshold `M ≥ C 𝓗(E)/𝓗(π_θ E)`: twice the Vitali constant 3.
pub const BOUNDED_PROJECTION_CONSTANT: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundedProjectionSet {
    pub theta: Angle,
    pub bound: f64,
    pub atom_ids: Vec<usize>,
    pub mass: f64,
    pub total_mass: f64,
    pub projection_length: f64,
    /// `C 𝓗(E)/𝓗(π_θ E)`; above it the selected mass must reach half the projection length.
    pub threshold: f64,
    pub lower_bound_applies: bool,
    pub lower_bound_holds: bool,
}

/// The atoms `x` with `μ_θ(x) ≤ M`, together with the mass check that applies for large `M`.
pub fn select_bounded_projection_set(
    e: &SegmentUnion,
    mu: &DiscreteMeasure,
    theta: Angle,
    bound: f64,
    perp_cutoff: f64,
) -> Result<BoundedProjectionSet> {
    if !(bound > 0.0) {
        return Err(Error::Precondition(format!("bound must be positive, got {bound}")));
    }
    let projection_length = project_segments(e, theta).measure();
    if projection_length <= 0.0 {
        return Err(Error::hypothesis(
            "positive projection",
            format!("projection in direction {theta} has zero length"),
        ));
    }
    let pm = ProjectedMeasure::new(e, theta, perp_cutoff)?;
    let atom_ids: Vec<usize> = mu
        .atoms
        .par_iter()
        .enumerate()
        .filter(|(_, a)| pm.mu_theta(a.point) <= bound)
        .map(|(i, _)| i)
        .collect();
    let mass = mu.mass_of(atom_ids.iter().copied());
    let total_mass = mu.total_mass();
    let threshold = BOUNDED_PROJECTION_CONSTANT * e.total_length() / projection_length;
    let lower_bound_applies = bound >= threshold;
    Ok(BoundedProjectionSet {
        theta,
        bound,
        atom_ids,
        mass,
        total_mass,
        projection_length,
        threshold,
        lower_bound_applies,
        lower_bound_holds: !lower_bound_applies || mass >= projection_length / 2.0,
    })
}

/// A triadic interval of cone directions with a direction `φ` inside it where
/// `μ^⊥_φ(x) = 𝓜(π_{φ+1/4} μ)(π_{φ+1/4} x) ≤ M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodInterval {
    pub interval: TriadicInterval,
    pub witness: Angle,
    pub witness_value: f64,
}

/// Finite families of disjoint triadic intervals inside a common root, keyed by atom index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodDirectionFamily {
    pub root: TriadicInterval,
    pub bound: f64,
    pub families: BTreeMap<usize, Vec<GoodInterval>>,
}

impl GoodDirectionFamily {
    pub fn points(&self) -> impl Iterator<Item = usize> + '_ {
        self.families.keys().copied()
    }

    pub fn intervals(&self, id: usize) -> Vec<TriadicInterval> {
        self.families
            .get(&id)
            .map(|v| v.iter().map(|g| g.interval).collect())
            .unwrap_or_default()
    }

    pub fn union_length(&self, id: usize) -> f64 {
        self.families
            .get(&id)
            .map(|v| v.iter().map(|g| g.interval.length()).sum())
            .unwrap_or(0.0)
    }

    /// Checks disjointness, containment in the root, and the recorded witnesses.
    pub fn validate(&self) -> Result<()> {
        for (&id, fam) in &self.families {
            for (i, a) in fam.iter().enumerate() {
                if !a.interval.is_within(&self.root) {
                    return Err(Error::invariant(
                        "family inside root",
                        format!("atom {id}: {} not inside {}", a.interval, self.root),
                    ));
                }
                if !a.interval.contains(a.witness) || a.witness_value > self.bound {
                    return Err(Error::invariant(
                        "witness",
                        format!("atom {id}: witness {} for {} has value {}", a.witness, a.interval, a.witness_value),
                    ));
                }
                for b in &fam[i + 1..] {
                    if !a.interval.is_disjoint(&b.interval) {
                        return Err(Error::invariant(
                            "disjoint family",
                            format!("atom {id}: {} and {} overlap", a.interval, b.interval),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodDirectionParams {
    pub kappa: f64,
    /// `M = bound_constant / κ`.
    pub bound_constant: f64,
    pub root_level: u32,
    /// Leaves of the direction covering sit this many triadic levels below the root.
    pub depth: u32,
    pub perp_cutoff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodDirectionReport {
    pub family: GoodDirectionFamily,
    pub selected: Vec<usize>,
    pub selected_mass: f64,
    pub total_mass: f64,
    /// Length of the usable cone directions inside the root.
    pub directions_length: f64,
    pub sampled_angles: usize,
    /// `min_θ 𝓗(π_θ E)/𝓗(E)` over sampled projection directions.
    pub min_projection_ratio: f64,
    /// `μ(E') ≥ κ/4 μ(E)`.
    pub mass_bound_holds: bool,
    /// `min_x 𝓗(G(x)) / 𝓗(G)` over selected points.
    pub min_cover_ratio: f64,
    /// `max_x 𝓔(x, G(x)) / (M 𝓗(G))`.
    pub energy_constant: f64,
    /// `max_x 𝓔(x, G(x)) / ∫_{G(x)} π_θμ(π_θ x) dθ` with the integral sampled per leaf.
    pub projection_density_constant: f64,
}

/// The level-`level` triadic interval with the largest overlap with `set` (lowest index on ties).
pub fn choose_root(set: &DirectionSet, level: u32) -> Result<TriadicInterval> {
    let n = crate::torus::pow3(level);
    let mut best: Option<(f64, TriadicInterval)> = None;
    for (s, e) in set.pieces() {
        let lo = ((s * n as f64).floor() as u64).min(n - 1);
        let hi = ((e * n as f64).ceil() as u64).min(n);
        for index in lo..hi {
            let t = TriadicInterval::new(level, index)?;
            let m = set.measure_in(t.start(), t.end());
            if best.is_none_or(|(bm, bt)| m > bm || (m == bm && t.index < bt.index)) {
                best = Some((m, t));
            }
        }
    }
    best.filter(|(m, _)| *m > 0.0)
        .map(|(_, t)| t)
        .ok_or_else(|| Error::Precondition("direction set has zero length".into()))
}

struct Leaf {
    interval: TriadicInterval,
    overlap: f64,
    cone_dir: Angle,
}

/// Points of `E` and triadic families of cone directions with bounded perpendicular projections.
///
/// `g` holds projection directions `θ`; cone directions are `φ = θ + 1/4`. The root
/// `J₀` is the level-`root_level` triadic interval meeting `G^⊥` the most, and
/// `G^⊥ ∩ J₀` is covered by leaves `depth` levels below. A leaf is good at `x`
/// when its sample direction `φ` has `μ_{φ−1/4}(x) ≤ M`; `E'` collects the atoms
/// whose good leaves carry at least `κ/4` of `𝓗(G^⊥ ∩ J₀)`, and `𝒢(x)` is the
/// coarsening of those leaves.
pub fn select_good_directions(
    e: &SegmentUnion,
    mu: &DiscreteMeasure,
    g: &DirectionSet,
    params: &GoodDirectionParams,
) -> Result<GoodDirectionReport> {
    if e.is_empty() {
        return Err(Error::Precondition("empty segment union".into()));
    }
    let dir0 = e.segments[0].direction();
    if e.segments.iter().any(|s| crate::torus::signed_arc(dir0, s.direction()).abs() > 1e-12) {
        return Err(Error::Precondition("segments must be parallel".into()));
    }
    if !(params.kappa > 0.0 && params.bound_constant > 0.0) {
        return Err(Error::Precondition("κ and the bound constant must be positive".into()));
    }
    let bound = params.bound_constant / params.kappa;
    let g_perp = g.perp();
    let root = choose_root(&g_perp, params.root_level)?;
    let directions_length = g_perp.measure_in(root.start(), root.end());
    let leaves: Vec<Leaf> = root
        .descendants_at(root.level + params.depth)
        .into_iter()
        .filter_map(|t| {
            let pieces: Vec<(f64, f64)> = g_perp
                .pieces()
                .into_iter()
                .map(|(s, e)| (s.max(t.start()), e.min(t.end())))
                .filter(|(s, e)| e > s)
                .collect();
            let overlap: f64 = pieces.iter().map(|(s, e)| e - s).sum();
            let longest = pieces.iter().max_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))?;
            Some(Leaf {
                interval: t,
                overlap,
                cone_dir: Angle::new(0.5 * (longest.0 + longest.1)),
            })
        })
        .collect();
    let total_length = e.total_length();
    // Per leaf: projection ratio, μ_θ at every atom, density at every atom.
    let per_leaf: Vec<(f64, Vec<f64>, Vec<f64>)> = leaves
        .par_iter()
        .map(|leaf| {
            let theta = leaf.cone_dir.shifted(-0.25);
            let ratio = project_segments(e, theta).measure() / total_length;
            let pm = ProjectedMeasure::new(e, theta, params.perp_cutoff)?;
            let dens = pm.density();
            let values = mu.atoms.iter().map(|a| pm.mu_theta(a.point)).collect();
            let densities = mu
                .atoms
                .iter()
                .map(|a| dens.density_at(crate::torus::project(theta, a.point)))
                .collect();
            Ok((ratio, values, densities))
        })
        .collect::<Result<_>>()?;
    for (leaf, (ratio, _, _)) in leaves.iter().zip(&per_leaf) {
        if *ratio <= params.kappa {
            return Err(Error::hypothesis(
                "big projections",
                format!(
                    "direction θ = {} has 𝓗(π_θ E) = {} ≤ κ 𝓗(E) = {}",
                    leaf.cone_dir.shifted(-0.25),
                    ratio * total_length,
                    params.kappa * total_length
                ),
            ));
        }
    }
    let min_projection_ratio = per_leaf.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let threshold = params.kappa / 4.0 * directions_length;
    let chosen: Vec<(usize, Vec<GoodInterval>, f64, f64)> = (0..mu.len())
        .into_par_iter()
        .filter_map(|i| {
            let good: Vec<usize> = (0..leaves.len()).filter(|&l| per_leaf[l].1[i] <= bound).collect();
            let measured: f64 = good.iter().map(|&l| leaves[l].overlap).sum();
            if measured < threshold || good.is_empty() {
                return None;
            }
            let merged = coarsen_triadic(good.iter().map(|&l| leaves[l].interval));
            let family: Vec<GoodInterval> = merged
                .into_iter()
                .map(|t| {
                    let l = *good
                        .iter()
                        .find(|&&l| leaves[l].interval.is_within(&t))
                        .expect("merged interval contains a good leaf");
                    GoodInterval {
                        interval: t,
                        witness: leaves[l].cone_dir,
                        witness_value: per_leaf[l].1[i],
                    }
                })
                .collect();
            let sampled_integral: f64 = good.iter().map(|&l| leaves[l].interval.length() * per_leaf[l].2[i]).sum();
            Some((i, family, measured, sampled_integral))
        })
        .collect();
    let family = GoodDirectionFamily {
        root,
        bound,
        families: chosen.iter().map(|(i, f, _, _)| (*i, f.clone())).collect(),
    };
    let stats: Vec<(f64, f64, f64)> = chosen
        .par_iter()
        .map(|(i, fam, _, integral)| {
            let set = DirectionSet::from_triadic(fam.iter().map(|g| &g.interval));
            let energy = energy_between(mu, mu.atoms[*i].point, &set, 0.0, f64::INFINITY);
            let cover: f64 = fam.iter().map(|g| g.interval.length()).sum::<f64>() / directions_length;
            let dens_ratio = if *integral > 0.0 { energy / integral } else { 0.0 };
            (cover, energy / (bound * directions_length), dens_ratio)
        })
        .collect();
    let selected: Vec<usize> = chosen.iter().map(|c| c.0).collect();
    let selected_mass = mu.mass_of(selected.iter().copied());
    let total_mass = mu.total_mass();
    Ok(GoodDirectionReport {
        family,
        selected,
        selected_mass,
        total_mass,
        directions_length,
        sampled_angles: leaves.len(),
        min_projection_ratio,
        mass_bound_holds: selected_mass >= params.kappa / 4.0 * total_mass,
        min_cover_ratio: stats.iter().map(|s| s.0).fold(f64::INFINITY, f64::min),
        energy_constant: stats.iter().map(|s| s.1).fold(0.0, f64::max),
        projection_density_constant: stats.iter().map(|s| s.2).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::Atom;

    fn arc(c: f64, hw: f64) -> DirectionSet {
        DirectionSet::single(AngleInterval::new(Angle::new(c), hw).unwrap())
    }

    fn seg(a: (f64, f64), b: (f64, f64)) -> Segment {
        Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1)).unwrap()
    }

    #[test]
    fn scale_assignment() {
        assert_eq!(annulus_scale(1.0, 2), Some(0));
        assert_eq!(annulus_scale(0.5, 2), Some(1));
        assert_eq!(annulus_scale(0.51, 2), Some(0));
        assert_eq!(annulus_scale(0.25, 2), Some(2));
        assert_eq!(annulus_scale(2f64.powf(-3.5), 2), Some(3));
        assert_eq!(annulus_scale(1.5, 2), None);
        assert_eq!(annulus_scale(0.0, 2), None);
        assert_eq!(annulus_scale(1.0 / 9.0, 3), Some(2));
        assert_eq!(scale_base(0.5).unwrap(), 2);
        assert!(scale_base(0.4).is_err());
    }

    #[test]
    fn cone_mass_examples() {
        let unit = DiscreteMeasure::unit_atoms(&[Point::new(1.0, 0.0)]).unwrap();
        assert_eq!(cone_mass(&unit, Point::ORIGIN, &arc(0.0, 0.05), 0.5, 2.0).unwrap(), 1.0);
        assert_eq!(cone_mass(&unit, Point::ORIGIN, &arc(0.25, 0.05), 0.5, 2.0).unwrap(), 0.0);
        let pts: Vec<Point> = (1..=5).map(|k| Point::new(2f64.powi(-k), 0.0)).collect();
        let mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
        assert_eq!(cone_mass(&mu, Point::ORIGIN, &arc(0.0, 0.01), 0.0, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn energy_examples() {
        let w = 0.75;
        let k0 = 3;
        let s = 2f64.powf(-(k0 as f64 + 0.5));
        let mu = DiscreteMeasure::new(vec![Atom { point: Point::new(s, 0.0), weight: w }]).unwrap();
        let p = conical_energy(&mu, Point::ORIGIN, &arc(0.0, 0.1), 2, 0, 8).unwrap();
        for k in 0..=8 {
            let expected = if k == k0 { w * 8.0 } else { 0.0 };
            assert_eq!(p.mass(k), expected);
        }
        let off = conical_energy(&mu, Point::ORIGIN, &arc(0.25, 0.1), 2, 0, 8).unwrap();
        assert_eq!(off.total, 0.0);
    }

    #[test]
    fn energy_integrals_match_quadrature() {
        let pts = [Point::new(0.3, 0.01), Point::new(-0.07, 0.002), Point::new(0.6, 0.2)];
        let mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
        let g = arc(0.0, 0.1);
        let closed = annulus_energy(&mu, Point::ORIGIN, &g, 2, 0.01, 1.0);
        // Midpoint rule on a log grid of r.
        let n = 200_000;
        let (a, b) = (0.01f64.ln(), 0.0f64.ln_1p());
        let mut quad = 0.0;
        for i in 0..n {
            let r = (a + (b - a) * (i as f64 + 0.5) / n as f64).exp();
            let m = cone_mass(&mu, Point::ORIGIN, &g, 0.5 * r, r).unwrap();
            quad += m / r * (b - a) / n as f64;
        }
        assert!((closed - quad).abs() < 1e-3 * closed, "{closed} vs {quad}");
        let full = energy_between(&mu, Point::ORIGIN, &g, 0.0, f64::INFINITY);
        let by_hand: f64 = pts.iter().map(|p| 1.0 / p.norm()).sum();
        assert!((full - by_hand).abs() < 1e-12);
    }

    #[test]
    fn bad_scale_examples() {
        let pts: Vec<Point> = (1..=6).map(|k| Point::new(2f64.powi(-k), 0.0)).chain([Point::ORIGIN]).collect();
        let bad = bad_scales(ScaleModel::Atoms(&pts), Point::ORIGIN, &arc(0.0, 0.05), 2, 0, 7).unwrap();
        assert_eq!(bad.scales, (1..=6).collect());
        let perp = bad_scales(ScaleModel::Atoms(&pts), Point::ORIGIN, &arc(0.25, 0.2), 2, 0, 7).unwrap();
        assert!(perp.scales.is_empty());
        let none = bad_scales(ScaleModel::Atoms(&[]), Point::ORIGIN, &arc(0.0, 0.05), 2, 0, 7).unwrap();
        assert!(none.scales.is_empty());
    }

    #[test]
    fn segment_bad_scales_agree_with_dense_atoms() {
        let e = SegmentUnion::new(vec![seg((0.1, 0.02), (0.7, 0.3)), seg((-0.4, -0.1), (-0.05, 0.0))]);
        let x = Point::new(0.0, 0.0);
        let g = arc(0.03, 0.04);
        let exact = bad_scales(ScaleModel::Segments(&e), x, &g, 2, 0, 12).unwrap();
        let dense: Vec<Point> = e
            .segments
            .iter()
            .flat_map(|s| (0..=20000).map(move |i| s.a.lerp(s.b, i as f64 / 20000.0)))
            .collect();
        let sampled = bad_scales(ScaleModel::Atoms(&dense), x, &g, 2, 0, 12).unwrap();
        assert!(sampled.scales.is_subset(&exact.scales));
        assert_eq!(sampled.scales, exact.scales);
    }

    #[test]
    fn bounded_projection_examples() {
        let one = SegmentUnion::new(vec![seg((0.0, 0.0), (1.0, 0.0))]);
        let mu = one.atoms(1.0 / 64.0).unwrap();
        let all = select_bounded_projection_set(&one, &mu, Angle::new(0.0), 2.0, 1e-9).unwrap();
        assert_eq!(all.atom_ids.len(), mu.len());
        let n = 4;
        let stacked = SegmentUnion::new((0..n).map(|i| seg((0.0, i as f64), (1.0, i as f64))).collect());
        let mu = stacked.atoms(1.0 / 64.0).unwrap();
        let none = select_bounded_projection_set(&stacked, &mu, Angle::new(0.0), (n - 1) as f64, 1e-9).unwrap();
        assert!(none.atom_ids.is_empty());
        let flat = select_bounded_projection_set(&one, &one.atoms(0.25).unwrap(), Angle::new(0.25), 1.0, 1e-9);
        assert!(matches!(flat, Err(Error::Hypothesis { .. })));
    }

    #[test]
    fn good_directions_on_one_segment() {
        let e = SegmentUnion::new(vec![seg((0.0, 0.0), (1.0, 0.0))]);
        let mu = e.atoms(1.0 / 64.0).unwrap();
        let g = arc(0.0, 0.01);
        let params = GoodDirectionParams {
            kappa: 0.5,
            bound_constant: 4.0,
            root_level: 3,
            depth: 3,
            perp_cutoff: 1e-9,
        };
        let r = select_good_directions(&e, &mu, &g, &params).unwrap();
        assert_eq!(r.selected.len(), mu.len());
        r.family.validate().unwrap();
        // Every point sees every sampled direction, so each family is the full cover.
        let cover: Vec<TriadicInterval> = r.family.intervals(0);
        let total: f64 = cover.iter().map(|t| t.length()).sum();
        assert!(total >= r.directions_length - 1e-12);
        assert_eq!(r.energy_constant, 0.0);
    }

    #[test]
    fn good_directions_reject_small_projections() {
        let e = SegmentUnion::new(vec![seg((0.0, 0.0), (1.0, 0.0))]);
        let mu = e.atoms(1.0 / 16.0).unwrap();
        let g = arc(0.25, 0.01);
        let params = GoodDirectionParams {
            kappa: 0.5,
            bound_constant: 4.0,
            root_level: 3,
            depth: 2,
            perp_cutoff: 1e-9,
        };
        let err = select_good_directions(&e, &mu, &g, &params).unwrap_err();
        assert!(matches!(err, Error::Hypothesis { .. }));
    }
}
