//! The direction tree: cubes paired with triadic direction intervals, refined
//! one generation at a time and shattered into narrower intervals where too few
//! points keep their good directions at the next scale.
//!
//! Cubes of generation `k` live in `𝔻_k(·, J)` over one Euclidean base lattice.
//! A child `P` of a tree cube is dropped (`End`) when no point of `P ∩ E₀` has a
//! very good interval nested with `J_P`, kept when at most an `ε` share of
//! `J_P × P` is missing from `𝒢(·, k)`, and shattered otherwise.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::conical::{annulus_scale, bad_scales, DirectionIndex, ScaleModel};
use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::lattice::{descend, AnisoCube, BaseLattice};
use crate::sets::DiscreteMeasure;
use crate::stages::{GoodStages, Units};
use crate::torus::{d_metric, maximal_triadic, DirectionSet, Point, TriadicInterval, MAX_TRIADIC_LEVEL};

/// `𝒢(x, k)` collects intervals of `𝒢₂(y)` for `y` with `d_I(x, y) ≤ NEIGHBOURHOOD·ρ^k`.
pub const NEIGHBOURHOOD: f64 = 10.0;

/// Dilation of `J_Q` in the bad-cube test.
pub const BAD_DILATION: f64 = 15.0;

/// Contraction of `J_Q` in the bad-scale count of a cube.
pub const COUNT_CONTRACTION: f64 = 0.8;

/// Maximal intervals `I` with `I ∈ 𝒢₂(y)` and `d_I(x, y) ≤ 10ρ^k` for some listed `y`.
pub fn good_at_scale(
    points: &[Point],
    very_good: &[(usize, Vec<TriadicInterval>)],
    x: Point,
    k: u32,
    base: u32,
) -> Vec<TriadicInterval> {
    let r = NEIGHBOURHOOD * (base as f64).powi(-(k as i32));
    maximal_triadic(very_good.iter().flat_map(|(y, fam)| {
        fam.iter()
            .copied()
            .filter(move |i| d_metric(&i.as_interval(), x, points[*y]) <= r)
    }))
}

/// `𝒢(x, k)` for every atom and every `k ≤ last`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoodAtScale {
    table: Vec<Vec<Vec<TriadicInterval>>>,
}

impl GoodAtScale {
    pub fn new(points: &[Point], very_good: &[(usize, Vec<TriadicInterval>)], base: u32, last: u32) -> Self {
        let mut owners: BTreeMap<TriadicInterval, Vec<Point>> = BTreeMap::new();
        for (id, fam) in very_good {
            for &i in fam {
                owners.entry(i).or_default().push(points[*id]);
            }
        }
        let owners: Vec<(TriadicInterval, Vec<Point>)> = owners.into_iter().collect();
        let radii: Vec<f64> = (0..=last)
            .map(|k| NEIGHBOURHOOD * (base as f64).powi(-(k as i32)))
            .collect();
        let per_atom: Vec<Vec<Vec<TriadicInterval>>> = points
            .par_iter()
            .map(|&x| {
                let nearest: Vec<f64> = owners
                    .iter()
                    .map(|(i, ys)| {
                        let arc = i.as_interval();
                        ys.iter().map(|&y| d_metric(&arc, x, y)).fold(f64::INFINITY, f64::min)
                    })
                    .collect();
                radii
                    .iter()
                    .map(|&r| {
                        maximal_triadic(
                            owners
                                .iter()
                                .zip(&nearest)
                                .filter(|(_, &d)| d <= r)
                                .map(|((i, _), _)| *i),
                        )
                    })
                    .collect()
            })
            .collect();
        let table = (0..radii.len())
            .map(|k| per_atom.iter().map(|v| v[k].clone()).collect())
            .collect();
        GoodAtScale { table }
    }

    pub fn get(&self, x: usize, k: u32) -> &[TriadicInterval] {
        &self.table[k as usize][x]
    }

    pub fn last(&self) -> u32 {
        self.table.len() as u32 - 1
    }
}

/// The very good families `𝒢₂(x)` on `E₀` with the constants the tree needs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VeryGoodFamily {
    pub root: TriadicInterval,
    pub epsilon: f64,
    /// `M`.
    pub bound: f64,
    /// `𝓔₂`.
    pub e2: f64,
    pub families: Vec<(usize, Vec<TriadicInterval>)>,
}

impl From<&GoodStages> for VeryGoodFamily {
    fn from(s: &GoodStages) -> Self {
        VeryGoodFamily {
            root: s.root,
            epsilon: s.epsilon,
            bound: s.bound,
            e2: s.e2,
            families: s.very_good(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NodeTag {
    /// A cube of `𝒯₀`.
    Top,
    /// `Good_j`; `j = 0` for children kept without shattering.
    Good(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeNode {
    pub id: usize,
    pub generation: u32,
    pub interval: TriadicInterval,
    pub center_id: usize,
    pub atom_ids: Vec<usize>,
    pub tag: NodeTag,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub root: usize,
}

impl TreeNode {
    pub fn is_root(&self) -> bool {
        !matches!(self.tag, NodeTag::Good(0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopKind {
    End,
    /// A member of `Sh_j`.
    Shattered(u32),
}

/// A cube met during refinement that is not in the tree.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StoppedCube {
    pub generation: u32,
    pub interval: TriadicInterval,
    pub atom_ids: Vec<usize>,
    pub kind: StopKind,
    /// The tree cube whose refinement produced it.
    pub parent: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TreeParams {
    pub base: u32,
    pub k_max: u32,
    /// Largest `j` with a nonempty `Sh_j`.
    pub shatter_cap: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeDecomposition {
    pub base: u32,
    pub k_max: u32,
    pub epsilon: f64,
    pub root_interval: TriadicInterval,
    pub nodes: Vec<TreeNode>,
    pub generations: Vec<Vec<usize>>,
    pub stopped: Vec<StoppedCube>,
    pub unit_level: u32,
    #[serde(skip)]
    pub good: GoodAtScale,
}

impl TreeDecomposition {
    pub fn roots(&self) -> Vec<usize> {
        self.nodes.iter().filter(|n| n.is_root()).map(|n| n.id).collect()
    }

    pub fn shatter_events(&self) -> usize {
        self.stopped
            .iter()
            .filter(|s| matches!(s.kind, StopKind::Shattered(_)))
            .count()
    }

    pub fn end_events(&self) -> usize {
        self.stopped.iter().filter(|s| s.kind == StopKind::End).count()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `atom → node ids` for one generation.
    fn atom_map(&self, generation: usize, n: usize) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); n];
        if let Some(ids) = self.generations.get(generation) {
            for &q in ids {
                for &a in &self.nodes[q].atom_ids {
                    m[a].push(q);
                }
            }
        }
        m
    }
}

/// Classification data shared by all refinement steps.
struct Classifier<'a> {
    mu: &'a DiscreteMeasure,
    very_good: Vec<Option<Vec<TriadicInterval>>>,
    good: &'a GoodAtScale,
    units: Units,
    epsilon: f64,
}

struct Refinement {
    kept: Vec<(AnisoCube, u32)>,
    stopped: Vec<(AnisoCube, StopKind)>,
}

/// Exact `(∫_P 𝓗(J ∩ G(x,k)) dμ, 𝓗(J)μ(P))` in units of `3^{-unit_level}`.
fn coverage(mu: &DiscreteMeasure, good: &GoodAtScale, units: Units, atoms: &[usize], j: &TriadicInterval, k: u32) -> (ExactSum, ExactSum) {
    let mut covered = ExactSum::zero();
    let mut mass = ExactSum::zero();
    for &x in atoms {
        let w = ExactSum::from_f64(mu.atoms[x].weight);
        mass += &w;
        covered += &w.scaled(units.overlap(j, good.get(x, k)) as u64);
    }
    (covered, mass.scaled(units.of(j) as u64))
}

impl Classifier<'_> {
    /// Some `x ∈ P ∩ E₀` has an interval of `𝒢₂(x)` nested with `J`.
    fn meets(&self, atoms: &[usize], j: &TriadicInterval) -> bool {
        atoms.iter().any(|&x| {
            self.very_good[x]
                .as_ref()
                .is_some_and(|f| f.iter().any(|i| i.is_within(j) || j.is_within(i)))
        })
    }

    /// `∫_P 𝓗(J ∩ G(x,k)) dμ ≥ (1 − ε)𝓗(J)μ(P)`.
    fn dense(&self, atoms: &[usize], j: &TriadicInterval, k: u32) -> bool {
        let (covered, full) = coverage(self.mu, self.good, self.units, atoms, j, k);
        (&full - &covered).to_f64() <= self.epsilon * full.to_f64()
    }

    /// Some `x ∈ P ∩ E₀` has `J` inside an interval of `𝒢₂(x)`.
    fn settled(&self, atoms: &[usize], j: &TriadicInterval) -> bool {
        atoms.iter().any(|&x| {
            self.very_good[x]
                .as_ref()
                .is_some_and(|f| f.iter().any(|i| j.is_within(i)))
        })
    }

    fn refine(&self, lat: &BaseLattice, q: &TreeNode, cap: u32) -> Result<Refinement> {
        let k = q.generation;
        let mut out = Refinement {
            kept: Vec::new(),
            stopped: Vec::new(),
        };
        let mut queue = Vec::new();
        for p in descend(lat, &q.atom_ids, q.interval, k, 1)? {
            if !self.meets(&p.atom_ids, &p.interval) {
                out.stopped.push((p, StopKind::End));
            } else if self.dense(&p.atom_ids, &p.interval, k + 1) {
                out.kept.push((p, 0));
            } else {
                queue.push((p.clone(), 0));
                out.stopped.push((p, StopKind::Shattered(0)));
            }
        }
        while let Some((s, j)) = queue.pop() {
            if j + 1 > cap {
                return Err(Error::invariant(
                    "shattering depth",
                    format!(
                        "cube around atom {} at generation {} still shattered at {} with interval {}",
                        s.center_id,
                        k + 1,
                        j,
                        s.interval
                    ),
                ));
            }
            for child in s.interval.children() {
                for p in descend(lat, &s.atom_ids, child, k + 1, 0)? {
                    if !self.meets(&p.atom_ids, &p.interval) {
                        out.stopped.push((p, StopKind::End));
                    } else if self.settled(&p.atom_ids, &p.interval) {
                        out.kept.push((p, j + 1));
                    } else {
                        queue.push((p.clone(), j + 1));
                        out.stopped.push((p, StopKind::Shattered(j + 1)));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Builds `𝒯` up to generation `k_max`.
pub fn build_tree(mu: &DiscreteMeasure, stages: &VeryGoodFamily, params: &TreeParams) -> Result<TreeDecomposition> {
    let points: Vec<Point> = mu.points().collect();
    let root = stages.root;
    let very_good = stages.families.clone();
    let deepest = very_good
        .iter()
        .flat_map(|(_, f)| f.iter().map(|i| i.level))
        .max()
        .unwrap_or(root.level);
    let unit_level = deepest.max(root.level + params.shatter_cap + 1);
    if unit_level > MAX_TRIADIC_LEVEL {
        return Err(Error::Resource(format!("triadic level {unit_level} too deep")));
    }
    let good = GoodAtScale::new(&points, &very_good, params.base, params.k_max);
    let mut tree = TreeDecomposition {
        base: params.base,
        k_max: params.k_max,
        epsilon: stages.epsilon,
        root_interval: root,
        nodes: Vec::new(),
        generations: vec![Vec::new(); params.k_max as usize + 1],
        stopped: Vec::new(),
        unit_level,
        good,
    };
    if very_good.is_empty() {
        return Ok(tree);
    }
    let mut vg = vec![None; points.len()];
    for (id, f) in very_good {
        vg[id] = Some(f);
    }
    let classifier = Classifier {
        mu,
        very_good: vg,
        good: &tree.good,
        units: Units { level: unit_level },
        epsilon: stages.epsilon,
    };
    let lat = BaseLattice::euclidean(&points, params.base)?;
    let all: Vec<usize> = (0..points.len()).collect();
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut generations = tree.generations.clone();
    let mut stopped = Vec::new();
    for cube in descend(&lat, &all, root, 0, 0)? {
        if cube.atom_ids.iter().any(|&x| classifier.very_good[x].is_some()) {
            let id = nodes.len();
            generations[0].push(id);
            nodes.push(TreeNode {
                id,
                generation: 0,
                interval: cube.interval,
                center_id: cube.center_id,
                atom_ids: cube.atom_ids,
                tag: NodeTag::Top,
                parent: None,
                children: Vec::new(),
                root: id,
            });
        }
    }
    for k in 0..params.k_max as usize {
        let frontier = generations[k].clone();
        let refined: Vec<Result<Refinement>> = frontier
            .par_iter()
            .map(|&q| classifier.refine(&lat, &nodes[q], params.shatter_cap))
            .collect();
        for (&q, r) in frontier.iter().zip(refined) {
            let r = r?;
            for (cube, j) in r.kept {
                let id = nodes.len();
                let root = if j == 0 { nodes[q].root } else { id };
                nodes[q].children.push(id);
                generations[k + 1].push(id);
                nodes.push(TreeNode {
                    id,
                    generation: k as u32 + 1,
                    interval: cube.interval,
                    center_id: cube.center_id,
                    atom_ids: cube.atom_ids,
                    tag: NodeTag::Good(j),
                    parent: Some(q),
                    children: Vec::new(),
                    root,
                });
            }
            for (cube, kind) in r.stopped {
                stopped.push(StoppedCube {
                    generation: k as u32 + 1,
                    interval: cube.interval,
                    atom_ids: cube.atom_ids,
                    kind,
                    parent: q,
                });
            }
        }
    }
    tree.nodes = nodes;
    tree.generations = generations;
    tree.stopped = stopped;
    Ok(tree)
}

/// Tree cubes `Q` of generation `k` with `X(x, 15J_Q, ρ^{k+1}, ρ^k) ∩ E ≠ ∅` for some atom `x ∈ Q`.
pub fn collect_bad_cubes(tree: &TreeDecomposition, mu: &DiscreteMeasure) -> Result<Vec<usize>> {
    let points: Vec<Point> = mu.points().collect();
    let flags: Vec<Result<bool>> = tree
        .nodes
        .par_iter()
        .map(|q| {
            let dirs = DirectionSet::single(q.interval.dilate(BAD_DILATION));
            for &x in &q.atom_ids {
                let s = bad_scales(ScaleModel::Atoms(&points), points[x], &dirs, tree.base, q.generation, q.generation)?;
                if s.contains(q.generation) {
                    return Ok(true);
                }
            }
            Ok(false)
        })
        .collect();
    let mut bad = Vec::new();
    for (q, f) in flags.into_iter().enumerate() {
        if f? {
            bad.push(q);
        }
    }
    Ok(bad)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PackingSums {
    /// `Σ_{R ∈ Roots} 𝓗(J_R)μ(R)`.
    pub roots_sum: f64,
    /// `ε^{-1}𝓗(J₀)μ(E)`.
    pub roots_bound: f64,
    /// `Σ_{Q ∈ Bad} 𝓗(J_Q)μ(Q)`.
    pub bad_sum: f64,
    pub per_root_bad: BTreeMap<usize, f64>,
}

pub fn packing_sums(tree: &TreeDecomposition, mu: &DiscreteMeasure, bad: &[usize]) -> PackingSums {
    let term = |q: &TreeNode| mu.mass_of(q.atom_ids.iter().copied()) * q.interval.length();
    let roots: ExactSum = tree.nodes.iter().filter(|q| q.is_root()).map(term).sum();
    let bad_total: ExactSum = bad.iter().map(|&q| term(&tree.nodes[q])).sum();
    let mut per_root: BTreeMap<usize, ExactSum> = BTreeMap::new();
    for &q in bad {
        per_root
            .entry(tree.nodes[q].root)
            .or_default()
            .add_f64(term(&tree.nodes[q]));
    }
    PackingSums {
        roots_sum: roots.to_f64(),
        roots_bound: tree.root_interval.length() * mu.total_mass() / tree.epsilon,
        bad_sum: bad_total.to_f64(),
        per_root_bad: per_root.into_iter().map(|(r, s)| (r, s.to_f64())).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeReport {
    pub node_count: usize,
    pub root_count: usize,
    pub end_events: usize,
    pub shatter_events: usize,
    /// `max d_{J_Q}(x, x_Q)/ρ^k`; at most 4.
    pub t1_outer_max_ratio: f64,
    /// Atoms of `E` in `B(x_Q, 𝓗(J_Q)ρ^{k+3})` but outside `Q`.
    pub t1_inner_violations: usize,
    /// `min ∫_Q 𝓗(J_Q ∩ G(x,k)) dμ / (𝓗(J_Q)μ(Q))` over `k ≥ 1`.
    pub t2_min_ratio: f64,
    pub t2_violations: usize,
    pub t3_violations: usize,
    pub t4_violations: usize,
    pub packing: PackingSums,
    pub t6_violations: usize,
    pub t7_violations: usize,
    /// `max #Bad(x, 0.8J_Q, 0, k)/𝓔₂`.
    pub t8_constant: f64,
    pub ch_cool_violations: usize,
    /// `max` over `x ∈ E₀` of the truncated energy over `∪15J` divided by `M Σ_{Q ∈ Bad, x ∈ Q} 𝓗(J_Q)`.
    pub chain_constant: f64,
    pub bad_count: usize,
}

impl TreeReport {
    pub fn holds(&self) -> bool {
        self.t1_outer_max_ratio <= 4.0 * (1.0 + 1e-12)
            && self.t1_inner_violations == 0
            && self.t2_violations == 0
            && self.t3_violations == 0
            && self.t4_violations == 0
            && self.packing.roots_sum <= self.packing.roots_bound
            && self.t6_violations == 0
            && self.t7_violations == 0
            && self.ch_cool_violations == 0
            && self.chain_constant.is_finite()
    }

    /// Names of the failing properties.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut f = Vec::new();
        if self.t1_outer_max_ratio > 4.0 * (1.0 + 1e-12) {
            f.push("T1 outer ball");
        }
        if self.t1_inner_violations > 0 {
            f.push("T1 inner ball");
        }
        if self.t2_violations > 0 {
            f.push("T2 density");
        }
        if self.t3_violations > 0 {
            f.push("T3 unique parent");
        }
        if self.t4_violations > 0 {
            f.push("T4 nesting");
        }
        if self.packing.roots_sum > self.packing.roots_bound {
            f.push("T5 roots packing");
        }
        if self.t6_violations > 0 {
            f.push("T6 constant intervals");
        }
        if self.t7_violations > 0 {
            f.push("T7 coverage");
        }
        if self.ch_cool_violations > 0 {
            f.push("children products");
        }
        if !self.chain_constant.is_finite() {
            f.push("energy-to-bad chain");
        }
        f
    }
}

fn is_subset(a: &[usize], b: &[usize]) -> bool {
    a.iter().all(|x| b.binary_search(x).is_ok())
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (small, big) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().any(|x| big.binary_search(x).is_ok())
}

/// Disjoint as subsets of `E × 𝕋`, or `a ⊆ b`.
fn product_ordered(a: &TreeNode, b: &TreeNode) -> bool {
    a.interval.is_disjoint(&b.interval)
        || !intersects(&a.atom_ids, &b.atom_ids)
        || (a.interval.is_within(&b.interval) && is_subset(&a.atom_ids, &b.atom_ids))
}

/// `Σ w(1 − ρ)/s` over atoms at distance `s` in a cone with annulus scale at most `last`.
fn annular_energy(mu: &DiscreteMeasure, x: Point, index: &DirectionIndex, base: u32, last: u32) -> f64 {
    let mut s = ExactSum::zero();
    let rho = 1.0 / base as f64;
    for a in &mu.atoms {
        let d = a.point - x;
        let dist = d.norm();
        if annulus_scale(dist, base).is_some_and(|k| k <= last) && index.admits(d, dist) {
            s.add_f64(a.weight * (1.0 - rho) / dist);
        }
    }
    s.to_f64()
}

/// Verifies T1–T8, the children-product property and the energy-to-bad chain.
pub fn check_tree(tree: &TreeDecomposition, mu: &DiscreteMeasure, stages: &VeryGoodFamily) -> Result<TreeReport> {
    let points: Vec<Point> = mu.points().collect();
    let n = points.len();
    let base = tree.base;
    let rho = 1.0 / base as f64;
    let units = Units { level: tree.unit_level };
    let maps: Vec<Vec<Vec<usize>>> = (0..tree.generations.len()).map(|g| tree.atom_map(g, n)).collect();
    let mut by_x: Vec<usize> = (0..n).collect();
    by_x.sort_by(|&a, &b| points[a].x1.total_cmp(&points[b].x1));
    let xs: Vec<f64> = by_x.iter().map(|&a| points[a].x1).collect();

    struct NodeCheck {
        outer: f64,
        inner: usize,
        t2: Option<f64>,
        t2_bad: bool,
        t3_bad: bool,
        t4: usize,
        t6_bad: bool,
        ch: usize,
    }
    let checks: Vec<NodeCheck> = tree
        .nodes
        .par_iter()
        .map(|q| {
            let k = q.generation;
            let scale = rho.powi(k as i32);
            let arc = q.interval.as_interval();
            let c = points[q.center_id];
            let outer = q
                .atom_ids
                .iter()
                .map(|&a| d_metric(&arc, points[a], c) / scale)
                .fold(0.0, f64::max);
            let r = q.interval.length() * rho.powi(k as i32 + 3);
            let lo = xs.partition_point(|&v| v <= c.x1 - r);
            let hi = xs.partition_point(|&v| v < c.x1 + r);
            let inner = by_x[lo..hi]
                .iter()
                .filter(|&&a| points[a].dist(c) < r && q.atom_ids.binary_search(&a).is_err())
                .count();
            let (t2, t2_bad) = if k >= 1 {
                let (covered, full) = coverage(mu, &tree.good, units, &q.atom_ids, &q.interval, k);
                let ratio = covered.to_f64() / full.to_f64();
                (Some(ratio), (&full - &covered).to_f64() > tree.epsilon * full.to_f64())
            } else {
                (None, false)
            };
            let t3_bad = if k >= 1 {
                let prev = &maps[k as usize - 1];
                let holders: BTreeSet<usize> = prev[q.atom_ids[0]]
                    .iter()
                    .copied()
                    .filter(|&p| {
                        let p = &tree.nodes[p];
                        q.interval.is_within(&p.interval) && is_subset(&q.atom_ids, &p.atom_ids)
                    })
                    .collect();
                holders.len() != 1 || holders.first().copied() != q.parent
            } else {
                q.parent.is_some()
            };
            let mut t4 = 0;
            for g in 0..=k as usize {
                let mut seen = BTreeSet::new();
                for &a in &q.atom_ids {
                    for &p in &maps[g][a] {
                        if p == q.id || !seen.insert(p) {
                            continue;
                        }
                        let p = &tree.nodes[p];
                        let ok = product_ordered(q, p) || (p.generation == k && product_ordered(p, q));
                        if !ok {
                            t4 += 1;
                        }
                    }
                }
            }
            let root = &tree.nodes[q.root];
            let t6_bad = q.interval != root.interval || !root.is_root();
            let mut ch = 0;
            for (i, &a) in q.children.iter().enumerate() {
                let a = &tree.nodes[a];
                if !(a.interval.is_within(&q.interval) && is_subset(&a.atom_ids, &q.atom_ids)) {
                    ch += 1;
                }
                for &b in &q.children[i + 1..] {
                    let b = &tree.nodes[b];
                    if !(a.interval.is_disjoint(&b.interval) || !intersects(&a.atom_ids, &b.atom_ids)) {
                        ch += 1;
                    }
                }
            }
            NodeCheck {
                outer,
                inner,
                t2,
                t2_bad,
                t3_bad,
                t4,
                t6_bad,
                ch,
            }
        })
        .collect();

    let very_good = &stages.families;
    let t7_violations: usize = very_good
        .par_iter()
        .map(|(x, fam)| {
            let mut bad = 0;
            for j in fam {
                for g in &maps {
                    let hits = g[*x]
                        .iter()
                        .filter(|&&q| j.is_within(&tree.nodes[q].interval))
                        .count();
                    if hits != 1 {
                        bad += 1;
                    }
                }
            }
            bad
        })
        .sum();

    let t8: Vec<Result<usize>> = tree
        .nodes
        .par_iter()
        .map(|q| {
            let dirs = DirectionSet::single(q.interval.dilate(COUNT_CONTRACTION));
            let mut worst = 0;
            for &x in &q.atom_ids {
                let s = bad_scales(ScaleModel::Atoms(&points), points[x], &dirs, base, 0, q.generation)?;
                worst = worst.max(s.count());
            }
            Ok(worst)
        })
        .collect();
    let mut t8_count = 0;
    for c in t8 {
        t8_count = t8_count.max(c?);
    }

    let bad = collect_bad_cubes(tree, mu)?;
    let mut bad_at: Vec<ExactSum> = vec![ExactSum::zero(); n];
    for &q in &bad {
        let q = &tree.nodes[q];
        for &a in &q.atom_ids {
            bad_at[a].add_f64(q.interval.length());
        }
    }
    let chain_constant = very_good
        .par_iter()
        .map(|(x, fam)| {
            let dirs = DirectionSet {
                arcs: fam.iter().map(|j| j.dilate(BAD_DILATION)).collect(),
            };
            let energy = annular_energy(mu, points[*x], &DirectionIndex::new(&dirs), base, tree.k_max);
            let rhs = stages.bound * bad_at[*x].to_f64();
            if energy == 0.0 {
                0.0
            } else if rhs == 0.0 {
                f64::INFINITY
            } else {
                energy / rhs
            }
        })
        .reduce(|| 0.0, f64::max);

    Ok(TreeReport {
        node_count: tree.nodes.len(),
        root_count: tree.roots().len(),
        end_events: tree.end_events(),
        shatter_events: tree.shatter_events(),
        t1_outer_max_ratio: checks.iter().map(|c| c.outer).fold(0.0, f64::max),
        t1_inner_violations: checks.iter().map(|c| c.inner).sum(),
        t2_min_ratio: checks.iter().filter_map(|c| c.t2).fold(1.0, f64::min),
        t2_violations: checks.iter().filter(|c| c.t2_bad).count(),
        t3_violations: checks.iter().filter(|c| c.t3_bad).count(),
        t4_violations: checks.iter().map(|c| c.t4).sum(),
        packing: packing_sums(tree, mu, &bad),
        t6_violations: checks.iter().filter(|c| c.t6_bad).count(),
        t7_violations,
        t8_constant: if stages.e2 > 0.0 { t8_count as f64 / stages.e2 } else { 0.0 },
        ch_cool_violations: checks.iter().map(|c| c.ch).sum(),
        chain_constant,
        bad_count: bad.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Angle;

    fn line(n: usize) -> DiscreteMeasure {
        let pts: Vec<Point> = (0..n).map(|i| Point::new((i as f64 + 0.5) / n as f64, 0.0)).collect();
        let mut mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
        for a in &mut mu.atoms {
            a.weight = 1.0 / n as f64;
        }
        mu
    }

    fn root() -> TriadicInterval {
        TriadicInterval::containing(Angle::new(0.25), 4)
    }

    fn stages_for(mu: &DiscreteMeasure, fam: impl Fn(usize) -> Vec<TriadicInterval>) -> VeryGoodFamily {
        VeryGoodFamily {
            root: root(),
            epsilon: 1.0 / 256.0,
            bound: 4.0,
            e2: 4.0,
            families: (0..mu.len()).map(|id| (id, fam(id))).collect(),
        }
    }

    const PARAMS: TreeParams = TreeParams {
        base: 16,
        k_max: 4,
        shatter_cap: 7,
    };

    #[test]
    fn good_at_scale_examples() {
        let j = root().middle_child();
        let pts = vec![Point::new(0.0, 0.0), Point::new(5.0 * j.length() / 16.0, 0.0)];
        let vg = vec![(1, vec![j])];
        // d_J is horizontal distance over 𝓗(J) for a vertical J, so the pair sits at 5ρ.
        assert_eq!(good_at_scale(&pts, &vg, pts[0], 1, 16), vec![j]);
        assert!(good_at_scale(&pts, &vg, pts[0], 2, 16).is_empty());
        assert_eq!(good_at_scale(&pts, &vg, pts[1], 30, 16), vec![j]);
        assert!(good_at_scale(&pts, &[], pts[0], 0, 16).is_empty());
        let table = GoodAtScale::new(&pts, &vg, 16, 3);
        assert_eq!(table.get(0, 1), &[j]);
        assert!(table.get(0, 2).is_empty());
        assert_eq!(table.get(1, 3), &[j]);
    }

    #[test]
    fn single_line_tree_has_no_shattering() {
        let mu = line(128);
        let stages = stages_for(&mu, |_| vec![root()]);
        let tree = build_tree(&mu, &stages, &PARAMS).unwrap();
        assert_eq!(tree.shatter_events(), 0);
        assert!(tree.nodes.iter().all(|q| q.interval == root()));
        let report = check_tree(&tree, &mu, &stages).unwrap();
        assert!(report.holds(), "{:?}", report.failures());
        assert_eq!(report.t2_min_ratio, 1.0);
        assert_eq!(report.bad_count, 0);
        let top: f64 = root().length() * mu.total_mass();
        assert!((report.packing.roots_sum - top).abs() < 1e-12);
    }

    #[test]
    fn two_direction_tree_shatters() {
        let mu = line(128);
        let [left, _, right] = root().children();
        let stages = stages_for(&mu, |id| vec![if id < 64 { left } else { right }]);
        let tree = build_tree(&mu, &stages, &PARAMS).unwrap();
        assert!(tree.shatter_events() > 0);
        assert!(tree.nodes.iter().any(|q| q.interval.level > root().level));
        let report = check_tree(&tree, &mu, &stages).unwrap();
        assert!(report.holds(), "{:?}", report.failures());
        let top = root().length() * mu.total_mass();
        assert!(report.packing.roots_sum > top);
        assert!(report.packing.roots_sum < report.packing.roots_bound);
    }

    #[test]
    fn empty_e0_gives_empty_tree() {
        let mu = line(8);
        let mut stages = stages_for(&mu, |_| vec![root()]);
        stages.families.clear();
        let tree = build_tree(&mu, &stages, &PARAMS).unwrap();
        assert!(tree.is_empty());
        assert!(collect_bad_cubes(&tree, &mu).unwrap().is_empty());
        let sums = packing_sums(&tree, &mu, &[]);
        assert_eq!(sums.roots_sum, 0.0);
    }

    #[test]
    fn pair_in_good_direction_is_bad() {
        // Two atoms stacked vertically just beyond ρ² apart, inside the scale-1 annulus.
        let mut pts: Vec<Point> = (0..64).map(|i| Point::new((i as f64 + 0.5) / 64.0, 0.0)).collect();
        let top = Point::new(pts[10].x1, 1.0001 / 256.0);
        pts.push(top);
        let mut mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
        for a in &mut mu.atoms {
            a.weight = 1.0 / 64.0;
        }
        let stages = stages_for(&mu, |_| vec![root()]);
        let tree = build_tree(&mu, &stages, &PARAMS).unwrap();
        let bad = collect_bad_cubes(&tree, &mu).unwrap();
        assert!(bad.iter().any(|&q| tree.nodes[q].generation == 1 && tree.nodes[q].atom_ids.contains(&10)));
        assert!(bad.iter().all(|&q| tree.nodes[q].generation == 1));
    }
}
