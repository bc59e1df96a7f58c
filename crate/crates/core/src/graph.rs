//! Lipschitz-graph extraction by bad-scale reduction.
//!
//! Scales are dyadic (`ρ = 1/2`). Points are rescaled by the smallest power of
//! two at least the diameter, so every pair has an annulus scale and the scale
//! counts do not depend on where the set sits.
//!
//! A set is a Lipschitz graph over the line perpendicular to the axis of `J`
//! exactly when no point lies in the cone `X(x, J)` of another. The graph
//! coordinates of `p` are `t = π_{θ₀}(p)` with `θ₀` the axis turned by a quarter,
//! and `f = π_{axis}(p)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::conical::annulus_scale;
use crate::error::{Error, Result};
use crate::sets::DiscreteMeasure;
use crate::torus::{project, AngleInterval, Cone, DirectionSet, Point};

/// Scale base of the reduction.
pub const GRAPH_BASE: u32 = 2;

/// Constant `c₀` in the benchmark `c₀ α A^{-2} τ²`.
pub const BENCHMARK_CONSTANT: f64 = 1.0;

fn rescaled(mu: &DiscreteMeasure, ids: &[usize]) -> Vec<Point> {
    let pts: Vec<Point> = ids.iter().map(|&i| mu.atoms[i].point).collect();
    let mut diam: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            diam = diam.max(p.dist(*q));
        }
    }
    let s = if diam > 0.0 { 2f64.powi(diam.log2().ceil() as i32) } else { 1.0 };
    let s = if s < diam { 2.0 * s } else { s };
    pts.into_iter().map(|p| (1.0 / s) * p).collect()
}

/// For each local apex, the local points in `X(x, J)` with their annulus scale.
struct ConeTable {
    members: Vec<Vec<(usize, u32)>>,
    holders: Vec<Vec<usize>>,
}

impl ConeTable {
    fn new(pts: &[Point], j: &AngleInterval) -> Self {
        let dirs = DirectionSet::single(*j);
        let members: Vec<Vec<(usize, u32)>> = pts
            .par_iter()
            .enumerate()
            .map(|(a, &x)| {
                let cone = Cone::new(x, &dirs, 0.0, f64::INFINITY);
                pts.iter()
                    .enumerate()
                    .filter_map(|(b, &z)| {
                        if a == b {
                            return None;
                        }
                        let d = z - x;
                        let dist = d.norm();
                        let k = annulus_scale(dist, GRAPH_BASE)?;
                        cone.contains_direction(d, dist).then_some((b, k))
                    })
                    .collect()
            })
            .collect();
        let mut holders = vec![Vec::new(); pts.len()];
        for (a, m) in members.iter().enumerate() {
            for &(b, _) in m {
                holders[b].push(a);
            }
        }
        ConeTable { members, holders }
    }

    /// `#Bad(x)` for every apex with all points present.
    fn counts(&self) -> Vec<BTreeMap<u32, usize>> {
        self.members
            .iter()
            .map(|m| {
                let mut c = BTreeMap::new();
                for &(_, k) in m {
                    *c.entry(k).or_insert(0) += 1;
                }
                c
            })
            .collect()
    }
}

/// `#Bad_K(x, J)` for each `x ∈ K`, in the order of `ids`.
pub fn bad_counts(mu: &DiscreteMeasure, ids: &[usize], j: &AngleInterval) -> Vec<usize> {
    let pts = rescaled(mu, ids);
    ConeTable::new(&pts, j).counts().iter().map(|c| c.len()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Reduction {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    /// `max #Bad_F(x, J)`.
    pub max_bad_before: usize,
    /// `max #Bad_K(x, J/2)`.
    pub max_bad_after: usize,
    pub target: usize,
    pub kept_mass: f64,
    pub input_mass: f64,
    /// `c₀ α A^{-2} τ²` with `α = 𝓗(J)`, `τ = μ(F)`.
    pub benchmark: f64,
}

/// Greedy `K ⊆ F` with `#Bad_K(x, J/2) ≤ M − 1` on `K`, given `#Bad_F(x, J) ≤ M` on `F`.
///
/// Each step removes the atom with the most incidences among offending cones:
/// its own bad-scale count if it is an offending apex, plus the number of
/// offending apexes whose cone contains it. Ties go to the lexicographically
/// smallest point.
pub fn reduce_bad_scales(
    mu: &DiscreteMeasure,
    f: &[usize],
    j: &AngleInterval,
    m: usize,
    ahlfors: f64,
) -> Result<Reduction> {
    if m == 0 {
        return Err(Error::Precondition("the bad-scale bound must be at least 1".into()));
    }
    let pts = rescaled(mu, f);
    let before = ConeTable::new(&pts, j).counts();
    let offenders: Vec<usize> = before
        .iter()
        .enumerate()
        .filter(|(_, c)| c.len() > m)
        .map(|(a, _)| f[a])
        .collect();
    if !offenders.is_empty() {
        return Err(Error::Precondition(format!(
            "#Bad_F(x, J) exceeds {m} at atoms {:?}",
            &offenders[..offenders.len().min(20)]
        )));
    }
    let half = AngleInterval::new(j.center, j.half_width / 2.0)?;
    let table = ConeTable::new(&pts, &half);
    let mut counts = table.counts();
    let mut alive = vec![true; pts.len()];
    let mut removed = Vec::new();
    loop {
        let offending: Vec<usize> = (0..pts.len()).filter(|&a| alive[a] && counts[a].len() >= m).collect();
        if offending.is_empty() {
            break;
        }
        let mut part = vec![0usize; pts.len()];
        for &a in &offending {
            part[a] += counts[a].len();
            for &(b, _) in &table.members[a] {
                if alive[b] {
                    part[b] += 1;
                }
            }
        }
        let z = (0..pts.len())
            .filter(|&b| alive[b] && part[b] > 0)
            .max_by(|&a, &b| {
                part[a]
                    .cmp(&part[b])
                    .then(pts[b].x1.total_cmp(&pts[a].x1))
                    .then(pts[b].x2.total_cmp(&pts[a].x2))
                    .then(b.cmp(&a))
            })
            .expect("an offending apex has a cone member");
        alive[z] = false;
        removed.push(f[z]);
        for &a in &table.holders[z] {
            let k = table.members[a].iter().find(|&&(b, _)| b == z).expect("holder lists z").1;
            let c = counts[a].get_mut(&k).expect("counted scale");
            *c -= 1;
            if *c == 0 {
                counts[a].remove(&k);
            }
        }
    }
    let kept: Vec<usize> = (0..pts.len()).filter(|&a| alive[a]).map(|a| f[a]).collect();
    let input_mass = mu.mass_of(f.iter().copied());
    Ok(Reduction {
        max_bad_before: before.iter().map(|c| c.len()).max().unwrap_or(0),
        max_bad_after: (0..pts.len()).filter(|&a| alive[a]).map(|a| counts[a].len()).max().unwrap_or(0),
        target: m - 1,
        kept_mass: mu.mass_of(kept.iter().copied()),
        input_mass,
        benchmark: BENCHMARK_CONSTANT * j.length() * input_mass * input_mass / (ahlfors * ahlfors),
        kept,
        removed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzCheck {
    pub is_graph: bool,
    /// `max |Δf|/|Δt|` over pairs.
    pub lip: f64,
    pub cone_violations: usize,
    pub first_violation: Option<(usize, usize)>,
}

/// Graph coordinates `(t, f)` of a point for the cone axis `axis`.
pub fn graph_coordinates(axis: crate::torus::Angle, p: Point) -> (f64, f64) {
    (project(axis.shifted(0.25), p), project(axis, p))
}

/// Exhaustive pairwise test that no atom lies in the cone `X(x, J′)` of another.
pub fn verify_lipschitz(mu: &DiscreteMeasure, k: &[usize], j: &AngleInterval) -> LipschitzCheck {
    let dirs = DirectionSet::single(*j);
    let pts: Vec<Point> = k.iter().map(|&i| mu.atoms[i].point).collect();
    let coords: Vec<(f64, f64)> = pts.iter().map(|&p| graph_coordinates(j.center, p)).collect();
    let per: Vec<(usize, Option<(usize, usize)>, f64)> = (0..pts.len())
        .into_par_iter()
        .map(|a| {
            let cone = Cone::new(pts[a], &dirs, 0.0, f64::INFINITY);
            let mut bad = 0;
            let mut first = None;
            let mut lip: f64 = 0.0;
            for b in a + 1..pts.len() {
                let d = pts[b] - pts[a];
                let dist = d.norm();
                if dist == 0.0 || cone.contains_direction(d, dist) {
                    bad += 1;
                    first.get_or_insert((k[a], k[b]));
                }
                let dt = (coords[b].0 - coords[a].0).abs();
                let df = (coords[b].1 - coords[a].1).abs();
                lip = lip.max(if dt > 0.0 { df / dt } else { f64::INFINITY });
            }
            (bad, first, lip)
        })
        .collect();
    let cone_violations: usize = per.iter().map(|p| p.0).sum();
    let lip = per.iter().map(|p| p.2).fold(0.0, f64::max);
    let mut ts: Vec<f64> = coords.iter().map(|c| c.0).collect();
    ts.sort_by(f64::total_cmp);
    let injective = ts.windows(2).all(|w| w[0] < w[1]);
    LipschitzCheck {
        is_graph: cone_violations == 0 && injective,
        lip,
        cone_violations,
        first_violation: per.iter().find_map(|p| p.1),
    }
}

/// `t ↦ (t, f(t))` in the frame of `theta0`, linear between the sample points
/// and constant outside their range.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphCertificate {
    /// Direction of the parameter line; the cone axis is `theta0 − 1/4`.
    pub theta0: f64,
    pub lip: f64,
    pub points: Vec<(f64, f64)>,
    pub atom_ids: Vec<usize>,
}

impl GraphCertificate {
    pub fn new(mu: &DiscreteMeasure, k: &[usize], axis: crate::torus::Angle) -> Result<Self> {
        let mut rows: Vec<((f64, f64), usize)> = k
            .iter()
            .map(|&i| (graph_coordinates(axis, mu.atoms[i].point), i))
            .collect();
        rows.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0));
        if rows.windows(2).any(|w| w[0].0 .0 >= w[1].0 .0) {
            return Err(Error::invariant("graph parameter", "two atoms share a parameter value"));
        }
        let lip = rows
            .windows(2)
            .map(|w| ((w[1].0 .1 - w[0].0 .1) / (w[1].0 .0 - w[0].0 .0)).abs())
            .fold(0.0, f64::max);
        Ok(GraphCertificate {
            theta0: axis.shifted(0.25).value(),
            lip,
            points: rows.iter().map(|r| r.0).collect(),
            atom_ids: rows.iter().map(|r| r.1).collect(),
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if p.is_empty() {
            return 0.0;
        }
        let i = p.partition_point(|q| q.0 <= t);
        if i == 0 {
            return p[0].1;
        }
        if i == p.len() {
            return p[p.len() - 1].1;
        }
        let (a, b) = (p[i - 1], p[i]);
        a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Extraction {
    pub rounds: Vec<Reduction>,
    pub kept: Vec<usize>,
    /// `2^{-M₀}J`.
    pub final_interval: AngleInterval,
    pub check: LipschitzCheck,
    pub certificate: GraphCertificate,
    /// `lip · 𝓗(J)/2^{M₀}`.
    pub lip_constant: f64,
    pub kept_fraction: f64,
}

/// Halves `J` `M₀` times, reducing the bad-scale bound by one each round.
pub fn extract_graph(
    mu: &DiscreteMeasure,
    f: &[usize],
    j: &AngleInterval,
    m0: usize,
    ahlfors: f64,
    c_j: f64,
) -> Result<Extraction> {
    if f.is_empty() {
        return Err(Error::Precondition("cannot extract a graph from an empty set".into()));
    }
    if j.length() > c_j {
        return Err(Error::Precondition(format!("𝓗(J) = {} exceeds c_J = {c_j}", j.length())));
    }
    let worst = bad_counts(mu, f, j).into_iter().max().unwrap_or(0);
    if worst > m0 {
        return Err(Error::Precondition(format!("#Bad_F(x, J) reaches {worst} > M₀ = {m0}")));
    }
    let mut k = f.to_vec();
    let mut arc = *j;
    let mut rounds = Vec::new();
    for i in 1..=m0 {
        let r = reduce_bad_scales(mu, &k, &arc, m0 - i + 1, ahlfors)?;
        k = r.kept.clone();
        arc = AngleInterval::new(arc.center, arc.half_width / 2.0)?;
        rounds.push(r);
    }
    if let Some(n) = bad_counts(mu, &k, &arc).into_iter().find(|&n| n > 0) {
        return Err(Error::invariant("final bad scales", format!("an atom keeps {n} bad scales")));
    }
    let check = verify_lipschitz(mu, &k, &arc);
    if !check.is_graph {
        return Err(Error::invariant(
            "cone-free output",
            format!("{} pairs violate the cone condition", check.cone_violations),
        ));
    }
    let certificate = GraphCertificate::new(mu, &k, arc.center)?;
    Ok(Extraction {
        lip_constant: check.lip * j.length() / 2f64.powi(m0 as i32),
        kept_fraction: mu.mass_of(k.iter().copied()) / mu.mass_of(f.iter().copied()),
        rounds,
        kept: k,
        final_interval: arc,
        check,
        certificate,
    })
}
