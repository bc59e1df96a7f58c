//! Refinement of good-direction families: the filtered families `𝒢₀ ⊇ 𝒢₁ → 𝒢₂`,
//! the enlarged families `𝒢*`, and the propagation loop that iterates them.
//!
//! Direction families live in a fixed root triadic interval `J₀` and are
//! compared exactly in units of `3^{-D}` for a deepest level `D`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::conical::{energy_between_with, DirectionIndex, GoodDirectionFamily, GoodInterval};
use crate::error::{Error, Result};
use crate::exact::ExactSum;
use crate::sets::DiscreteMeasure;
use crate::torus::{maximal_triadic, pow3, DirectionSet, TriadicInterval, MAX_TRIADIC_LEVEL};

/// Growth constant in `𝓗(G*) ≥ (1 + cε)𝓗(G)`: `c = 1/3` from `𝓗(G₁ ∩ G) ≥ 𝓗(G)/3`.
pub const GROWTH_CONSTANT: f64 = 1.0 / 3.0;

/// Rounds are capped at `⌈(c ε τ)^{-1}⌉` with this `c`: each unfinished round adds
/// at least `GROWTH_CONSTANT/4 · ε τ μ(E') 𝓗(J₀)` to `∫ 𝓗(G) dμ`.
pub const ROUND_CAP_CONSTANT: f64 = GROWTH_CONSTANT / 4.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageParams {
    /// Ahlfors regularity constant `A` of the carrier.
    pub ahlfors: f64,
    /// Radius of the energy integrals, `diam(E)`.
    pub diameter: f64,
    /// `ε = c_ε/(AM)`.
    pub epsilon: f64,
    /// Kept intervals satisfy `𝓗(I) ≥ 3^{-depth} 𝓗(J₀)`.
    pub depth: u32,
    /// `c_J` in `𝓗(J₀) ≤ c_J/(AM)`.
    pub c_j: f64,
}

/// Position of a point of `E'` in the partition `E' ∖ E₀`, `E₀₀`, `E₀₁`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PointClass {
    /// Energy above `2𝓔₀`, or too little of `𝒢₁` survives the depth truncation.
    Outside,
    /// `𝒢₀(x) = {J₀}`.
    Full,
    /// `𝒢₀(x) ≠ {J₀}`.
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointStages {
    pub class: PointClass,
    pub g: Vec<GoodInterval>,
    pub energy: f64,
    pub g0: Vec<TriadicInterval>,
    /// `𝒢₁` before the depth truncation.
    pub g1_full: Vec<TriadicInterval>,
    pub g1: Vec<TriadicInterval>,
    pub g2: Vec<TriadicInterval>,
    pub g1_parents: Vec<TriadicInterval>,
    pub gstar: Vec<GoodInterval>,
    /// `𝓔₁(x) = max(𝓔₀/𝓗(G₀(x)), M)`, zero outside `E₀`.
    pub e1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageChecks {
    /// `μ(E₀)/μ(E')`, expected at least 1/2 before truncation.
    pub e0_fraction: f64,
    /// Same ratio before the depth truncation removed points.
    pub e0_fraction_untruncated: f64,
    /// `min 𝓗(G₁ ∩ G)/𝓗(G)` over `E₀`, expected at least 1/3.
    pub g1_large_min: f64,
    /// Containment both ways between `𝒢` and `𝒢*`.
    pub containment: bool,
    /// `min (𝓗(G*)/𝓗(G) − 1)/ε` over `E₀ ∖ E_Fin`.
    pub growth_min: f64,
    /// `G* ∖ G ⊆ ∪ 15J` over `J ∈ 𝒢₂` on `E₀`.
    pub new_directions_covered: bool,
    /// Witnesses of `𝒢*` lie in their intervals with value at most `M`.
    pub witnesses: bool,
}

impl StageChecks {
    pub fn holds(&self) -> bool {
        self.e0_fraction_untruncated >= 0.5
            && self.g1_large_min >= 1.0 / 3.0
            && self.containment
            && self.growth_min >= GROWTH_CONSTANT
            && self.new_directions_covered
            && self.witnesses
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodStages {
    pub root: TriadicInterval,
    pub bound: f64,
    pub epsilon: f64,
    pub e0: f64,
    /// `max_x 𝓔₁(x)` over `E₀`.
    pub e1: f64,
    /// `𝓔₂ = A 𝓔₁`.
    pub e2: f64,
    pub points: BTreeMap<usize, PointStages>,
    pub selected_mass: f64,
    pub e0_mass: f64,
    pub fin: Vec<usize>,
    pub fin_mass: f64,
    pub checks: StageChecks,
}

impl GoodStages {
    pub fn in_e0(&self, id: usize) -> bool {
        self.points.get(&id).is_some_and(|p| p.class != PointClass::Outside)
    }

    /// `(x, 𝒢₂(x))` for `x ∈ E₀`.
    pub fn very_good(&self) -> Vec<(usize, Vec<TriadicInterval>)> {
        self.points
            .iter()
            .filter(|(_, p)| p.class != PointClass::Outside)
            .map(|(&id, p)| (id, p.g2.clone()))
            .collect()
    }

    /// The families `𝒢*` as a new good-direction family.
    pub fn next_family(&self) -> GoodDirectionFamily {
        GoodDirectionFamily {
            root: self.root,
            bound: self.bound,
            families: self.points.iter().map(|(&id, p)| (id, p.gstar.clone())).collect(),
        }
    }
}

/// Exact lengths in units of `3^{-unit_level}`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Units {
    pub(crate) level: u32,
}

impl Units {
    pub(crate) fn of(&self, t: &TriadicInterval) -> u128 {
        pow3(self.level - t.level) as u128
    }

    /// `𝓗(t ∩ ∪fam)` for a disjoint triadic family.
    pub(crate) fn overlap(&self, t: &TriadicInterval, fam: &[TriadicInterval]) -> u128 {
        if fam.iter().any(|f| t.is_within(f)) {
            return self.of(t);
        }
        fam.iter().filter(|f| f.is_within(t)).map(|f| self.of(f)).sum()
    }

    pub(crate) fn total(&self, fam: &[TriadicInterval]) -> u128 {
        fam.iter().map(|f| self.of(f)).sum()
    }

    fn to_length(&self, u: u128) -> f64 {
        u as f64 / pow3(self.level) as f64
    }
}

/// Maximal `I ⊆ root` with `𝓗(I ∩ G) ≥ (1 − ε)𝓗(I)`.
fn dense_intervals(root: TriadicInterval, fam: &[TriadicInterval], eps: f64, units: Units) -> Vec<TriadicInterval> {
    let mut out = Vec::new();
    let mut stack = vec![root];
    while let Some(t) = stack.pop() {
        let covered = units.overlap(&t, fam);
        if covered == 0 {
            continue;
        }
        let missing = units.of(&t) - covered;
        if missing as f64 <= eps * units.of(&t) as f64 {
            out.push(t);
        } else if t.level < units.level {
            stack.extend(t.children());
        }
    }
    maximal_triadic(out)
}

fn intervals_of(fam: &[GoodInterval]) -> Vec<TriadicInterval> {
    fam.iter().map(|g| g.interval).collect()
}

/// `a ∖ b` for sorted disjoint interval lists.
fn pieces_difference(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(s, e) in a {
        let mut cur = s;
        for &(bs, be) in b {
            if be <= cur || bs >= e {
                continue;
            }
            if bs > cur {
                out.push((cur, bs));
            }
            cur = cur.max(be);
        }
        if cur < e {
            out.push((cur, e));
        }
    }
    out
}

fn pieces_within(a: &[(f64, f64)], b: &[(f64, f64)], slack: f64) -> bool {
    a.iter()
        .all(|&(s, e)| e - s <= slack || b.iter().any(|&(bs, be)| bs <= s + slack && e <= be + slack))
}

fn energy_of(mu: &DiscreteMeasure, id: usize, fam: &[TriadicInterval], diameter: f64) -> f64 {
    let index = DirectionIndex::new(&DirectionSet::from_triadic(fam));
    energy_between_with(mu, mu.atoms[id].point, &index, 0.0, diameter)
}

/// Splits `E'` into `E₀`, `E₀₀`, `E₀₁`, refines the families and builds `𝒢*`.
pub fn build_good_stages(mu: &DiscreteMeasure, family: &GoodDirectionFamily, params: &StageParams) -> Result<GoodStages> {
    family
        .validate()
        .map_err(|e| Error::Precondition(format!("good-direction witnesses: {e}")))?;
    if family.families.is_empty() {
        return Err(Error::Precondition("no points with good directions".into()));
    }
    let root = family.root;
    let deepest = family
        .families
        .values()
        .flat_map(|f| f.iter().map(|g| g.interval.level))
        .max()
        .unwrap_or(root.level);
    let unit_level = deepest.max(root.level + params.depth + 1);
    if unit_level > MAX_TRIADIC_LEVEL {
        return Err(Error::Resource(format!("triadic level {unit_level} too deep")));
    }
    let units = Units { level: unit_level };
    let ids: Vec<usize> = family.points().collect();
    for &id in &ids {
        if id >= mu.len() {
            return Err(Error::Precondition(format!("atom {id} out of range")));
        }
    }
    let energies: Vec<f64> = ids
        .par_iter()
        .map(|&id| energy_of(mu, id, &family.intervals(id), params.diameter))
        .collect();
    let selected_mass_exact: ExactSum = ids.iter().map(|&id| mu.atoms[id].weight).sum();
    let selected_mass = selected_mass_exact.to_f64();
    let weighted: ExactSum = ids.iter().zip(&energies).map(|(&id, &en)| mu.atoms[id].weight * en).sum();
    let e0 = weighted.to_f64() / selected_mass + 1.0;
    let eps = params.epsilon;
    let keep_level = root.level + params.depth;

    let per_point: Vec<(usize, PointStages, bool)> = ids
        .par_iter()
        .zip(&energies)
        .map(|(&id, &energy)| {
            let g = family.families[&id].clone();
            let g_int = intervals_of(&g);
            let outside = |in_e0_before: bool| {
                let p = PointStages {
                class: PointClass::Outside,
                g: g.clone(),
                energy,
                g0: Vec::new(),
                g1_full: Vec::new(),
                g1: Vec::new(),
                g2: Vec::new(),
                g1_parents: Vec::new(),
                gstar: g.clone(),
                e1: 0.0,
                };
                (id, p, in_e0_before)
            };
            if energy > 2.0 * e0 {
                return outside(false);
            }
            let g0 = dense_intervals(root, &g_int, eps, units);
            let g0_len = units.to_length(units.total(&g0));
            let g1_full: Vec<TriadicInterval> = g0
                .iter()
                .copied()
                .filter(|i| {
                    let inside: Vec<TriadicInterval> =
                        g_int.iter().copied().filter(|f| f.is_within(i)).collect();
                    let part = if inside.is_empty() { vec![*i] } else { inside };
                    energy_of(mu, id, &part, params.diameter) <= 4.0 * i.length() / g0_len * e0
                })
                .collect();
            let g1: Vec<TriadicInterval> = g1_full.iter().copied().filter(|i| i.level <= keep_level).collect();
            if 2 * units.total(&g1) < units.total(&g1_full) || g1.is_empty() {
                return outside(true);
            }
            let g2: Vec<TriadicInterval> = g1.iter().map(|i| i.middle_child()).collect();
            let full = g0 == [root];
            let g1_parents = if full {
                Vec::new()
            } else {
                maximal_triadic(g1.iter().map(|i| i.parent().expect("strictly inside the root")))
            };
            let gstar = if full {
                vec![GoodInterval {
                    interval: root,
                    witness: g[0].witness,
                    witness_value: g[0].witness_value,
                }]
            } else {
                maximal_triadic(g_int.iter().copied().chain(g1_parents.iter().copied()))
                    .into_iter()
                    .map(|t| {
                        let w = g.iter().find(|gi| gi.interval.is_within(&t)).unwrap_or(&g[0]);
                        GoodInterval {
                            interval: t,
                            witness: w.witness,
                            witness_value: w.witness_value,
                        }
                    })
                    .collect()
            };
            let e1 = (e0 / g0_len).max(family.bound);
            (
                id,
                PointStages {
                    class: if full { PointClass::Full } else { PointClass::Partial },
                    g,
                    energy,
                    g0,
                    g1_full,
                    g1,
                    g2,
                    g1_parents,
                    gstar,
                    e1,
                },
                true,
            )
        })
        .collect();

    let mut points = BTreeMap::new();
    let mut e0_mass = ExactSum::zero();
    let mut e0_mass_untruncated = ExactSum::zero();
    let mut fin_mass = ExactSum::zero();
    let mut fin = Vec::new();
    let mut g1_large_min = f64::INFINITY;
    let mut growth_min = f64::INFINITY;
    let mut containment = true;
    let mut covered = true;
    let mut witnesses = true;
    let mut e1 = family.bound;
    for (id, p, in_e0_before) in per_point {
        let w = mu.atoms[id].weight;
        if in_e0_before {
            e0_mass_untruncated.add_f64(w);
        }
        let g_int = intervals_of(&p.g);
        let gs_int = intervals_of(&p.gstar);
        let g_len = units.total(&g_int);
        let gs_len = units.total(&gs_int);
        if p.class != PointClass::Outside {
            e0_mass.add_f64(w);
            e1 = e1.max(p.e1);
            let g1_cap: u128 = p.g1_full.iter().map(|i| units.overlap(i, &g_int)).sum();
            g1_large_min = g1_large_min.min(g1_cap as f64 / g_len as f64);
            let halo = DirectionSet {
                arcs: p.g2.iter().map(|j| j.dilate(15.0)).collect(),
            };
            let new = pieces_difference(
                &DirectionSet::from_triadic(&gs_int).pieces(),
                &DirectionSet::from_triadic(&g_int).pieces(),
            );
            covered &= pieces_within(&new, &halo.pieces(), 1e-12);
        }
        let is_fin = gs_int == [root];
        if is_fin {
            fin.push(id);
            fin_mass.add_f64(w);
        } else if p.class != PointClass::Outside {
            growth_min = growth_min.min((gs_len as f64 / g_len as f64 - 1.0) / eps);
        }
        containment &= g_int.iter().all(|i| gs_int.iter().any(|s| i.is_within(s)))
            && gs_int.iter().all(|s| g_int.iter().any(|i| i.is_within(s)));
        witnesses &= p
            .gstar
            .iter()
            .all(|s| s.interval.contains(s.witness) && s.witness_value <= family.bound);
        points.insert(id, p);
    }
    let e0_mass = e0_mass.to_f64();
    Ok(GoodStages {
        root,
        bound: family.bound,
        epsilon: eps,
        e0,
        e1,
        e2: params.ahlfors * e1,
        points,
        selected_mass,
        e0_mass,
        fin,
        fin_mass: fin_mass.to_f64(),
        checks: StageChecks {
            e0_fraction: e0_mass / selected_mass,
            e0_fraction_untruncated: e0_mass_untruncated.to_f64() / selected_mass,
            g1_large_min,
            containment,
            growth_min,
            new_directions_covered: covered,
            witnesses,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropagationRound {
    pub round: usize,
    /// `∫_{E'} 𝓗(G(x)) dμ / (μ(E')𝓗(J₀))` entering the round.
    pub mean_length: f64,
    /// Same after replacing `G` by `G*`.
    pub mean_length_after: f64,
    pub fin_fraction: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    /// `∫ 𝓔(x, G*) / (∫ 𝓔(x, G) + 𝓗(J₀)μ(E))`.
    pub energy_ratio: f64,
    pub checks: StageChecks,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub ahlfors: f64,
    pub root_length: f64,
    /// `c_J/(AM)`.
    pub root_length_bound: f64,
    /// `δ = μ(E')/μ(E)`.
    pub delta: f64,
    /// `τ = min 𝓗(G(x))/𝓗(J₀)`.
    pub tau: f64,
    pub witnesses: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Propagation {
    pub hypotheses: HypothesisReport,
    pub rounds: Vec<PropagationRound>,
    pub round_cap: usize,
    pub stages: GoodStages,
    pub family: GoodDirectionFamily,
    /// `F = E_Fin`.
    pub fin: Vec<usize>,
    pub fin_mass: f64,
}

/// Iterates `𝒢 → 𝒢*` until `μ(E_Fin) ≥ μ(E')/4`.
pub fn propagate_good_directions(
    mu: &DiscreteMeasure,
    family: &GoodDirectionFamily,
    params: &StageParams,
) -> Result<Propagation> {
    let root = family.root;
    let witnesses_ok = family.validate().is_ok();
    if !witnesses_ok {
        return Err(Error::Precondition("hypothesis (e): a good interval lacks a bounded witness".into()));
    }
    let bound_root = params.c_j / (params.ahlfors * family.bound);
    if root.length() > bound_root {
        return Err(Error::hypothesis(
            "(b) small root interval",
            format!("𝓗(J₀) = {} exceeds c_J/(AM) = {}", root.length(), bound_root),
        ));
    }
    let total_mass = mu.total_mass();
    let selected: f64 = mu.mass_of(family.points());
    let tau = family
        .points()
        .map(|id| family.union_length(id) / root.length())
        .fold(f64::INFINITY, f64::min);
    if !(tau > 0.0) {
        return Err(Error::hypothesis("(d) long good families", "some point has no good directions"));
    }
    let hypotheses = HypothesisReport {
        ahlfors: params.ahlfors,
        root_length: root.length(),
        root_length_bound: bound_root,
        delta: selected / total_mass,
        tau,
        witnesses: witnesses_ok,
    };
    let round_cap = (1.0 / (ROUND_CAP_CONSTANT * params.epsilon * tau)).ceil() as usize;
    let mut current = family.clone();
    let mut rounds = Vec::new();
    loop {
        let stages = build_good_stages(mu, &current, params)?;
        let next = stages.next_family();
        let mean = |f: &GoodDirectionFamily| {
            let s: ExactSum = f.points().map(|id| mu.atoms[id].weight * f.union_length(id)).sum();
            s.to_f64() / (selected * root.length())
        };
        let energy_after: ExactSum = next
            .points()
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&id| mu.atoms[id].weight * energy_of(mu, id, &next.intervals(id), params.diameter))
            .collect::<Vec<f64>>()
            .into_iter()
            .sum();
        let energy_before: ExactSum = stages
            .points
            .iter()
            .map(|(&id, p)| mu.atoms[id].weight * p.energy)
            .sum();
        let (eb, ea) = (energy_before.to_f64(), energy_after.to_f64());
        rounds.push(PropagationRound {
            round: rounds.len() + 1,
            mean_length: mean(&current),
            mean_length_after: mean(&next),
            fin_fraction: stages.fin_mass / selected,
            energy_before: eb,
            energy_after: ea,
            energy_ratio: ea / (eb + root.length() * total_mass),
            checks: stages.checks.clone(),
        });
        if 4.0 * stages.fin_mass >= selected {
            let fin = stages.fin.clone();
            let fin_mass = stages.fin_mass;
            return Ok(Propagation {
                hypotheses,
                rounds,
                round_cap,
                stages,
                family: next,
                fin,
                fin_mass,
            });
        }
        if rounds.len() >= round_cap {
            let trace: Vec<String> = rounds.iter().map(|r| format!("{:.6}", r.mean_length_after)).collect();
            return Err(Error::invariant(
                "propagation round cap",
                format!("{} rounds without μ(E_Fin) ≥ μ(E')/4; mean 𝓗(G)/𝓗(J₀) per round: {}", round_cap, trace.join(", ")),
            ));
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{Angle, Point};

    fn unit_line(n: usize) -> DiscreteMeasure {
        let pts: Vec<Point> = (0..n).map(|i| Point::new(i as f64 / n as f64, 0.0)).collect();
        let mut mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
        for a in &mut mu.atoms {
            a.weight = 1.0 / n as f64;
        }
        mu
    }

    fn family(root: TriadicInterval, ids: impl Iterator<Item = usize>, fam: &[TriadicInterval]) -> GoodDirectionFamily {
        GoodDirectionFamily {
            root,
            bound: 4.0,
            families: ids
                .map(|id| {
                    (
                        id,
                        fam.iter()
                            .map(|&t| GoodInterval {
                                interval: t,
                                witness: t.center(),
                                witness_value: 1.0,
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    fn params() -> StageParams {
        StageParams {
            ahlfors: 1.0,
            diameter: 1.0,
            epsilon: 2f64.powi(-6) / 4.0,
            depth: 5,
            c_j: 1.0,
        }
    }

    /// Vertical cone directions around 1/4, transverse to the horizontal line.
    fn vertical_root() -> TriadicInterval {
        TriadicInterval::containing(Angle::new(0.25), 2)
    }

    #[test]
    fn full_family_is_final() {
        let mu = unit_line(32);
        let root = vertical_root();
        let s = build_good_stages(&mu, &family(root, 0..32, &[root]), &params()).unwrap();
        let p = &s.points[&3];
        assert_eq!(p.class, PointClass::Full);
        assert_eq!(p.g0, vec![root]);
        assert_eq!(p.g1, p.g0);
        assert_eq!(p.g2, vec![root.middle_child()]);
        assert_eq!(s.fin.len(), 32);
        assert!(s.checks.holds());
    }

    #[test]
    fn one_child_grows_to_parent() {
        let mu = unit_line(32);
        let root = vertical_root();
        let child = root.children()[0];
        let s = build_good_stages(&mu, &family(root, 0..32, &[child]), &params()).unwrap();
        let p = &s.points[&5];
        assert_eq!(p.g0, vec![child]);
        assert_eq!(p.g1, vec![child]);
        let gs: Vec<TriadicInterval> = p.gstar.iter().map(|g| g.interval).collect();
        assert_eq!(gs, vec![root]);
        assert!(s.checks.containment);
        let prop = propagate_good_directions(&mu, &family(root, 0..32, &[child]), &params()).unwrap();
        assert_eq!(prop.rounds.len(), 1);
        assert_eq!(prop.fin.len(), 32);
        assert!(prop.rounds.len() <= prop.round_cap);
    }

    #[test]
    fn deep_child_propagates_monotonically() {
        let mu = unit_line(32);
        let root = vertical_root();
        let deep = root.children()[2].children()[0];
        let prop = propagate_good_directions(&mu, &family(root, 0..32, &[deep]), &params()).unwrap();
        assert!(prop.rounds.len() >= 2);
        for w in prop.rounds.windows(2) {
            assert!(w[1].mean_length > w[0].mean_length);
        }
        assert!(4.0 * prop.fin_mass >= mu.total_mass());
    }

    #[test]
    fn missing_witness_is_rejected() {
        let mu = unit_line(8);
        let root = vertical_root();
        let mut f = family(root, 0..8, &[root]);
        f.families.get_mut(&0).unwrap()[0].witness_value = 10.0;
        assert!(matches!(propagate_good_directions(&mu, &f, &params()), Err(Error::Precondition(_))));
        let wide = family(TriadicInterval::ROOT, 0..8, &[TriadicInterval::ROOT]);
        assert!(matches!(propagate_good_directions(&mu, &wide, &params()), Err(Error::Hypothesis { .. })));
    }
}
