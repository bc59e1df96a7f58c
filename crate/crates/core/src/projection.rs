//! Orthogonal projections of segment unions: exact projected sets, Favard
//! length by quadrature and by needle dropping, push-forward densities and
//! their Hardy-Littlewood maximal function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sets::SegmentUnion;
use crate::torus::{project, Angle, Point};

/// Sorted, pairwise disjoint closed intervals of the line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntervalUnion1D {
    pub intervals: Vec<(f64, f64)>,
}

impl IntervalUnion1D {
    /// Sorts and merges; touching intervals `[a,b], [b,c]` merge.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (l, r) in raw {
            debug_assert!(l <= r);
            match intervals.last_mut() {
                Some(last) if l <= last.1 => last.1 = last.1.max(r),
                _ => intervals.push((l, r)),
            }
        }
        IntervalUnion1D { intervals }
    }

    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(l, r)| r - l).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        let k = self.intervals.partition_point(|iv| iv.1 < t);
        k < self.intervals.len() && self.intervals[k].0 <= t
    }
}

/// `π_θ(E)` as an exact union of intervals.
pub fn project_segments(e: &SegmentUnion, theta: Angle) -> IntervalUnion1D {
    let d = theta.direction();
    IntervalUnion1D::from_intervals(
        e.segments
            .iter()
            .map(|s| {
                let (p, q) = (s.a.dot(d), s.b.dot(d));
                (p.min(q), p.max(q))
            })
            .collect(),
    )
}

/// Deterministic pairwise summation (independent of thread count).
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Midpoint-rule Favard length `(1/n) Σ H(π_{θ_i}(E))`, `θ_i = (i + 1/2)/n`.
pub fn favard(e: &SegmentUnion, n_angles: usize) -> Result<f64> {
    if n_angles < 2 {
        return Err(Error::Precondition(format!("n_angles must be at least 2, got {n_angles}")));
    }
    let lengths: Vec<f64> = (0..n_angles)
        .into_par_iter()
        .map(|i| project_segments(e, Angle::new((i as f64 + 0.5) / n_angles as f64)).measure())
        .collect();
    Ok(pairwise_sum(&lengths) / n_angles as f64)
}

/// Projected lengths on the midpoint grid, for table output.
pub fn projection_profile(e: &SegmentUnion, n_angles: usize) -> Vec<(f64, f64)> {
    (0..n_angles)
        .into_par_iter()
        .map(|i| {
            let theta = (i as f64 + 0.5) / n_angles as f64;
            (theta, project_segments(e, Angle::new(theta)).measure())
        })
        .collect()
}

/// A measure on the line: piecewise constant density plus point masses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstDensity {
    /// `t_0 < … < t_m`.
    pub breakpoints: Vec<f64>,
    /// `values[i]` is the density on `(t_i, t_{i+1})`.
    pub values: Vec<f64>,
    /// `(position, mass)`, sorted by position.
    pub atoms: Vec<(f64, f64)>,
}

impl PiecewiseConstDensity {
    /// Builds from explicit pieces; `values.len() + 1 == breakpoints.len()` unless both are empty.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        let ok_shape = (breakpoints.is_empty() && values.is_empty())
            || breakpoints.len() == values.len() + 1;
        if !ok_shape {
            return Err(Error::Precondition("density needs one value per gap between breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Precondition("breakpoints must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Precondition("density values must be finite and nonnegative".into()));
        }
        if atoms.iter().any(|a| !(a.1 > 0.0 && a.0.is_finite())) {
            return Err(Error::Precondition("atom masses must be positive".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(PiecewiseConstDensity {
            breakpoints,
            values,
            atoms,
        })
    }

    pub fn total_mass(&self) -> f64 {
        let cont: Vec<f64> = self
            .values
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .chain(self.atoms.iter().map(|a| a.1))
            .collect();
        pairwise_sum(&cont)
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty() && self.values.iter().all(|&v| v == 0.0)
    }

    /// Mean of the one-sided densities at `t`; atoms are ignored.
    pub fn density_at(&self, t: f64) -> f64 {
        let (l, r) = self.one_sided_values(t);
        0.5 * (l + r)
    }

    /// Density on the open gap right of `t` and left of `t`.
    fn one_sided_values(&self, t: f64) -> (f64, f64) {
        let b = &self.breakpoints;
        if b.is_empty() {
            return (0.0, 0.0);
        }
        let value_on = |i: usize| -> f64 {
            // gap i is (b[i], b[i+1])
            if i < self.values.len() {
                self.values[i]
            } else {
                0.0
            }
        };
        // index of first breakpoint > t
        let k = b.partition_point(|&x| x <= t);
        let right = if k == 0 { 0.0 } else { value_on(k - 1) };
        let left = if k == 0 {
            0.0
        } else if b[k - 1] == t {
            if k >= 2 {
                value_on(k - 2)
            } else {
                0.0
            }
        } else {
            value_on(k - 1)
        };
        (left, right)
    }
}

/// Evaluator for `ν([a, b])` in logarithmic time, with the maximal function on top.
#[derive(Clone, Debug)]
pub struct MaximalEvaluator {
    density: PiecewiseConstDensity,
    /// Continuous mass on `(-∞, t_i]`.
    prefix: Vec<f64>,
    /// Atom mass of the first `i` atoms.
    atom_prefix: Vec<f64>,
}

impl MaximalEvaluator {
    pub fn new(density: PiecewiseConstDensity) -> Self {
        let mut prefix = Vec::with_capacity(density.breakpoints.len());
        let mut acc = 0.0;
        for (i, &t) in density.breakpoints.iter().enumerate() {
            if i > 0 {
                acc += density.values[i - 1] * (t - density.breakpoints[i - 1]);
            }
            prefix.push(acc);
        }
        let mut atom_prefix = vec![0.0];
        let mut a = 0.0;
        for &(_, m) in &density.atoms {
            a += m;
            atom_prefix.push(a);
        }
        MaximalEvaluator {
            density,
            prefix,
            atom_prefix,
        }
    }

    pub fn density(&self) -> &PiecewiseConstDensity {
        &self.density
    }

    /// Continuous mass of `(-∞, x]`.
    fn cdf(&self, x: f64) -> f64 {
        let b = &self.density.breakpoints;
        if b.is_empty() || x <= b[0] {
            return 0.0;
        }
        let k = b.partition_point(|&t| t <= x);
        if k == b.len() {
            return *self.prefix.last().expect("nonempty");
        }
        self.prefix[k - 1] + self.density.values[k - 1] * (x - b[k - 1])
    }

    /// `ν([a, b])` for the closed interval.
    pub fn closed_mass(&self, a: f64, b: f64) -> f64 {
        let atoms = &self.density.atoms;
        let lo = atoms.partition_point(|p| p.0 < a);
        let hi = atoms.partition_point(|p| p.0 <= b);
        let atom_mass = if hi > lo {
            self.atom_prefix[hi] - self.atom_prefix[lo]
        } else {
            0.0
        };
        (self.cdf(b) - self.cdf(a)).max(0.0) + atom_mass
    }

    /// `𝓜ν(t) = sup_{r>0} ν((t−r, t+r))/(2r)`.
    ///
    /// `r ↦ ν((t−r,t+r))` is affine between consecutive distances from `t` to
    /// breakpoints and atoms, so the ratio is monotone there and the supremum
    /// is approached at one of those distances (from above, where the open
    /// window already contains the boundary atoms) or as `r → 0⁺`, where the
    /// ratio tends to the mean of the one-sided densities.
    pub fn value(&self, t: f64) -> f64 {
        let d = &self.density;
        let k = d.atoms.partition_point(|p| p.0 < t);
        if k < d.atoms.len() && d.atoms[k].0 == t {
            return f64::INFINITY;
        }
        let (left, right) = d.one_sided_values(t);
        let mut best = 0.5 * (left + right);
        for &x in d.breakpoints.iter().chain(d.atoms.iter().map(|p| &p.0)) {
            let r = (x - t).abs();
            if r > 0.0 {
                best = best.max(self.closed_mass(t - r, t + r) / (2.0 * r));
            }
        }
        best
    }
}

pub fn maximal_value(nu: &PiecewiseConstDensity, t: f64) -> Result<f64> {
    if nu.is_zero() {
        return Err(Error::Precondition("maximal function of the zero measure".into()));
    }
    Ok(MaximalEvaluator::new(nu.clone()).value(t))
}

/// Default cutoff below which `|cos(2π(θ−φ))|` turns a segment into an atom.
pub const DEFAULT_PERP_CUTOFF: f64 = 1e-9;

/// `π_θ μ` for arclength `μ` on `E`.
///
/// A segment of direction `φ` contributes density `1/|cos 2π(θ−φ)|` on its
/// projection; segments with `|cos| < η` contribute their length as an atom at
/// the projected midpoint. Each elementary piece sums its covering segments in
/// segment order.
pub fn pushforward_density(e: &SegmentUnion, theta: Angle, perp_cutoff: f64) -> Result<PiecewiseConstDensity> {
    if !(perp_cutoff >= 0.0) {
        return Err(Error::Precondition("perp cutoff must be nonnegative".into()));
    }
    let d = theta.direction();
    let mut spans: Vec<(f64, f64, f64)> = Vec::new();
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for s in &e.segments {
        let v = s.b - s.a;
        let len = v.norm();
        let c = v.dot(d) / len;
        let (p, q) = (s.a.dot(d), s.b.dot(d));
        if c.abs() < perp_cutoff || p == q {
            atoms.push((0.5 * (p + q), len));
        } else {
            spans.push((p.min(q), p.max(q), 1.0 / c.abs()));
        }
    }
    let mut bps: Vec<f64> = spans.iter().flat_map(|s| [s.0, s.1]).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    // Sweep: spans sorted by start; active list kept in segment order.
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| spans[a].0.total_cmp(&spans[b].0));
    let mut next = 0;
    let mut active: std::collections::BTreeSet<usize> = Default::default();
    let mut values = Vec::with_capacity(bps.len().saturating_sub(1));
    for w in bps.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        while next < order.len() && spans[order[next]].0 <= lo {
            active.insert(order[next]);
            next += 1;
        }
        active.retain(|&i| spans[i].1 >= hi);
        values.push(active.iter().map(|&i| spans[i].2).sum());
    }
    // Merge atoms at the same position.
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
    for (t, m) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == t => last.1 += m,
            _ => merged.push((t, m)),
        }
    }
    PiecewiseConstDensity::new(bps, values, merged)
}

/// Precomputed `π_θ μ` answering `μ_θ(x) = 𝓜(π_θ μ)(π_θ x)` for many points.
#[derive(Clone, Debug)]
pub struct ProjectedMeasure {
    pub theta: Angle,
    evaluator: MaximalEvaluator,
}

impl ProjectedMeasure {
    pub fn new(e: &SegmentUnion, theta: Angle, perp_cutoff: f64) -> Result<Self> {
        Ok(ProjectedMeasure {
            theta,
            evaluator: MaximalEvaluator::new(pushforward_density(e, theta, perp_cutoff)?),
        })
    }

    pub fn mu_theta(&self, x: Point) -> f64 {
        self.evaluator.value(project(self.theta, x))
    }

    pub fn density(&self) -> &PiecewiseConstDensity {
        self.evaluator.density()
    }
}

pub fn mu_theta(e: &SegmentUnion, theta: Angle, x: Point, perp_cutoff: f64) -> Result<f64> {
    if e.is_empty() {
        return Err(Error::Precondition("μ_θ of an empty set".into()));
    }
    Ok(ProjectedMeasure::new(e, theta, perp_cutoff)?.mu_theta(x))
}

/// `μ_θ^⊥(x) = μ_{θ+1/4}(x)`.
pub fn mu_theta_perp(e: &SegmentUnion, theta: Angle, x: Point, perp_cutoff: f64) -> Result<f64> {
    mu_theta(e, theta.perp(), x, perp_cutoff)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub needles: u64,
    pub hits: u64,
}

/// Needles per random stream; the stream index is the batch index.
pub const MC_BATCH: u64 = 1 << 14;

/// Buffon-style estimate of the Favard length.
///
/// Lines `{π_θ = t}` are drawn with `θ` uniform in `[0,1)` and `t` uniform in
/// the projection of the bounding disc `B(c, R)`; `Fav(E) = 2R · P(line meets E)`.
/// Batch `b` draws from `ChaCha8(seed)` on stream `b`, so the estimate does not
/// depend on the worker count.
pub fn favard_mc(e: &SegmentUnion, needle_count: u64, seed: u64) -> Result<McEstimate> {
    if needle_count < 100 {
        return Err(Error::Precondition(format!("needle_count must be at least 100, got {needle_count}")));
    }
    let Some((lo, hi)) = e.bounding_box() else {
        return Ok(McEstimate {
            estimate: 0.0,
            stderr: 0.0,
            needles: needle_count,
            hits: 0,
        });
    };
    let c = lo.lerp(hi, 0.5);
    let radius = e.endpoints().map(|p| p.dist(c)).fold(0.0, f64::max);
    let batches = needle_count.div_ceil(MC_BATCH);
    let hits: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let n = MC_BATCH.min(needle_count - b * MC_BATCH);
            let mut hits = 0u64;
            for _ in 0..n {
                let theta: f64 = rng.random();
                let u: f64 = rng.random();
                let d = Angle::new(theta).direction();
                let t = c.dot(d) + radius * (2.0 * u - 1.0);
                let hit = e.segments.iter().any(|s| {
                    let (p, q) = (s.a.dot(d), s.b.dot(d));
                    p.min(q) <= t && t <= p.max(q)
                });
                hits += hit as u64;
            }
            hits
        })
        .sum();
    let n = needle_count as f64;
    let p = hits as f64 / n;
    let width = 2.0 * radius;
    Ok(McEstimate {
        estimate: width * p,
        stderr: width * (p * (1.0 - p) / n).sqrt(),
        needles: needle_count,
        hits,
    })
}
