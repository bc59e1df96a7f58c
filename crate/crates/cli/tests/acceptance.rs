//! Acceptance suite: one line per criterion, tolerances pinned below.
//!
//! Runs without the libtest harness so every line reaches the terminal; the
//! process exits nonzero when any criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use favard_cli::commands::{cantor_decay, compute};
use favard_core::config::ExperimentConfig;
use favard_core::conical::{annulus_energy, conical_energy};
use favard_core::gap::{find_gap_interval, line_gap_fixture, GapParams};
use favard_core::graph::{bad_counts, extract_graph, verify_lipschitz};
use favard_core::lattice::{check_descend, descend, whitney, whitney_admissible, BaseLattice, DyadicInterval, OpenSet};
use favard_core::pipeline::{run_pipeline, PipelineParams, PipelineReport};
use favard_core::projection::{favard, MaximalEvaluator, PiecewiseConstDensity};
use favard_core::sets::{four_corners, skeleton, DiscreteMeasure, Segment, SegmentUnion};
use favard_core::torus::{
    ball_in_cone_factor, comparability_factor, cone_in_cone_factor, d_metric, project, project_perp, Angle,
    AngleInterval, Cone, DirectionSet, Point, TriadicInterval, CONE_IN_BALL_CONSTANT,
};
use favard_core::tree::{build_tree, check_tree, TreeParams, TreeReport, VeryGoodFamily};

const SEGMENT_TOL: f64 = 1e-3;
const SQUARE_TOL: f64 = 2e-3;
const POLYGON_TOL: f64 = 5e-3;
const CLOSED_FORM_ANGLES: usize = 4096;
const SEGMENT_BUDGET: Duration = Duration::from_secs(1);

const MC_UNIONS: usize = 10;
const MC_MAX_SEGMENTS: usize = 50;
const MC_NEEDLES: u64 = 1_000_000;
const MC_SIGMAS: f64 = 3.0;
const MC_BUDGET: Duration = Duration::from_secs(30);

const INCLUSION_TRIALS: usize = 10_000;
const INCLUSION_BUDGET: Duration = Duration::from_secs(10);

const MAXIMAL_DENSITIES: usize = 100;
const MAXIMAL_GRID: usize = 10_000;
const MAXIMAL_TOL: f64 = 1e-9;

const ENERGY_INSTANCES: usize = 100;
const SCALE_COMPARISON_CAP: f64 = 64.0;

const LATTICE_INSTANCES: usize = 100;
const WHITNEY_INSTANCES: usize = 100;

const TREE_K_MAX: u32 = 5;
const TREE_DEPTH: u32 = 5;
const TREE_BUDGET: Duration = Duration::from_secs(60);

const GAP_INSTANCES: u64 = 50;

const EXTRACTION_INSTANCES: usize = 20;
const ABS_GRAPH_TOL: f64 = 1e-9;

const GOLDEN_TOL: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn seg(a: (f64, f64), b: (f64, f64)) -> Segment {
    Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1)).unwrap()
}

// 1
fn favard_closed_forms() -> Outcome {
    let unit = SegmentUnion::new(vec![seg((0.0, 0.0), (1.0, 0.0))]);
    let t = Instant::now();
    let f_seg = favard(&unit, CLOSED_FORM_ANGLES).unwrap();
    let seg_time = t.elapsed();
    let f_square = favard(&skeleton(&four_corners(0).unwrap()), CLOSED_FORM_ANGLES).unwrap();
    let n = 64;
    let vertex = |k: usize| {
        let a = 2.0 * PI * k as f64 / n as f64;
        (a.cos(), a.sin())
    };
    let polygon = SegmentUnion::new((0..n).map(|k| seg(vertex(k), vertex(k + 1))).collect());
    let f_poly = favard(&polygon, CLOSED_FORM_ANGLES).unwrap();
    let e = [
        (f_seg - 2.0 / PI).abs(),
        (f_square - 4.0 / PI).abs(),
        (f_poly - 2.0).abs(),
    ];
    outcome(
        e[0] <= SEGMENT_TOL && e[1] <= SQUARE_TOL && e[2] <= POLYGON_TOL && seg_time < SEGMENT_BUDGET,
        format!(
            "segment err {:.2e} in {:?}, square err {:.2e}, 64-gon err {:.2e}",
            e[0], seg_time, e[1], e[2]
        ),
    )
}

// 2
fn exact_vs_mc() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut fails = 0;
    for i in 0..MC_UNIONS {
        let count = rng.random_range(1..=MC_MAX_SEGMENTS);
        let segs = (0..count)
            .map(|_| {
                let a = (rng.random::<f64>(), rng.random::<f64>());
                let b = (rng.random::<f64>(), rng.random::<f64>());
                seg(a, b)
            })
            .collect();
        let (r, _) = compute(&SegmentUnion::new(segs), CLOSED_FORM_ANGLES, Some(MC_NEEDLES), 100 + i as u64).unwrap();
        let mc = r.mc.unwrap();
        // Second route: the deviation recomputed here, not taken from the report.
        let dev = (r.favard - mc.estimate).abs() / mc.stderr;
        worst = worst.max(dev);
        if dev > MC_SIGMAS || r.mc_agrees != Some(true) {
            fails += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        fails == 0 && elapsed < MC_BUDGET,
        format!("{MC_UNIONS} unions, worst deviation {worst:.2}σ, {elapsed:?}"),
    )
}

fn random_arc(rng: &mut ChaCha8Rng, max_width: f64) -> AngleInterval {
    let w = rng.random_range(1e-3..max_width);
    AngleInterval::new(Angle::new(rng.random()), w / 2.0).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, scale: f64) -> Point {
    Point::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

/// A point `x ± s·e_φ` with `φ` uniform in `arc` and `s` uniform in `[lo, hi]`.
fn point_in_cone(rng: &mut ChaCha8Rng, x: Point, arc: &AngleInterval, lo: f64, hi: f64) -> Point {
    let phi = Angle::new(arc.center.value() + arc.half_width * rng.random_range(-1.0..=1.0));
    let s = rng.random_range(lo..=hi);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    x + (sign * s) * phi.direction()
}

/// Membership in `X(x, arc, lo, hi)` from the line angle, independent of [`Cone`].
fn in_cone_by_angle(x: Point, y: Point, arc: &AngleInterval, lo: f64, hi: f64, slack: f64) -> bool {
    let d = y - x;
    let dist = d.norm();
    if dist < lo * (1.0 - slack) || dist > hi * (1.0 + slack) {
        return false;
    }
    let line = d.x2.atan2(d.x1) / (2.0 * PI);
    let off = (line - arc.center.value()).rem_euclid(0.5);
    off.min(0.5 - off) <= arc.half_width + slack
}

// 3
fn cone_metric_inclusions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = Instant::now();
    let mut violations = [0usize; 6];
    let mut worst_cone_in_ball: f64 = 0.0;
    for _ in 0..INCLUSION_TRIALS {
        // Cone-in-ball: X(x, αI, r) ⊂ B_I(x, Cαr).
        let arc = random_arc(&mut rng, 1.0 / 16.0);
        let alpha = rng.random_range(1.0..=4.0);
        let r = rng.random_range(1e-3..10.0);
        let x = random_point(&mut rng, 5.0);
        let wide = arc.dilate(alpha);
        let y = point_in_cone(&mut rng, x, &wide, 0.0, r);
        let ratio = d_metric(&arc, x, y) / (alpha * r);
        worst_cone_in_ball = worst_cone_in_ball.max(ratio);
        if ratio > CONE_IN_BALL_CONSTANT {
            violations[0] += 1;
        }

        // Ball-in-cone: y ∈ X(x, I, r, 2r) ⟹ B(y, c𝓗(I)r) ⊂ X(x, αI, r/2, 4r).
        let alpha = rng.random_range(1.05..=4.0);
        let y = point_in_cone(&mut rng, x, &arc, r, 2.0 * r);
        let c = ball_in_cone_factor(alpha);
        let u = Angle::new(rng.random()).direction();
        let z = y + (c * arc.length() * r * rng.random::<f64>().sqrt()) * u;
        let target = Cone::new(x, &DirectionSet::single(arc.dilate(alpha)), r / 2.0, 4.0 * r);
        if !target.contains(z) || !in_cone_by_angle(x, z, &arc.dilate(alpha), r / 2.0, 4.0 * r, 1e-12) {
            violations[1] += 1;
        }

        // Cone-in-cone: r > C(α)d_I(x, y) ⟹ X(x, I, r, R) ⊂ X(y, αI, r/2, 2R).
        let alpha = rng.random_range(1.05..=2.0);
        let y = x + Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let sep = d_metric(&arc, x, y);
        let r = cone_in_cone_factor(alpha) * sep * rng.random_range(1.0001..4.0);
        let big_r = r * rng.random_range(1.0..16.0);
        let z = point_in_cone(&mut rng, x, &arc, r, big_r);
        let target = Cone::new(y, &DirectionSet::single(arc.dilate(alpha)), r / 2.0, 2.0 * big_r);
        if !target.contains(z) || !in_cone_by_angle(y, z, &arc.dilate(alpha), r / 2.0, 2.0 * big_r, 1e-12) {
            violations[2] += 1;
        }

        // Comparability: I ⊂ CJ and J ⊂ CI ⟹ d_I ≤ K(C) d_J.
        let j = random_arc(&mut rng, 1.0 / 16.0);
        let cc = rng.random_range(1.0..4.0);
        let hi = rng.random_range(j.length() / cc..=j.length() * cc);
        let max_off = (cc * j.length() - hi).min(cc * hi - j.length()) / 2.0;
        let off = if max_off > 0.0 { rng.random_range(-max_off..=max_off) } else { 0.0 };
        let i = AngleInterval::new(j.center.shifted(off), hi / 2.0).unwrap();
        if j.dilate(cc).contains_interval(&i) && i.dilate(cc).contains_interval(&j) {
            let (p, q) = (random_point(&mut rng, 1.0), random_point(&mut rng, 1.0));
            if d_metric(&i, p, q) > comparability_factor(cc) * d_metric(&j, p, q) * (1.0 + 1e-12) {
                violations[3] += 1;
            }
        }

        // Isometry of the rescaled frame, and the closed form.
        let (p, q) = (random_point(&mut rng, 3.0), random_point(&mut rng, 3.0));
        let d = d_metric(&arc, p, q);
        let f = arc.frame();
        let mapped = f.to_mapped(p).dist(f.to_mapped(q));
        let closed = ((project_perp(arc.center, p - q) / arc.length()).powi(2) + project(arc.center, p - q).powi(2)).sqrt();
        if (d - mapped).abs() > 1e-12 * d.max(1.0) || (d - closed).abs() > 1e-12 * d.max(1.0) {
            violations[4] += 1;
        }

        // Symmetry of untruncated cones.
        let dirs = DirectionSet::single(arc);
        let fwd = Cone::new(p, &dirs, 0.0, f64::INFINITY).contains(q);
        let back = Cone::new(q, &dirs, 0.0, f64::INFINITY).contains(p);
        if fwd != back {
            violations[5] += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        violations.iter().all(|&v| v == 0) && elapsed < INCLUSION_BUDGET,
        format!(
            "{INCLUSION_TRIALS} trials each; violations cone-in-ball/ball-in-cone/cone-in-cone/comparability/isometry/symmetry = {violations:?}; max d_I/(αr) = {worst_cone_in_ball:.3}; {elapsed:?}"
        ),
    )
}

/// `ν([t−r, t+r])` by direct overlap with each piece.
fn window_mass(d: &PiecewiseConstDensity, t: f64, r: f64) -> f64 {
    d.breakpoints
        .windows(2)
        .zip(&d.values)
        .map(|(w, v)| v * ((t + r).min(w[1]) - (t - r).max(w[0])).max(0.0))
        .sum()
}

// 4
fn maximal_function() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let step = 2f64.powi(-13);
    let mut worst: f64 = 0.0;
    let mut evaluated = 0;
    for _ in 0..MAXIMAL_DENSITIES {
        let mut cuts: Vec<u32> = (0..rng.random_range(2..20)).map(|_| rng.random_range(0..=64)).collect();
        cuts.sort_unstable();
        cuts.dedup();
        if cuts.len() < 2 {
            cuts = vec![0, 64];
        }
        let breakpoints: Vec<f64> = cuts.iter().map(|&c| c as f64 / 64.0).collect();
        let values: Vec<f64> = (1..breakpoints.len())
            .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random_range(0.0..5.0) })
            .collect();
        let density = PiecewiseConstDensity::new(breakpoints, values, vec![]).unwrap();
        if density.is_zero() {
            continue;
        }
        let eval = MaximalEvaluator::new(density.clone());
        for _ in 0..10 {
            // Grid points keep every critical radius on the oracle's grid.
            let t = rng.random_range(-25i32..=153) as f64 / 128.0;
            let oracle = (1..=MAXIMAL_GRID)
                .map(|k| {
                    let r = k as f64 * step;
                    window_mass(&density, t, r) / (2.0 * r)
                })
                .fold(0.0, f64::max);
            worst = worst.max((eval.value(t) - oracle).abs());
            evaluated += 1;
        }
    }
    outcome(
        worst <= MAXIMAL_TOL,
        format!("{MAXIMAL_DENSITIES} densities, {evaluated} points, max |exact − grid| = {worst:.2e}"),
    )
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
    let pts: Vec<Point> = (0..n).map(|_| random_point(rng, 1.0)).collect();
    let mut mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
    for a in &mut mu.atoms {
        a.weight = rng.random_range(0.01..1.0);
    }
    mu
}

/// `∫_lo^hi μ(X(x, G, ρr, r))/r² dr` by splitting at every jump of the integrand.
fn annulus_integral_by_pieces(mu: &DiscreteMeasure, x: Point, g: &DirectionSet, rho: f64, lo: f64, hi: f64) -> f64 {
    let cone = Cone::new(x, g, 0.0, f64::INFINITY);
    let inside: Vec<(f64, f64)> = mu
        .atoms
        .iter()
        .filter(|a| a.point != x && cone.contains(a.point))
        .map(|a| (a.point.dist(x), a.weight))
        .collect();
    let mut cuts: Vec<f64> = vec![lo, hi];
    for &(d, _) in &inside {
        for c in [d, d / rho] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let m: f64 = inside.iter().filter(|&&(d, _)| rho * mid < d && d <= mid).map(|p| p.1).sum();
            m * (1.0 / w[0] - 1.0 / w[1])
        })
        .sum()
}

// 5
fn energy_additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut integral_gap: f64 = 0.0;
    let mut comparison: f64 = 0.0;
    for _ in 0..ENERGY_INSTANCES {
        let mu = random_measure(&mut rng, 200);
        let x = random_point(&mut rng, 0.5);
        let mut cuts: Vec<f64> = (0..8).map(|_| rng.random_range(0.01..0.49)).collect();
        cuts.sort_by(f64::total_cmp);
        let arc = |a: f64, b: f64| AngleInterval::from_start(a, b - a).unwrap();
        // Alternate pieces go to G₁ and G₂; the gaps keep them disjoint as line sets.
        let g1 = DirectionSet {
            arcs: vec![arc(cuts[0], cuts[1]), arc(cuts[4], cuts[5])],
        };
        let g2 = DirectionSet {
            arcs: vec![arc(cuts[2], cuts[3]), arc(cuts[6], cuts[7])],
        };
        let both = DirectionSet {
            arcs: g1.arcs.iter().chain(&g2.arcs).copied().collect(),
        };
        let e1 = conical_energy(&mu, x, &g1, 2, 0, 30).unwrap();
        let e2 = conical_energy(&mu, x, &g2, 2, 0, 30).unwrap();
        let e12 = conical_energy(&mu, x, &both, 2, 0, 30).unwrap();
        let again = conical_energy(&mu, x, &both, 2, 0, 30).unwrap();
        if e12.exact_total() != &e1.exact_total() + &e2.exact_total() || e12.total.to_bits() != again.total.to_bits() {
            mismatches += 1;
        }

        let l = rng.random_range(0..4u32);
        let j = l + rng.random_range(2..9u32);
        let (lo, hi) = (0.5f64.powi(j as i32), 0.5f64.powi(l as i32));
        let closed = annulus_energy(&mu, x, &both, 2, lo, hi);
        let pieces = annulus_integral_by_pieces(&mu, x, &both, 0.5, lo, hi);
        integral_gap = integral_gap.max((closed - pieces).abs() / closed.max(1.0));
        let inner = e12.partial_sum(l + 1, j - 1);
        let outer = e12.partial_sum(l, j);
        let c = if pieces > 0.0 {
            (inner / pieces).max(pieces / outer)
        } else if inner > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        comparison = comparison.max(c);
    }
    outcome(
        mismatches == 0 && integral_gap <= 1e-9 && comparison <= SCALE_COMPARISON_CAP,
        format!(
            "{ENERGY_INSTANCES} instances, additivity mismatches {mismatches}, integral routes differ by {integral_gap:.1e}, observed C(1/2) = {comparison:.3}"
        ),
    )
}

// 6
fn lattice_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = 0;
    let mut disagreements = 0;
    let mut widths = std::collections::BTreeSet::new();
    for inst in 0..LATTICE_INSTANCES {
        let base = [2u32, 3, 4, 16][rng.random_range(0..4)];
        let n = rng.random_range(20..300);
        let points: Vec<Point> = (0..n).map(|_| Point::new(rng.random(), rng.random())).collect();
        let level = match inst % 4 {
            0 => 1,
            1 => 3,
            _ => rng.random_range(0..5),
        };
        let interval = TriadicInterval::containing(Angle::new(rng.random()), level);
        widths.insert(level);
        let k = rng.random_range(0..3);
        let l = rng.random_range(0..3);
        let lat = BaseLattice::euclidean(&points, base).unwrap();
        let carrier: Vec<usize> = (0..n).collect();
        let cubes = descend(&lat, &carrier, interval, k, l).unwrap();
        let report = check_descend(&points, &carrier, &cubes, base);

        // Independent recomputation.
        let s = (base as f64).powi(-((k + l) as i32));
        let arc = interval.as_interval();
        let mut owner = vec![usize::MAX; n];
        let mut partition = true;
        for (qi, q) in cubes.iter().enumerate() {
            for &a in &q.atom_ids {
                partition &= owner[a] == usize::MAX;
                owner[a] = qi;
            }
        }
        partition &= owner.iter().all(|&o| o != usize::MAX);
        let outer = cubes.iter().all(|q| q.atom_ids.iter().all(|&a| d_metric(&arc, points[a], q.center) <= 4.0 * s));
        let inner = cubes.iter().enumerate().all(|(qi, q)| {
            (0..n).all(|a| d_metric(&arc, points[a], q.center) > 0.5 * s || owner[a] == qi)
        });
        let separated = cubes.iter().enumerate().all(|(i, p)| {
            cubes[i + 1..].iter().all(|q| d_metric(&arc, p.center, q.center) > 3.0 * s)
        });
        let mine = partition && outer && inner && separated;
        if !mine {
            failures += 1;
        }
        if mine != report.holds() {
            disagreements += 1;
        }
    }
    let has_widths = widths.contains(&1) && widths.contains(&3);
    outcome(
        failures == 0 && disagreements == 0 && has_widths,
        format!("{LATTICE_INSTANCES} instances incl. 𝓗(J) = 1/3 and 1/27; failures {failures}, route disagreements {disagreements}"),
    )
}

/// `3I ⊂ U` straight from the component list.
fn triple_inside(u: &OpenSet, i: DyadicInterval) -> bool {
    let (a, b) = i.dilate(3.0);
    u.intervals.iter().any(|&(c, d)| c < a && b <= d)
}

// 7
fn whitney_decomposition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let min_length = 2f64.powi(-14);
    let window = (-2.0, 2.0);
    let mut failures = 0;
    let mut first_broken = None;
    for _ in 0..WHITNEY_INSTANCES {
        let mut ends: Vec<f64> = (0..2 * rng.random_range(1..5)).map(|_| rng.random_range(-1.5..1.5)).collect();
        ends.sort_by(f64::total_cmp);
        let raw: Vec<(f64, f64)> = ends.chunks(2).map(|c| (c[0], c[1])).collect();
        let u = OpenSet::new(raw).unwrap();
        let w = whitney(&u, min_length, window).unwrap();
        let mut broken: Vec<&str> = Vec::new();
        if !w.intervals.windows(2).all(|p| p[0].end() <= p[1].start()) {
            broken.push("disjoint");
        }
        if !w.intervals.iter().all(|&i| triple_inside(&u, i) && whitney_admissible(&u, i)) {
            broken.push("3I ⊂ U");
        }
        if w.intervals.iter().any(|&i| triple_inside(&u, i.parent())) {
            broken.push("maximal");
        }
        // Members and residual tile U ∩ window, checked component by component.
        for &(a, b) in &u.intervals {
            let mut pieces: Vec<(f64, f64)> = w
                .intervals
                .iter()
                .map(|i| (i.start(), i.end()))
                .chain(w.residual.iter().copied())
                .filter(|&(s, e)| s < b && e > a)
                .collect();
            pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
            let covers = !pieces.is_empty() && pieces[0].0 <= a && pieces.last().unwrap().1 >= b;
            if !(covers && pieces.windows(2).all(|p| p[0].1 == p[1].0)) {
                broken.push("coverage");
            }
        }
        if !w.residual.iter().all(|&(s, e)| e - s <= 8.0 * min_length) {
            broken.push("residual");
        }
        if !broken.is_empty() {
            failures += 1;
            first_broken.get_or_insert(broken);
        }
    }
    let unit = OpenSet::new(vec![(0.0, 1.0)]).unwrap();
    let fixture = whitney(&unit, min_length, (0.0, 1.0))
        .unwrap()
        .intervals
        .contains(&DyadicInterval { level: 3, index: 2 });
    outcome(
        failures == 0 && fixture,
        format!("{WHITNEY_INSTANCES} open sets, failures {failures} (first: {first_broken:?}); (0,1) contains [1/4, 3/8): {fixture}"),
    )
}

fn tree_fixture(two_directions: bool) -> (TreeReport, Duration) {
    let t = Instant::now();
    let n = 128;
    let pts: Vec<Point> = (0..n).map(|i| Point::new((i as f64 + 0.5) / n as f64, 0.0)).collect();
    let mut mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
    for a in &mut mu.atoms {
        a.weight = 1.0 / n as f64;
    }
    let root = TriadicInterval::containing(Angle::new(0.25), 4);
    let [left, _, right] = root.children();
    let family = VeryGoodFamily {
        root,
        epsilon: 1.0 / 256.0,
        bound: 4.0,
        e2: 4.0,
        families: (0..n)
            .map(|id| {
                let j = match (two_directions, id < n / 2) {
                    (false, _) => root,
                    (true, true) => left,
                    (true, false) => right,
                };
                (id, vec![j])
            })
            .collect(),
    };
    let params = TreeParams {
        base: 16,
        k_max: TREE_K_MAX,
        shatter_cap: TREE_DEPTH + 1,
    };
    let tree = build_tree(&mu, &family, &params).unwrap();
    let report = check_tree(&tree, &mu, &family).unwrap();
    (report, t.elapsed())
}

fn four_corners_pipeline() -> (Result<PipelineReport, favard_core::Error>, Duration) {
    let t = Instant::now();
    let config = ExperimentConfig {
        rho: 1.0 / 16.0,
        k_max: TREE_K_MAX,
        triadic_depth: TREE_DEPTH,
        ..ExperimentConfig::default()
    };
    let params = PipelineParams {
        kappa: 0.25,
        directions: AngleInterval::from_start(0.05, 0.15).unwrap(),
    };
    let r = run_pipeline(&skeleton(&four_corners(2).unwrap()), &config, &params);
    (r, t.elapsed())
}

fn tree_line(name: &str, r: &TreeReport, elapsed: Duration) -> (bool, String) {
    let pass = r.holds() && r.packing.roots_sum <= r.packing.roots_bound && elapsed < TREE_BUDGET;
    (
        pass,
        format!(
            "{name}: {} nodes, {} shatterings, packing {:.3e} ≤ {:.3e}, failing {:?}, {elapsed:?}",
            r.node_count,
            r.shatter_events,
            r.packing.roots_sum,
            r.packing.roots_bound,
            r.failures()
        ),
    )
}

// 8
fn tree_properties(pipeline: &(Result<PipelineReport, favard_core::Error>, Duration)) -> Outcome {
    let (line, lt) = tree_fixture(false);
    let (two, tt) = tree_fixture(true);
    let mut lines = vec![tree_line("single-line", &line, lt), tree_line("two-direction", &two, tt)];
    lines[1].0 &= two.shatter_events > 0;
    match &pipeline.0 {
        Ok(r) => lines.push(tree_line("four-corners(2)", &r.tree.report, pipeline.1)),
        Err(e) => lines.push((false, format!("four-corners(2): {e}"))),
    }
    outcome(
        lines.iter().all(|l| l.0),
        lines.into_iter().map(|l| l.1).collect::<Vec<_>>().join("; "),
    )
}

// 9
fn gap_intervals() -> Outcome {
    let p = GapParams {
        alpha: 30.0,
        rho: 0.5,
        bound: 128.0,
        ahlfors: 2.0,
        c_j: 1.0,
        c_lambda: 2f64.powi(-8),
        big_lambda: 64.0,
        c_n: 8.0,
        c_y: 0.25,
    };
    let (c1, c2) = (p.c_y * p.rho, 2.0 * p.c_y * PI * p.alpha);
    let mut halves = [(f64::INFINITY, 0.0f64); 2];
    let mut failures = 0;
    for seed in 0..GAP_INSTANCES {
        let fx = line_gap_fixture(&p, 6, (seed % 5) as usize, seed).unwrap();
        let g = match find_gap_interval(&fx.instance(), &p) {
            Ok(g) => g,
            Err(_) => {
                failures += 1;
                continue;
            }
        };
        let misses = fx.f.iter().all(|&z| {
            let v = project_perp(fx.j.center, fx.e.atoms[z].point);
            v < g.start || v > g.end
        });
        let ratio = g.length() / (p.lambda() * fx.j.length() * fx.r);
        if !(misses && g.misses_f && ratio >= c1 && ratio <= c2 && (ratio - g.ratio).abs() <= 1e-12 * ratio) {
            failures += 1;
        }
        let h = &mut halves[(seed >= GAP_INSTANCES / 2) as usize];
        *h = (h.0.min(ratio), h.1.max(ratio));
    }
    let stable = halves.iter().all(|h| h.0 >= c1 && h.1 <= c2);
    outcome(
        failures == 0 && stable,
        format!(
            "{GAP_INSTANCES} instances, failures {failures}; ratio envelope per half [{:.4}, {:.4}] and [{:.4}, {:.4}] within [{c1:.4}, {c2:.2}]",
            halves[0].0, halves[0].1, halves[1].0, halves[1].1
        ),
    )
}

// 10
fn extraction(pipeline: &(Result<PipelineReport, favard_core::Error>, Duration)) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut failures = 0;
    for _ in 0..EXTRACTION_INSTANCES {
        let mu = random_measure(&mut rng, 60);
        let ids: Vec<usize> = (0..mu.len()).collect();
        let j = AngleInterval::new(Angle::new(rng.random()), rng.random_range(0.025..0.15)).unwrap();
        let m0 = bad_counts(&mu, &ids, &j).into_iter().max().unwrap();
        let ok = match extract_graph(&mu, &ids, &j, m0, 1.0, 1.0) {
            Ok(ex) => {
                let arc = ex.final_interval;
                let cone_free = ex.kept.iter().enumerate().all(|(a, &x)| {
                    ex.kept[a + 1..].iter().all(|&y| {
                        !in_cone_by_angle(mu.atoms[x].point, mu.atoms[y].point, &arc, 0.0, f64::INFINITY, 0.0)
                    })
                });
                cone_free && verify_lipschitz(&mu, &ex.kept, &arc).is_graph && !ex.kept.is_empty()
            }
            Err(_) => false,
        };
        if !ok {
            failures += 1;
        }
    }
    let pts: Vec<Point> = (-20..=20).map(|i| Point::new(i as f64 / 20.0, (i as f64 / 20.0).abs())).collect();
    let mu = DiscreteMeasure::unit_atoms(&pts).unwrap();
    let ids: Vec<usize> = (0..pts.len()).collect();
    let vertical = AngleInterval::new(Angle::new(0.25), 0.1).unwrap();
    let lip = extract_graph(&mu, &ids, &vertical, 0, 1.0, 1.0).map(|ex| ex.check.lip).unwrap_or(f64::NAN);
    let lip_ok = (lip - 1.0).abs() <= ABS_GRAPH_TOL;
    let (end_to_end, detail) = match &pipeline.0 {
        Ok(r) => {
            let kept = r.extraction.as_ref().map_or(0, |e| e.kept.len());
            (
                kept > 0 && r.all_pass(),
                format!("four-corners(2) certificate {kept} atoms, covered fraction {:.3}, all stage checks {}", r.covered_fraction.unwrap_or(0.0), r.all_pass()),
            )
        }
        Err(e) => (false, format!("four-corners(2): {e}")),
    };
    outcome(
        failures == 0 && lip_ok && end_to_end,
        format!("{EXTRACTION_INSTANCES} random extractions, failures {failures}; |t| graph lip = {lip}; {detail}"),
    )
}

#[derive(Deserialize)]
struct Golden {
    n_angles: usize,
    values: Vec<f64>,
}

// 11
fn cantor_regression() -> Outcome {
    let golden: Golden = serde_json::from_str(include_str!("fixtures/cantor_golden.json")).unwrap();
    let table = cantor_decay(golden.values.len() as u32 - 1, golden.n_angles).unwrap();
    let worst = table
        .rows
        .iter()
        .zip(&golden.values)
        .map(|(r, g)| (r.favard - g).abs())
        .fold(0.0, f64::max);
    outcome(
        table.strictly_decreasing && worst <= GOLDEN_TOL,
        format!(
            "n = 0..{}, strictly decreasing {}, max deviation from frozen values {worst:.1e}",
            golden.values.len() - 1,
            table.strictly_decreasing
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters come through here too.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let pipeline = four_corners_pipeline();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("Favard closed forms", Box::new(favard_closed_forms)),
        ("exact vs Monte Carlo", Box::new(exact_vs_mc)),
        ("cone and metric inclusions", Box::new(cone_metric_inclusions)),
        ("maximal function", Box::new(maximal_function)),
        ("energy additivity and scale comparison", Box::new(energy_additivity)),
        ("lattice invariants", Box::new(lattice_invariants)),
        ("Whitney decomposition", Box::new(whitney_decomposition)),
        ("tree properties", Box::new(|| tree_properties(&pipeline))),
        ("gap intervals", Box::new(gap_intervals)),
        ("graph extraction", Box::new(|| extraction(&pipeline))),
        ("Cantor regression", Box::new(cantor_regression)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {:>2} {:<40} {}  {}", i + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
