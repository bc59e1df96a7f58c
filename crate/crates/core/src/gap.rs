//! Gap intervals: given a point `x` of `F` with an exterior-cone witness `y`,
//! find an interval of `π_J^⊥`-values of size `≈ λ𝓗(J)r` that misses `π_J^⊥(F)`.
//!
//! The search runs over the tube between `x` and `y`, cut into `2N + 1` strips
//! along `π_J`. Starting from the strip of `y` it walks to a neighbouring strip
//! whose closest point to `x` (in `π_J^⊥`) is strictly closer, and stops at the
//! first strip beating both neighbours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sets::DiscreteMeasure;
use crate::torus::{d_metric, project, project_perp, AngleInterval, Cone, DirectionSet, Point};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapParams {
    /// Aperture factor of the exterior cone, `α > 1`.
    pub alpha: f64,
    pub rho: f64,
    /// `M`.
    pub bound: f64,
    /// `A`.
    pub ahlfors: f64,
    pub c_j: f64,
    pub c_lambda: f64,
    /// `Λ`.
    pub big_lambda: f64,
    pub c_n: f64,
    pub c_y: f64,
}

impl GapParams {
    /// `λ = c_λ/(MA)`.
    pub fn lambda(&self) -> f64 {
        self.c_lambda / (self.bound * self.ahlfors)
    }

    /// `N = ⌈C_N A M⌉`.
    pub fn strips(&self) -> i64 {
        (self.c_n * self.ahlfors * self.bound).ceil() as i64
    }
}

/// `F ⊂ E ∩ B_J(z₀, R)` with `B₀ = B_J(z₀, r)` and `x ∈ B₀ ∩ F`.
#[derive(Clone, Copy, Debug)]
pub struct GapInstance<'a> {
    pub e: &'a DiscreteMeasure,
    pub f: &'a [usize],
    pub j: AngleInterval,
    pub z0: Point,
    pub big_r: f64,
    pub r: f64,
    pub x: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapInterval {
    pub start: f64,
    pub end: f64,
    pub lambda: f64,
    pub strips: i64,
    pub witness: usize,
    pub closest: usize,
    pub nice_strip: i64,
    pub steps: usize,
    /// `𝓗(I)/(λ𝓗(J)r)`.
    pub ratio: f64,
    /// `π^⊥(F) ∩ I = ∅`.
    pub misses_f: bool,
    /// `π^⊥(B₀) ⊆ (Λ/λ)I`.
    pub covers_ball: bool,
    /// `μ(ΛB₀)/(M𝓗(J)r)`, at most 1 under the hypotheses.
    pub density_ratio: f64,
}

impl GapInterval {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Checks the hypotheses on the instance and returns the exterior witness `y`.
fn check_hypotheses(inst: &GapInstance<'_>, p: &GapParams) -> Result<(usize, f64)> {
    let h = inst.j.length();
    let pts: Vec<Point> = inst.e.points().collect();
    if inst.x >= pts.len() || !inst.f.contains(&inst.x) {
        return Err(Error::Precondition(format!("x = {} is not a point of F", inst.x)));
    }
    if !(inst.r > 0.0 && inst.r <= inst.big_r) {
        return Err(Error::Precondition(format!("need 0 < r ≤ R, got r = {}, R = {}", inst.r, inst.big_r)));
    }
    if d_metric(&inst.j, pts[inst.x], inst.z0) > inst.r {
        return Err(Error::Precondition("x lies outside B₀".into()));
    }
    let cap = p.c_j / (p.bound * p.ahlfors);
    if h > cap {
        return Err(Error::hypothesis("(i) small interval", format!("𝓗(J) = {h} exceeds c_J/(MA) = {cap}")));
    }
    if let Some(&z) = inst.f.iter().find(|&&z| d_metric(&inst.j, pts[z], inst.z0) > inst.big_r) {
        return Err(Error::hypothesis("(iii) support", format!("atom {z} of F lies outside B_J(z₀, R)")));
    }
    let big_ball: Vec<usize> = (0..pts.len())
        .filter(|&z| d_metric(&inst.j, pts[z], inst.z0) <= p.big_lambda * inst.r)
        .collect();
    let density = inst.e.mass_of(big_ball.iter().copied()) / (p.bound * h * inst.r);
    if density > 1.0 {
        return Err(Error::hypothesis(
            "(iii) measure",
            format!("μ(ΛB₀) = {} M𝓗(J)r", density),
        ));
    }
    let lambda = p.lambda();
    let dirs = DirectionSet::single(inst.j);
    for &z in &big_ball {
        let cone = Cone::new(pts[z], &dirs, lambda * inst.r, p.big_lambda * inst.big_r);
        if let Some(&w) = inst.f.iter().find(|&&w| w != z && cone.contains(pts[w])) {
            return Err(Error::hypothesis(
                "(iii) empty cones",
                format!("atom {w} of F lies in X(z, J, λr, ΛR) for z = atom {z}"),
            ));
        }
    }
    let exterior = DirectionSet::annular(&inst.j.dilate(p.alpha), &inst.j);
    let cone = Cone::new(pts[inst.x], &exterior, p.rho * inst.r, inst.r);
    let y = (0..pts.len())
        .find(|&y| y != inst.x && cone.contains(pts[y]))
        .ok_or_else(|| Error::hypothesis("(iv) exterior witness", "X(x, αJ∖J, ρr, r) ∩ E is empty"))?;
    Ok((y, density))
}

/// Constructs the interval `I = π_J^⊥(𝒴)`.
pub fn find_gap_interval(inst: &GapInstance<'_>, p: &GapParams) -> Result<GapInterval> {
    if !(p.alpha > 1.0 && p.c_y > 0.0 && p.c_y < 1.0) {
        return Err(Error::Precondition("need α > 1 and 0 < c_Y < 1".into()));
    }
    let (y, density_ratio) = check_hypotheses(inst, p)?;
    let pts: Vec<Point> = inst.e.points().collect();
    let theta = inst.j.center;
    let perp = |z: Point| project_perp(theta, z);
    let along = |z: Point| project(theta, z);
    let (px, py) = (pts[inst.x], pts[y]);
    let gap = (perp(px) - perp(py)).abs();
    let span = (along(px) - along(py)).abs();
    let mid = (perp(px) + perp(py)) / 2.0;
    let n = p.strips();
    let width = 2 * n + 1;

    // Closest point to x across the axis in each strip.
    let mut best: Vec<Option<(f64, usize)>> = vec![None; width as usize];
    for (z, &pz) in pts.iter().enumerate() {
        let t = along(pz) - along(py);
        if (perp(pz) - mid).abs() > 2.0 * gap || t.abs() > span / 2.0 {
            continue;
        }
        let i = (t * width as f64 / span).round() as i64;
        if i.abs() > n {
            continue;
        }
        let v = (perp(pz) - perp(px)).abs();
        let slot = &mut best[(i + n) as usize];
        if slot.is_none_or(|(b, id)| (v, z) < (b, id)) {
            *slot = Some((v, z));
        }
    }
    let value = |i: i64| best[(i + n) as usize].map_or(f64::INFINITY, |(v, _)| v);
    let mut i = 0i64;
    let mut steps = 0;
    loop {
        let mut next = None;
        for nb in [i - 1, i + 1] {
            if nb.abs() <= n && value(nb) < value(i) && next.is_none_or(|m| value(nb) < value(m)) {
                next = Some(nb);
            }
        }
        match next {
            None => break,
            Some(nb) => {
                if nb.abs() >= n {
                    return Err(Error::hypothesis(
                        "(iii) measure",
                        format!("strip chain reached the end strip {nb} of ±{n} after {} steps", steps + 1),
                    ));
                }
                i = nb;
                steps += 1;
            }
        }
    }
    let (_, closest) = best[(i + n) as usize].expect("the chain only visits nonempty strips");
    let lambda = p.lambda();
    let zs = pts[closest];
    let dist = (perp(zs) - perp(px)).abs();
    let centre = p.c_y * lambda * perp(px) + (1.0 - p.c_y * lambda) * perp(zs);
    let half = 0.5 * p.c_y * lambda * dist;
    let (start, end) = (centre - half, centre + half);
    let misses_f = inst.f.iter().all(|&w| {
        let v = perp(pts[w]);
        v < start || v > end
    });
    let h = inst.j.length();
    let reach = p.big_lambda / lambda * half;
    let ball = (perp(inst.z0) - h * inst.r, perp(inst.z0) + h * inst.r);
    Ok(GapInterval {
        start,
        end,
        lambda,
        strips: n,
        witness: y,
        closest,
        nice_strip: i,
        steps,
        ratio: (end - start) / (lambda * h * inst.r),
        misses_f,
        covers_ball: centre - reach <= ball.0 && ball.1 <= centre + reach,
        density_ratio,
    })
}

/// A line instance: `F` is a horizontal row of atoms through `z₀ = x`, `J` is
/// vertical, and `y` sits above `x` just outside the cone `X(x, J)`. Chain atoms
/// step from `y` towards `x` in consecutive strips, each slightly closer to `x`
/// across the axis. Atoms of the row under any cone `X(z, J)` of an extra atom
/// are removed so the empty-cone hypothesis holds.
#[derive(Clone, Debug)]
pub struct GapFixture {
    pub e: DiscreteMeasure,
    pub f: Vec<usize>,
    pub j: AngleInterval,
    pub z0: Point,
    pub big_r: f64,
    pub r: f64,
    pub x: usize,
    pub height: f64,
    pub beta: f64,
}

impl GapFixture {
    pub fn instance(&self) -> GapInstance<'_> {
        GapInstance {
            e: &self.e,
            f: &self.f,
            j: self.j,
            z0: self.z0,
            big_r: self.big_r,
            r: self.r,
            x: self.x,
        }
    }
}

pub fn line_gap_fixture(p: &GapParams, level: u32, chain: usize, seed: u64) -> Result<GapFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 3f64.powi(-(level as i32));
    let j = AngleInterval::new(crate::torus::Angle::new(0.25), h / 2.0)?;
    let r = 0.25;
    let big_r = 8.0;
    let half_len = 0.9 * h * big_r;
    let tan = |b: f64| (std::f64::consts::PI * b * h).tan();
    let beta_max = p.alpha.clamp(1.5, 4.0);
    let beta = rng.random_range(1.2..beta_max);
    let height = rng.random_range(1.05 * p.rho * r..0.95 * r);
    let mut extra = vec![Point::new(height * tan(beta), height)];
    let width = (2 * p.strips() + 1) as f64;
    for i in 1..=chain {
        let up = height * (1.0 - i as f64 / width);
        // Offsets shrink towards the cone boundary but stay outside it.
        let b = beta - (beta - 1.1) * i as f64 / (chain + 1) as f64;
        extra.push(Point::new(up * tan(b), up));
    }
    let shadow: Vec<(f64, f64)> = extra
        .iter()
        .map(|z| (z.x1 - 1.5 * z.x2 * tan(1.0), z.x1 + 1.5 * z.x2 * tan(1.0)))
        .collect();
    let pitch = h * 1e-2;
    let count = (2.0 * half_len / pitch) as i64;
    let mut pts = vec![Point::new(0.0, 0.0)];
    for k in -count / 2..=count / 2 {
        let t = k as f64 * pitch;
        if k != 0 && !shadow.iter().any(|&(a, b)| t >= a && t <= b) {
            pts.push(Point::new(t, 0.0));
        }
    }
    let f: Vec<usize> = (0..pts.len()).collect();
    pts.extend(extra);
    let mut e = DiscreteMeasure::unit_atoms(&pts)?;
    for a in &mut e.atoms {
        a.weight = pitch;
    }
    Ok(GapFixture {
        e,
        f,
        j,
        z0: Point::new(0.0, 0.0),
        big_r,
        r,
        x: 0,
        height,
        beta,
    })
}
