//! Library side of each subcommand: every function returns a serializable
//! report plus whether the invariants it asserts hold.

use serde::Serialize;

use favard_core::config::ExperimentConfig;
use favard_core::graph::{bad_counts, extract_graph, Extraction};
use favard_core::lattice::{check_descend, descend, BaseLattice, LatticeReport};
use favard_core::projection::{favard, favard_mc, projection_profile, McEstimate};
use favard_core::sets::{
    ahlfors_constant, chebyshev_distance_segments, curve_in_neighborhood, four_corners, hausdorff_content,
    pieces_near_curve, segment_pieces, skeleton, square_pieces, Polyline, SegmentUnion, SetModel,
};
use favard_core::torus::{Angle, AngleInterval, TriadicInterval};
use favard_core::{Error, Result};

/// Exact and Monte Carlo Favard lengths differ by at most this many standard errors.
pub const MC_SIGMAS: f64 = 3.0;

/// Largest generation accepted by [`cantor_decay`].
pub const CANTOR_MAX_GENERATION: u32 = 6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FavardReport {
    pub length: f64,
    pub n_angles: usize,
    pub favard: f64,
    pub mc: Option<McEstimate>,
    /// `|exact − MC|/stderr`.
    pub mc_deviation: Option<f64>,
    pub mc_agrees: Option<bool>,
}

impl FavardReport {
    pub fn holds(&self) -> bool {
        self.mc_agrees != Some(false)
    }
}

pub fn mc_agreement(exact: f64, mc: &McEstimate) -> (f64, bool) {
    let diff = (exact - mc.estimate).abs();
    let dev = if mc.stderr > 0.0 {
        diff / mc.stderr
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (dev, dev <= MC_SIGMAS)
}

/// Quadrature Favard length with an optional needle cross-check; also returns the projection profile.
pub fn compute(e: &SegmentUnion, n_angles: usize, needles: Option<u64>, seed: u64) -> Result<(FavardReport, Vec<(f64, f64)>)> {
    if e.is_empty() {
        return Err(Error::Precondition("empty segment union".into()));
    }
    let fav = favard(e, n_angles)?;
    let mc = needles.map(|n| favard_mc(e, n, seed)).transpose()?;
    let agreement = mc.as_ref().map(|m| mc_agreement(fav, m));
    Ok((
        FavardReport {
            length: e.total_length(),
            n_angles,
            favard: fav,
            mc,
            mc_deviation: agreement.map(|a| a.0),
            mc_agrees: agreement.map(|a| a.1),
        },
        projection_profile(e, n_angles),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CantorRow {
    pub n: u32,
    pub favard: f64,
    pub n_times_favard: f64,
    pub n_sixth_root_times_favard: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CantorTable {
    pub n_angles: usize,
    pub rows: Vec<CantorRow>,
    pub strictly_decreasing: bool,
}

/// `Fav` of the skeleton of each 4-corners generation `0..=n_max`.
pub fn cantor_decay(n_max: u32, n_angles: usize) -> Result<CantorTable> {
    if n_max > CANTOR_MAX_GENERATION {
        return Err(Error::Resource(format!(
            "generation {n_max} has 4^{n_max} cells; at most {CANTOR_MAX_GENERATION} is supported"
        )));
    }
    let rows = (0..=n_max)
        .map(|n| {
            let f = favard(&skeleton(&four_corners(n)?), n_angles)?;
            Ok(CantorRow {
                n,
                favard: f,
                n_times_favard: n as f64 * f,
                n_sixth_root_times_favard: (n as f64).powf(1.0 / 6.0) * f,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = rows.windows(2).all(|w| w[1].favard < w[0].favard);
    Ok(CantorTable {
        n_angles,
        rows,
        strictly_decreasing,
    })
}

/// `"empty"` when both contents vanish.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ContentRatio {
    Value(f64),
    Sentinel(&'static str),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContentReport {
    pub delta: f64,
    pub pitch: f64,
    /// `𝓗_∞(E ∩ Γ(3δ))`.
    pub set_near_curve: f64,
    /// `𝓗_∞(E(δ) ∩ Γ)`.
    pub curve_near_set: f64,
    /// `set_near_curve / curve_near_set`.
    pub ratio: ContentRatio,
}

/// Compares the content of `E` near the curve with the content of the curve near `E`.
pub fn content(e: &SetModel, curve: &Polyline, delta: f64, pitch: f64) -> Result<ContentReport> {
    if !(delta > 0.0 && pitch > 0.0) {
        return Err(Error::Precondition("δ and the pitch must be positive".into()));
    }
    let (pieces, near) = match e {
        SetModel::Segments(s) => {
            let p = segment_pieces(s, pitch)?;
            let near = curve_in_neighborhood(curve, delta, |x| chebyshev_distance_segments(s, x), pitch)?;
            (p, near)
        }
        SetModel::Squares(q) => {
            let near = curve_in_neighborhood(curve, delta, |x| q.chebyshev_distance(x), pitch)?;
            (square_pieces(q), near)
        }
    };
    let lhs = hausdorff_content(&pieces_near_curve(&pieces, curve, delta), 0.0);
    let rhs = hausdorff_content(&near, 0.0);
    let ratio = match (lhs > 0.0, rhs > 0.0) {
        (false, false) => ContentRatio::Sentinel("empty"),
        (_, true) => ContentRatio::Value(lhs / rhs),
        (true, false) => ContentRatio::Sentinel("unbounded"),
    };
    Ok(ContentReport {
        delta,
        pitch,
        set_near_curve: lhs,
        curve_near_set: rhs,
        ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeLevel {
    pub l: u32,
    pub report: LatticeReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeCheck {
    pub interval: TriadicInterval,
    pub k: u32,
    pub atoms: usize,
    pub levels: Vec<LatticeLevel>,
    pub holds: bool,
}

/// Builds `𝔻_{k+l}(E, J)` for `l = 0..=depth` on the atoms of `e` and checks each partition.
pub fn lattice_check(e: &SegmentUnion, pitch: f64, base: u32, interval: TriadicInterval, k: u32, depth: u32) -> Result<LatticeCheck> {
    let mu = e.atoms(pitch)?;
    let points: Vec<_> = mu.points().collect();
    let lat = BaseLattice::euclidean(&points, base)?;
    let carrier: Vec<usize> = (0..points.len()).collect();
    let levels = (0..=depth)
        .map(|l| {
            let cubes = descend(&lat, &carrier, interval, k, l)?;
            Ok(LatticeLevel {
                l,
                report: check_descend(&points, &carrier, &cubes, base),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let holds = levels.iter().all(|l| l.report.holds());
    Ok(LatticeCheck {
        interval,
        k,
        atoms: points.len(),
        levels,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractReport {
    pub atoms: usize,
    pub ahlfors: f64,
    pub m0: usize,
    pub extraction: Extraction,
}

/// Graph extraction on all atoms of `e` for the cone directions centred at `center` with length `width`.
pub fn extract(e: &SegmentUnion, config: &ExperimentConfig, pitch: f64, center: f64, width: f64, m0: Option<usize>) -> Result<ExtractReport> {
    let mu = e.atoms(pitch)?;
    let ids: Vec<usize> = (0..mu.len()).collect();
    let j = AngleInterval::new(Angle::new(center), width / 2.0)?;
    let m0 = m0.unwrap_or_else(|| bad_counts(&mu, &ids, &j).into_iter().max().unwrap_or(0));
    let ahlfors = ahlfors_constant(&SetModel::Segments(e.clone()), favard_core::pipeline::AHLFORS_SAMPLES, config.seed)?;
    let extraction = extract_graph(&mu, &ids, &j, m0, ahlfors, config.c_j)?;
    Ok(ExtractReport {
        atoms: mu.len(),
        ahlfors,
        m0,
        extraction,
    })
}

/// The configured pitch, or the default for `e`.
pub fn pitch_for(e: &SegmentUnion, config: &ExperimentConfig) -> Result<f64> {
    match config.pitch {
        Some(h) => Ok(h),
        None => e
            .default_pitch()
            .ok_or_else(|| Error::Precondition("empty segment union".into())),
    }
}
