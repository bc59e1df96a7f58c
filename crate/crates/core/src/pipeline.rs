//! End-to-end run on a parallel segment union: good directions, their
//! propagation, the direction tree and graph extraction, with every measured
//! constant and invariant collected into one report.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::conical::{select_good_directions, GoodDirectionParams, GoodDirectionReport};
use crate::error::{Error, Result};
use crate::graph::{bad_counts, extract_graph, Extraction};
use crate::projection::favard;
use crate::sets::{ahlfors_constant, split_parallel, DiscreteMeasure, SegmentUnion, SetModel};
use crate::stages::{propagate_good_directions, Propagation, StageParams};
use crate::torus::{signed_arc, AngleInterval, DirectionSet, TriadicInterval};
use crate::tree::{build_tree, check_tree, collect_bad_cubes, TreeParams, TreeReport, VeryGoodFamily};

/// Samples used for the Ahlfors constant.
pub const AHLFORS_SAMPLES: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineParams {
    pub kappa: f64,
    /// Projection directions `G`.
    pub directions: AngleInterval,
}

/// One named invariant of one stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageCheck {
    pub stage: &'static str,
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeSummary {
    pub report: TreeReport,
    pub bad_cubes: usize,
    pub max_bad_scales: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub segments: usize,
    pub length: f64,
    pub atoms: usize,
    pub pitch: f64,
    pub favard: f64,
    pub ahlfors: f64,
    /// `M = c_m/κ`.
    pub bound: f64,
    pub root: TriadicInterval,
    pub epsilon: f64,
    pub good_directions: GoodDirectionReport,
    pub propagation: Propagation,
    pub tree: TreeSummary,
    /// Absent when the run stops after the tree.
    pub extraction: Option<Extraction>,
    /// `μ(K)/μ(E)`.
    pub covered_fraction: Option<f64>,
    pub checks: Vec<StageCheck>,
}

impl PipelineReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Prefixes the stage name onto a failure.
fn in_stage(stage: &str, e: Error) -> Error {
    match e {
        Error::Hypothesis { clause, detail } => Error::Hypothesis {
            clause: format!("{stage}: {clause}"),
            detail,
        },
        Error::Invariant { name, detail } => Error::Invariant {
            name: format!("{stage}: {name}"),
            detail,
        },
        Error::Precondition(m) => Error::Precondition(format!("{stage}: {m}")),
        other => other,
    }
}

/// The input itself when all segments are parallel, else its horizontal part.
pub fn parallel_part(e: &SegmentUnion) -> Result<SegmentUnion> {
    if e.is_empty() {
        return Err(Error::Precondition("empty segment union".into()));
    }
    let d0 = e.segments[0].direction();
    if e.segments.iter().all(|s| signed_arc(d0, s.direction()).abs() <= 1e-12) {
        return Ok(e.clone());
    }
    let (h, _) = split_parallel(e)?;
    if h.is_empty() {
        return Err(Error::Precondition("input has no horizontal segments".into()));
    }
    Ok(h)
}

/// Smallest triadic level `l` with `3^{-l} ≤ c_J/(AM)`.
pub fn root_level(c_j: f64, ahlfors: f64, bound: f64) -> u32 {
    let target = c_j / (ahlfors * bound);
    let mut l = 0;
    while crate::torus::TriadicInterval::new(l, 0).map_or(0.0, |t| t.length()) > target {
        l += 1;
    }
    l
}

fn check(stage: &'static str, name: &str, holds: bool, detail: String) -> StageCheck {
    StageCheck {
        stage,
        name: name.to_string(),
        holds,
        detail,
    }
}

/// Runs every stage on the parallel part of `input`.
///
/// Hypothesis failures carry the stage name; invariant outcomes that do not
/// abort a stage are returned as [`StageCheck`]s.
pub fn run_pipeline(input: &SegmentUnion, config: &ExperimentConfig, params: &PipelineParams) -> Result<PipelineReport> {
    run(input, config, params, true)
}

/// Same as [`run_pipeline`] without graph extraction.
pub fn run_until_tree(input: &SegmentUnion, config: &ExperimentConfig, params: &PipelineParams) -> Result<PipelineReport> {
    run(input, config, params, false)
}

fn run(input: &SegmentUnion, config: &ExperimentConfig, params: &PipelineParams, extract: bool) -> Result<PipelineReport> {
    config.validate()?;
    if !(params.kappa > 0.0 && params.kappa < 1.0) {
        return Err(Error::Precondition(format!("κ must lie in (0, 1), got {}", params.kappa)));
    }
    let e = parallel_part(input)?;
    let length = e.total_length();
    let fav = favard(&e, config.n_angles)?;
    if fav < params.kappa * length {
        return Err(Error::hypothesis(
            "select_good_directions: big projections",
            format!("Fav(E) = {fav} < κ𝓗(E) = {}", params.kappa * length),
        ));
    }
    let pitch = match config.pitch {
        Some(h) => h,
        None => e.default_pitch().ok_or_else(|| Error::Precondition("no segments".into()))?,
    };
    let mu: DiscreteMeasure = e.atoms(pitch)?;
    let ahlfors = ahlfors_constant(&SetModel::Segments(e.clone()), AHLFORS_SAMPLES, config.seed)?;
    let bound = config.c_m / params.kappa;
    let level = root_level(config.c_j, ahlfors, bound);
    let mut checks = Vec::new();

    let stage = "select_good_directions";
    let good = select_good_directions(
        &e,
        &mu,
        &DirectionSet::single(params.directions),
        &GoodDirectionParams {
            kappa: params.kappa,
            bound_constant: config.c_m,
            root_level: level,
            depth: config.direction_depth,
            perp_cutoff: config.perp_cutoff,
        },
    )
    .map_err(|err| in_stage(stage, err))?;
    checks.push(check(
        stage,
        "μ(E') ≥ κ/4 μ(E)",
        good.mass_bound_holds,
        format!("{} vs {}", good.selected_mass, params.kappa / 4.0 * good.total_mass),
    ));
    checks.push(check(
        stage,
        "𝓗(G(x)) ≥ κ/5 𝓗(G)",
        good.selected.is_empty() || good.min_cover_ratio >= params.kappa / 5.0,
        format!("min ratio {}", good.min_cover_ratio),
    ));
    if good.selected.is_empty() {
        return Err(Error::hypothesis(format!("{stage}: nonempty E'"), "no atom has enough good directions"));
    }

    let stage = "propagate_good_directions";
    let epsilon = config.epsilon(ahlfors, bound);
    let stage_params = StageParams {
        ahlfors,
        diameter: e.diameter(),
        epsilon,
        depth: config.triadic_depth,
        c_j: config.c_j,
    };
    let propagation = propagate_good_directions(&mu, &good.family, &stage_params).map_err(|err| in_stage(stage, err))?;
    for r in &propagation.rounds {
        checks.push(check(
            stage,
            &format!("round {} stage checks", r.round),
            r.checks.holds(),
            format!("{:?}", r.checks),
        ));
    }
    checks.push(check(
        stage,
        "μ(E_Fin) ≥ μ(E')/4",
        4.0 * propagation.fin_mass >= good.selected_mass,
        format!("{} vs {}", propagation.fin_mass, good.selected_mass / 4.0),
    ));

    let stage = "direction_tree";
    let family = VeryGoodFamily::from(&propagation.stages);
    let tree = build_tree(
        &mu,
        &family,
        &TreeParams {
            base: config.base()?,
            k_max: config.k_max,
            shatter_cap: config.triadic_depth + 1,
        },
    )
    .map_err(|err| in_stage(stage, err))?;
    let report = check_tree(&tree, &mu, &family).map_err(|err| in_stage(stage, err))?;
    let bad = collect_bad_cubes(&tree, &mu).map_err(|err| in_stage(stage, err))?;
    checks.push(check(stage, "tree properties", report.holds(), format!("failing: {:?}", report.failures())));
    checks.push(check(
        stage,
        "roots packing",
        report.packing.roots_sum <= report.packing.roots_bound,
        format!("{} ≤ {}", report.packing.roots_sum, report.packing.roots_bound),
    ));

    let (extraction, covered_fraction) = if extract {
        let stage = "extract_graph";
        let j = propagation.stages.root.as_interval();
        let m0 = bad_counts(&mu, &propagation.fin, &j).into_iter().max().unwrap_or(0);
        let ex = extract_graph(&mu, &propagation.fin, &j, m0, ahlfors, config.c_j).map_err(|err| in_stage(stage, err))?;
        checks.push(check(
            stage,
            "cone-free output",
            ex.check.is_graph,
            format!("{} violations", ex.check.cone_violations),
        ));
        checks.push(check(stage, "nonempty certificate", !ex.kept.is_empty(), format!("{} atoms", ex.kept.len())));
        let covered = mu.mass_of(ex.kept.iter().copied()) / mu.total_mass();
        (Some(ex), Some(covered))
    } else {
        (None, None)
    };
    let max_bad_scales = bad_counts(&mu, &propagation.fin, &propagation.stages.root.as_interval())
        .into_iter()
        .max()
        .unwrap_or(0);
    Ok(PipelineReport {
        segments: e.len(),
        length,
        atoms: mu.len(),
        pitch,
        favard: fav,
        ahlfors,
        bound,
        root: propagation.stages.root,
        epsilon,
        good_directions: good,
        propagation,
        tree: TreeSummary {
            max_bad_scales,
            bad_cubes: bad.len(),
            report,
        },
        extraction,
        covered_fraction,
        checks,
    })
}
