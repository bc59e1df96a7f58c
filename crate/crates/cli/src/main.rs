use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use favard_cli::commands::{self, pitch_for};
use favard_cli::output::{self, Envelope, EXIT_INVARIANT, EXIT_OK};
use favard_core::config::ExperimentConfig;
use favard_core::io::{load_set, parse_polyline};
use favard_core::pipeline::{run_pipeline, run_until_tree, PipelineParams, PipelineReport};
use favard_core::projection::favard_mc;
use favard_core::torus::{Angle, AngleInterval, TriadicInterval};
use favard_core::{Error, Result};

#[derive(Parser)]
#[command(name = "favard", version, about = "Favard length experiments and Lipschitz-graph extraction")]
struct Cli {
    /// JSON experiment config; unset fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for JSON and CSV outputs; without it the JSON report goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Favard length by quadrature, optionally cross-checked by needles.
    Compute {
        input: PathBuf,
        #[arg(long)]
        n_angles: Option<usize>,
        /// Needle count for the Monte Carlo cross-check.
        #[arg(long)]
        mc: Option<u64>,
    },
    /// Monte Carlo Favard length.
    Mc {
        input: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        needles: u64,
    },
    /// Favard length of the 4-corners skeletons, generation 0 to `n_max`.
    CantorDecay {
        #[arg(long, default_value_t = 5)]
        n_max: u32,
    },
    /// Good directions, propagation, tree and graph extraction.
    Pipeline {
        input: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        kappa: f64,
        /// Projection directions as `start,end` in turns.
        #[arg(long, default_value = "0.05,0.2")]
        directions: String,
    },
    /// Content of the set near a curve against content of the curve near the set.
    Content {
        input: PathBuf,
        #[arg(long)]
        delta: f64,
        /// Polyline CSV (`x,y` rows).
        #[arg(long)]
        curve: PathBuf,
    },
    /// Partition properties of the anisotropic cubes built on the atoms of a set.
    LatticeCheck {
        input: PathBuf,
        /// Any direction inside the triadic interval.
        #[arg(long, default_value_t = 0.25)]
        center: f64,
        #[arg(long, default_value_t = 2)]
        level: u32,
        #[arg(long, default_value_t = 1)]
        k: u32,
        #[arg(long, default_value_t = 3)]
        depth: u32,
    },
    /// Runs the pipeline up to the direction tree and checks its properties.
    TreeCheck {
        input: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        kappa: f64,
        #[arg(long, default_value = "0.05,0.2")]
        directions: String,
    },
    /// Lipschitz graph extraction on all atoms of a set.
    ExtractGraph {
        input: PathBuf,
        /// Center of the cone direction interval.
        #[arg(long)]
        center: f64,
        /// Length of the cone direction interval.
        #[arg(long)]
        width: f64,
        /// Halving rounds; defaults to the largest bad-scale count.
        #[arg(long)]
        m0: Option<usize>,
    },
}

struct Ctx {
    config: ExperimentConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn emit<T: Serialize>(&self, command: &str, inputs: &[&[u8]], pass: bool, result: &T) -> Result<i32> {
        let env = Envelope {
            command,
            config: &self.config,
            input_sha256: output::sha256_hex(inputs.iter().copied()),
            invariants_pass: pass,
            result,
        };
        match &self.out {
            Some(dir) => {
                output::write_json(&dir.join(format!("{command}.json")), &env)?;
                eprintln!("{command}: wrote {}", dir.display());
            }
            None => println!("{}", serde_json::to_string_pretty(&env)?),
        }
        Ok(if pass { EXIT_OK } else { EXIT_INVARIANT })
    }

    fn table<R: Serialize>(&self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        if let Some(dir) = &self.out {
            output::write_csv(&dir.join(name), rows)?;
        }
        Ok(())
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = match path {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?).map_err(|e| Error::Parse {
            line: e.line(),
            msg: format!("{}: {e}", p.display()),
        })?,
        None => ExperimentConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn parse_directions(s: &str) -> Result<AngleInterval> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Precondition(format!("directions must be `start,end`, got `{s}`")))?;
    match parts[..] {
        [a, b] if b > a => AngleInterval::from_start(a, b - a),
        _ => Err(Error::Precondition(format!("directions must be `start,end` with start < end, got `{s}`"))),
    }
}

#[derive(Serialize)]
struct CheckRow<'a> {
    stage: &'a str,
    name: &'a str,
    holds: bool,
    detail: &'a str,
}

fn pipeline_tables(ctx: &Ctx, r: &PipelineReport) -> Result<()> {
    ctx.table(
        "checks.csv",
        r.checks.iter().map(|c| CheckRow {
            stage: c.stage,
            name: &c.name,
            holds: c.holds,
            detail: &c.detail,
        }),
    )?;
    if let Some(ex) = &r.extraction {
        ctx.table("kept_atoms.csv", ex.kept.iter().map(|&id| (id,)))?;
        if let Some(dir) = &ctx.out {
            #[derive(Serialize)]
            struct Cert<'a> {
                theta0: f64,
                lip: f64,
                points: &'a [(f64, f64)],
            }
            let c = &ex.certificate;
            output::write_json(
                &dir.join("certificate.json"),
                &Cert {
                    theta0: c.theta0,
                    lip: c.lip,
                    points: &c.points,
                },
            )?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<i32> {
    let config = load_config(cli.config.as_deref())?;
    if let Some(n) = output::worker_count(&config)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Precondition(format!("cannot size the worker pool: {e}")))?;
    }
    if let Some(dir) = &cli.out {
        std::fs::create_dir_all(dir)?;
    }
    let ctx = Ctx { config, out: cli.out };
    let c = &ctx.config;
    match cli.command {
        Command::Compute { input, n_angles, mc } => {
            let set = load_set(&input)?;
            let (report, profile) = commands::compute(&set.segments(), n_angles.unwrap_or(c.n_angles), mc, c.seed)?;
            ctx.table("profile.csv", profile.iter().map(|&(theta, length)| (theta, length)))?;
            ctx.emit("compute", &[&set.bytes], report.holds(), &report)
        }
        Command::Mc { input, needles } => {
            let set = load_set(&input)?;
            let est = favard_mc(&set.segments(), needles, c.seed)?;
            ctx.emit("mc", &[&set.bytes], true, &est)
        }
        Command::CantorDecay { n_max } => {
            let table = commands::cantor_decay(n_max, c.n_angles)?;
            ctx.table("cantor_decay.csv", &table.rows)?;
            ctx.emit("cantor-decay", &[], table.strictly_decreasing, &table)
        }
        Command::Pipeline { input, kappa, directions } => {
            let set = load_set(&input)?;
            let params = PipelineParams {
                kappa,
                directions: parse_directions(&directions)?,
            };
            let r = run_pipeline(&set.segments(), c, &params)?;
            pipeline_tables(&ctx, &r)?;
            ctx.emit("pipeline", &[&set.bytes], r.all_pass(), &r)
        }
        Command::TreeCheck { input, kappa, directions } => {
            let set = load_set(&input)?;
            let params = PipelineParams {
                kappa,
                directions: parse_directions(&directions)?,
            };
            let r = run_until_tree(&set.segments(), c, &params)?;
            pipeline_tables(&ctx, &r)?;
            ctx.emit("tree-check", &[&set.bytes], r.all_pass(), &r)
        }
        Command::Content { input, delta, curve } => {
            let set = load_set(&input)?;
            let curve_bytes = std::fs::read(&curve)?;
            let polyline = parse_polyline(&String::from_utf8_lossy(&curve_bytes))?;
            let pitch = c.pitch.unwrap_or(delta / 4.0);
            let report = commands::content(&set.model, &polyline, delta, pitch)?;
            ctx.emit("content", &[&set.bytes, &curve_bytes], true, &report)
        }
        Command::LatticeCheck {
            input,
            center,
            level,
            k,
            depth,
        } => {
            let set = load_set(&input)?;
            let e = set.segments();
            let interval = TriadicInterval::containing(Angle::new(center), level);
            let report = commands::lattice_check(&e, pitch_for(&e, c)?, c.base()?, interval, k, depth)?;
            ctx.table(
                "lattice_levels.csv",
                report.levels.iter().map(|l| {
                    (
                        l.l,
                        l.report.cube_count,
                        l.report.partition,
                        l.report.max_outer_ratio,
                        l.report.min_separation_ratio,
                        l.report.inner_ball_contained,
                    )
                }),
            )?;
            ctx.emit("lattice-check", &[&set.bytes], report.holds, &report)
        }
        Command::ExtractGraph { input, center, width, m0 } => {
            let set = load_set(&input)?;
            let e = set.segments();
            let report = commands::extract(&e, c, pitch_for(&e, c)?, center, width, m0)?;
            ctx.table("kept_atoms.csv", report.extraction.kept.iter().map(|&id| (id,)))?;
            let pass = report.extraction.check.is_graph;
            ctx.emit("extract-graph", &[&set.bytes], pass, &report)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(output::exit_code(&e) as u8)
        }
    }
}
