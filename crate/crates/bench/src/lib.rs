//! Outlier-injection experiments over synthetic or g2o pose graphs.
//!
//! Every (rate, seed) cell injects outliers into its graph, runs the robust
//! pipeline and appends one row to `results.csv`. Per-rate means go to
//! `summary.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, ensure, Context};
use clap::Parser;
use log::{info, warn};
use planar_gnc::bench::{
    compute_are, compute_ate, generate_synthetic, inject_outliers, outlier_detection_scores, InjectionSpec, Layout,
    SyntheticSpec,
};
use planar_gnc::g2o::{read_g2o_file, read_poses_file, write_poses};
use planar_gnc::pipeline::{decoupled_robust_pgo, PipelineConfig, CHI2_99_1DOF, CHI2_99_2DOF};
use planar_gnc::{canonicalize_angle, PoseGraph, TrajectoryEstimate};
use serde::Serialize;

/// Bumped whenever the `results.csv` columns change.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Offset between a run's graph seed and its injection seed, so the two
/// random streams never coincide.
const INJECTION_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Synthetic layout given on the command line as `grid:RxC[:step]` or
/// `walk:N[:step]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayoutArg(pub Layout);

impl FromStr for LayoutArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let step = match parts.get(2) {
            Some(v) => v.parse::<f64>().map_err(|_| format!("bad step `{v}`"))?,
            None => 1.0,
        };
        if parts.len() < 2 || parts.len() > 3 {
            return Err(format!("expected grid:RxC[:step] or walk:N[:step], got `{s}`"));
        }
        let layout = match parts[0] {
            "grid" => {
                let (r, c) = parts[1].split_once('x').ok_or_else(|| format!("bad grid size `{}`", parts[1]))?;
                Layout::Grid {
                    rows: r.parse().map_err(|_| format!("bad row count `{r}`"))?,
                    cols: c.parse().map_err(|_| format!("bad column count `{c}`"))?,
                    step,
                }
            }
            "walk" => Layout::RandomWalk {
                n: parts[1].parse().map_err(|_| format!("bad pose count `{}`", parts[1]))?,
                step,
            },
            other => return Err(format!("unknown layout `{other}`")),
        };
        Ok(Self(layout))
    }
}

#[derive(Clone, Debug, Parser)]
#[command(name = "planar-gnc-bench", version, about = "Outlier-rejection benchmark for planar pose graphs")]
pub struct Args {
    /// g2o pose graph to corrupt.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Synthetic layout, `grid:RxC[:step]` or `walk:N[:step]`.
    #[arg(long)]
    pub synthetic: Option<LayoutArg>,
    /// Ground-truth poses (`VERTEX_SE2` records) for `--input`.
    #[arg(long, requires = "input")]
    pub gt: Option<PathBuf>,
    /// Outlier rates as a comma-separated list.
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    pub rates: Vec<f64>,
    /// Runs per rate; run `r` uses seed `seed + r`.
    #[arg(long, default_value_t = 1)]
    pub runs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Squared threshold of the angle stage.
    #[arg(long, default_value_t = CHI2_99_1DOF)]
    pub c1sq: f64,
    /// Squared threshold of the translation stage.
    #[arg(long, default_value_t = CHI2_99_2DOF)]
    pub c2sq: f64,
    #[arg(long, default_value_t = 1.4)]
    pub gnc_factor: f64,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Also write `est_<rate>_<seed>.g2o` per cell.
    #[arg(long)]
    pub emit_trajectories: bool,
    /// Synthetic loop-closure probability per near pair.
    #[arg(long, default_value_t = 0.1)]
    pub lc_prob: f64,
    /// Synthetic heading noise, radians.
    #[arg(long, default_value_t = 0.01)]
    pub sigma_theta: f64,
    /// Synthetic translation noise per axis.
    #[arg(long, default_value_t = 0.05)]
    pub sigma_t: f64,
    /// Write zeros in the timing columns so reruns are byte-identical.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub rate: f64,
    pub seed: u64,
    pub ate_pos: Option<f64>,
    pub ate_rot_deg: Option<f64>,
    pub are_deg: f64,
    pub precision: f64,
    pub recall: f64,
    pub t_reg_s: f64,
    pub t_ara_s: f64,
    pub t_ta_s: f64,
    pub t_refine_s: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RateSummary {
    pub rate: f64,
    pub runs: usize,
    pub converged_runs: usize,
    pub ate_pos: Option<f64>,
    pub ate_rot_deg: Option<f64>,
    pub are_deg: f64,
    pub precision: f64,
    pub recall: f64,
    pub t_total_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub csv_schema_version: u32,
    pub source: String,
    pub num_poses: usize,
    pub true_loop_closures: usize,
    pub c1_squared: f64,
    pub c2_squared: f64,
    pub continuation_factor: f64,
    pub rates: Vec<RateSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

pub fn summarize(rows: &[Row]) -> Vec<RateSummary> {
    let mut by_rate: BTreeMap<u64, Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_rate.entry(r.rate.to_bits()).or_default().push(r);
    }
    let mut out: Vec<RateSummary> = by_rate
        .into_values()
        .map(|cell| RateSummary {
            rate: cell[0].rate,
            runs: cell.len(),
            converged_runs: cell.iter().filter(|r| r.converged).count(),
            ate_pos: mean_opt(cell.iter().map(|r| r.ate_pos)),
            ate_rot_deg: mean_opt(cell.iter().map(|r| r.ate_rot_deg)),
            are_deg: mean(cell.iter().map(|r| r.are_deg)),
            precision: mean(cell.iter().map(|r| r.precision)),
            recall: mean(cell.iter().map(|r| r.recall)),
            t_total_s: mean(cell.iter().map(|r| r.t_reg_s + r.t_ara_s + r.t_ta_s + r.t_refine_s)),
        })
        .collect();
    out.sort_by(|a, b| a.rate.total_cmp(&b.rate));
    out
}

enum Source {
    File { graph: PoseGraph, truth: Option<TrajectoryEstimate>, name: String },
    Synthetic(SyntheticSpec),
}

impl Source {
    fn from_args(args: &Args) -> anyhow::Result<Self> {
        if let Some(path) = &args.input {
            let doc = read_g2o_file(path).with_context(|| format!("reading {}", path.display()))?;
            let truth = match &args.gt {
                Some(gt) => {
                    let t = read_poses_file(gt).with_context(|| format!("reading {}", gt.display()))?;
                    ensure!(
                        t.len() == doc.graph.num_vertices(),
                        "{} has {} poses but the graph has {} vertices",
                        gt.display(),
                        t.len(),
                        doc.graph.num_vertices()
                    );
                    Some(t)
                }
                None => None,
            };
            return Ok(Source::File { graph: doc.graph, truth, name: path.display().to_string() });
        }
        let Some(LayoutArg(layout)) = args.synthetic else {
            bail!("one of --input or --synthetic is required");
        };
        let spec = SyntheticSpec::new(layout, args.sigma_theta, args.sigma_t, args.lc_prob, args.seed);
        spec.validate()?;
        Ok(Source::Synthetic(spec))
    }

    /// Graph and ground truth for the run seeded with `seed`.
    fn instance(&self, seed: u64) -> anyhow::Result<(PoseGraph, Option<TrajectoryEstimate>)> {
        match self {
            Source::File { graph, truth, .. } => Ok((graph.clone(), truth.clone())),
            Source::Synthetic(spec) => {
                let (g, t) = generate_synthetic(&SyntheticSpec { rng_seed: seed, ..*spec })?;
                Ok((g, Some(t)))
            }
        }
    }

    fn name(&self) -> String {
        match self {
            Source::File { name, .. } => name.clone(),
            Source::Synthetic(spec) => format!("synthetic {:?}", spec.layout),
        }
    }
}

fn run_cell(
    graph: &PoseGraph,
    truth: Option<&TrajectoryEstimate>,
    rate: f64,
    seed: u64,
    config: &PipelineConfig,
) -> anyhow::Result<(Row, TrajectoryEstimate)> {
    let spec = InjectionSpec { outlier_rate: rate, rng_seed: seed.wrapping_add(INJECTION_SEED_OFFSET) };
    let (noisy, injected) = inject_outliers(graph, &spec)?;
    let rep = decoupled_robust_pgo(&noisy, config)?;
    if !rep.converged() {
        warn!("rate {rate}, seed {seed}: GNC did not converge");
    }
    let (ate_pos, ate_rot_deg) = match truth {
        Some(t) => {
            let (p, r) = compute_ate(&rep.estimate, t)?;
            (Some(p), Some(r))
        }
        None => (None, None),
    };
    let ara = rep.ara_angles.iter().map(|&a| canonicalize_angle(a)).collect::<Result<Vec<_>, _>>()?;
    let are_deg = compute_are(&ara, &rep.estimate.angles())?;
    let (precision, recall) = outlier_detection_scores(&noisy, &rep.inlier_set, &injected);
    let t = rep.timings;
    let row = Row {
        rate,
        seed,
        ate_pos,
        ate_rot_deg,
        are_deg,
        precision,
        recall,
        t_reg_s: t.regularization,
        t_ara_s: t.ara,
        t_ta_s: t.ta,
        t_refine_s: t.refine,
        converged: rep.converged(),
    };
    Ok((row, rep.estimate))
}

fn write_csv(path: &Path, rows: &[Row]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every cell and writes the report files. Returns the rows in the
/// order written.
pub fn run_experiment(args: &Args) -> anyhow::Result<Vec<Row>> {
    ensure!(!args.rates.is_empty(), "--rates is empty");
    ensure!(args.runs > 0, "--runs must be positive");
    for &r in &args.rates {
        ensure!((0.0..1.0).contains(&r), "outlier rate {r} is outside [0, 1)");
    }
    let config = PipelineConfig {
        c1_squared: args.c1sq,
        c2_squared: args.c2sq,
        continuation_factor: args.gnc_factor,
        ..PipelineConfig::default()
    };
    let source = Source::from_args(args)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut rows = Vec::new();
    let (mut num_poses, mut true_lcs) = (0, 0);
    for run in 0..args.runs {
        let seed = args.seed + run;
        let (graph, truth) = source.instance(seed)?;
        num_poses = graph.num_vertices();
        true_lcs = graph.num_loop_closures();
        for &rate in &args.rates {
            let (mut row, estimate) = run_cell(&graph, truth.as_ref(), rate, seed, &config)
                .with_context(|| format!("cell rate {rate}, seed {seed}"))?;
            info!(
                "rate {rate} seed {seed}: precision {:.3} recall {:.3} ate_pos {:?}",
                row.precision, row.recall, row.ate_pos
            );
            if args.deterministic {
                (row.t_reg_s, row.t_ara_s, row.t_ta_s, row.t_refine_s) = (0.0, 0.0, 0.0, 0.0);
            }
            if args.emit_trajectories {
                let path = args.out.join(format!("est_{rate}_{seed}.g2o"));
                let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                write_poses(BufWriter::new(file), &estimate)?;
            }
            rows.push(row);
        }
    }
    rows.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.seed.cmp(&b.seed)));

    write_csv(&args.out.join("results.csv"), &rows)?;
    let summary = Summary {
        csv_schema_version: CSV_SCHEMA_VERSION,
        source: source.name(),
        num_poses,
        true_loop_closures: true_lcs,
        c1_squared: config.c1_squared,
        c2_squared: config.c2_squared,
        continuation_factor: config.continuation_factor,
        rates: summarize(&rows),
    };
    let path = args.out.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(rows)
}
