//! Reading and writing the 2D g2o text format.
//!
//! Supported records:
//!
//! ```text
//! VERTEX_SE2 id x y theta
//! EDGE_SE2 i j dx dy dtheta I11 I12 I13 I22 I23 I33
//! ```
//!
//! The information matrix is reduced to the isotropic model used everywhere
//! else: `tau = (I11 + I22) / 2` and `kappa = I33`. Off-diagonal entries are
//! dropped, so writing a graph back emits a diagonal matrix.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use nalgebra::Vector2;

use crate::angle::PlanarPose;
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, PoseGraph, RelativeMeasurement};
use crate::trajectory::TrajectoryEstimate;

/// A parsed g2o file.
#[derive(Clone, Debug)]
pub struct G2oDocument {
    pub graph: PoseGraph,
    /// Present when the file carries `VERTEX_SE2` records, re-anchored on
    /// the first vertex.
    pub initial: Option<TrajectoryEstimate>,
}

struct RawEdge {
    line: usize,
    from: i64,
    to: i64,
    dt: Vector2<f64>,
    dtheta: f64,
    info: [f64; 6],
}

#[derive(Default)]
struct RawFile {
    vertex_ids: Vec<i64>,
    vertices: Vec<PlanarPose>,
    edges: Vec<RawEdge>,
}

fn field<T: std::str::FromStr>(tokens: &[&str], i: usize, line: usize) -> Result<T> {
    let tok = tokens.get(i).ok_or_else(|| Error::Parse {
        line,
        message: format!("{} record needs more fields", tokens[0]),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{tok}` as a number"),
    })
}

fn scan<R: BufRead>(reader: R) -> Result<RawFile> {
    let mut raw = RawFile::default();
    let mut seen_vertices = HashSet::new();
    for (n, text) in reader.lines().enumerate() {
        let line = n + 1;
        let text = text?;
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let Some(&tag) = tokens.first() else { continue };
        if tag.starts_with('#') {
            continue;
        }
        match tag {
            "VERTEX_SE2" => {
                let id: i64 = field(&tokens, 1, line)?;
                if !seen_vertices.insert(id) {
                    return Err(Error::Parse {
                        line,
                        message: format!("vertex {id} declared twice"),
                    });
                }
                let x: f64 = field(&tokens, 2, line)?;
                let y: f64 = field(&tokens, 3, line)?;
                let th: f64 = field(&tokens, 4, line)?;
                let pose = PlanarPose::new(th, x, y).map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
                raw.vertex_ids.push(id);
                raw.vertices.push(pose);
            }
            "EDGE_SE2" => {
                let mut info = [0.0; 6];
                for (k, slot) in info.iter_mut().enumerate() {
                    *slot = field(&tokens, 6 + k, line)?;
                }
                raw.edges.push(RawEdge {
                    line,
                    from: field(&tokens, 1, line)?,
                    to: field(&tokens, 2, line)?,
                    dt: Vector2::new(field(&tokens, 3, line)?, field(&tokens, 4, line)?),
                    dtheta: field(&tokens, 5, line)?,
                    info,
                });
            }
            other => warn!("line {line}: skipping unsupported record `{other}`"),
        }
    }
    Ok(raw)
}

/// Parses a g2o stream into a validated [`PoseGraph`].
///
/// Vertex ids are remapped densely: in file order when `VERTEX_SE2` records
/// exist, otherwise in ascending order of the ids the edges mention. After
/// remapping, the first edge joining `m` and `m + 1` becomes the odometry
/// edge of that step and every other edge is a loop closure. Repeated loop
/// closures between the same ordered pair are dropped with a warning.
pub fn parse_g2o<R: BufRead>(reader: R) -> Result<G2oDocument> {
    let raw = scan(reader)?;

    let index: HashMap<i64, usize> = if raw.vertex_ids.is_empty() {
        let mut ids: Vec<i64> = raw.edges.iter().flat_map(|e| [e.from, e.to]).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    } else {
        raw.vertex_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    };
    let num_vertices = index.len();

    let mut chain_taken = vec![false; num_vertices.saturating_sub(1)];
    let mut lc_pairs = HashSet::new();
    let mut edges = Vec::with_capacity(raw.edges.len());
    for e in &raw.edges {
        let lookup = |id: i64| {
            index.get(&id).copied().ok_or_else(|| Error::Parse {
                line: e.line,
                message: format!("edge references undeclared vertex {id}"),
            })
        };
        let (from, to) = (lookup(e.from)?, lookup(e.to)?);
        let lo = from.min(to);
        let kind = if from.abs_diff(to) == 1 && !chain_taken[lo] {
            chain_taken[lo] = true;
            EdgeKind::Odometry
        } else {
            EdgeKind::LoopClosure
        };
        if kind == EdgeKind::LoopClosure && !lc_pairs.insert((from, to)) {
            warn!("line {}: dropping repeated loop closure ({from}, {to})", e.line);
            continue;
        }
        let tau = 0.5 * (e.info[0] + e.info[3]);
        let kappa = e.info[5];
        let m = RelativeMeasurement::new(from, to, e.dtheta, e.dt, kappa, tau, kind).map_err(
            |err| Error::Parse {
                line: e.line,
                message: err.to_string(),
            },
        )?;
        edges.push(m);
    }

    let graph = PoseGraph::new(num_vertices, edges)?;
    let initial = if raw.vertices.is_empty() {
        None
    } else {
        Some(TrajectoryEstimate::anchored(&raw.vertices)?)
    };
    Ok(G2oDocument { graph, initial })
}

pub fn parse_g2o_str(text: &str) -> Result<G2oDocument> {
    parse_g2o(text.as_bytes())
}

pub fn read_g2o_file(path: impl AsRef<Path>) -> Result<G2oDocument> {
    parse_g2o(BufReader::new(File::open(path)?))
}

/// Reads only the `VERTEX_SE2` records of a stream, e.g. a ground-truth
/// trajectory. Poses are re-anchored on the first vertex.
pub fn parse_poses<R: BufRead>(reader: R) -> Result<TrajectoryEstimate> {
    let raw = scan(reader)?;
    if raw.vertices.is_empty() {
        return Err(Error::Validation("no VERTEX_SE2 records".into()));
    }
    TrajectoryEstimate::anchored(&raw.vertices)
}

pub fn read_poses_file(path: impl AsRef<Path>) -> Result<TrajectoryEstimate> {
    parse_poses(BufReader::new(File::open(path)?))
}

/// Writes `VERTEX_SE2` records for `estimate` (when given) followed by one
/// `EDGE_SE2` per edge in graph order. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_g2o<W: Write>(
    mut out: W,
    graph: &PoseGraph,
    estimate: Option<&TrajectoryEstimate>,
) -> io::Result<()> {
    if let Some(est) = estimate {
        for (i, p) in est.poses().iter().enumerate() {
            writeln!(out, "VERTEX_SE2 {i} {} {} {}", p.t.x, p.t.y, p.theta)?;
        }
    }
    for e in graph.edges() {
        writeln!(
            out,
            "EDGE_SE2 {} {} {} {} {} {} 0 0 {} 0 {}",
            e.from, e.to, e.dt.x, e.dt.y, e.dtheta, e.tau, e.tau, e.kappa
        )?;
    }
    Ok(())
}

pub fn to_g2o_string(graph: &PoseGraph, estimate: Option<&TrajectoryEstimate>) -> String {
    let mut buf = Vec::new();
    write_g2o(&mut buf, graph, estimate).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("g2o output is ASCII")
}

/// Writes only `VERTEX_SE2` records.
pub fn write_poses<W: Write>(mut out: W, estimate: &TrajectoryEstimate) -> io::Result<()> {
    for (i, p) in estimate.poses().iter().enumerate() {
        writeln!(out, "VERTEX_SE2 {i} {} {} {}", p.t.x, p.t.y, p.theta)?;
    }
    Ok(())
}
