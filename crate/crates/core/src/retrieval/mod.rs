//! Exhaustive descriptor retrieval, recall evaluation, clustering and
//! trajectory metrics.

mod cluster;
mod odometry;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::binio::*;
use crate::descriptor::{distance, read_descriptors, write_descriptors};
use crate::error::{data_err, Error, Result};
use crate::geometry::Pose;

pub use cluster::{cluster_descriptors, inertia, kmeans_init, write_cluster_csv, Clustering, KMEANS_MAX_ITER, KMEANS_RESTARTS, KMEANS_TOL};
pub use odometry::{compute_ape, fuse_localization, simulate_odometry, Fix, FIX_GATE};

/// Stored descriptors may deviate from unit norm by f32 rounding.
const NORM_TOL: f64 = 1e-4;
pub const SUCCESS_DIST: f64 = 10.0;
pub const TOP_PERCENT: f64 = 1.0;

/// Immutable database of unit-norm (or zero) descriptors with their poses.
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalIndex {
    descriptors: Vec<Vec<f64>>,
    poses: Vec<Pose>,
    ids: Vec<u32>,
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.descriptors.first().map_or(0, Vec::len)
    }

    pub fn descriptors(&self) -> &[Vec<f64>] {
        &self.descriptors
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Serialized as a descriptor file; ids are positions.
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        write_descriptors(w, &self.descriptors, &self.poses)
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let (d, p) = read_descriptors(r)?;
        build_index(d, p)
    }
}

pub fn build_index(descriptors: Vec<Vec<f64>>, poses: Vec<Pose>) -> Result<RetrievalIndex> {
    if descriptors.len() != poses.len() {
        return data_err(format!("{} descriptors but {} poses", descriptors.len(), poses.len()));
    }
    if descriptors.len() > u32::MAX as usize {
        return data_err("index too large");
    }
    let dim = descriptors.first().map_or(0, Vec::len);
    for (i, d) in descriptors.iter().enumerate() {
        if d.len() != dim {
            return data_err(format!("descriptor {i} has length {}, expected {dim}", d.len()));
        }
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        let zero = d.iter().all(|v| *v == 0.0);
        if !zero && (norm - 1.0).abs() > NORM_TOL {
            return data_err(format!("descriptor {i} has norm {norm}"));
        }
    }
    let ids = (0..descriptors.len() as u32).collect();
    Ok(RetrievalIndex { descriptors, poses, ids })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub ids: Vec<u32>,
    /// Ascending.
    pub distances: Vec<f64>,
    /// Whether any returned entry lies within the success distance of the
    /// query's true pose; false when no ground truth was supplied.
    pub success: bool,
}

fn ranked(index: &RetrievalIndex, query: &[f64]) -> Result<Vec<(f64, u32)>> {
    if query.len() != index.dim() {
        return data_err(format!("query has length {}, index dimension is {}", query.len(), index.dim()));
    }
    let mut all: Vec<(f64, u32)> = index.descriptors.iter().zip(&index.ids).map(|(d, &id)| (distance(d, query), id)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(all)
}

/// The `k` nearest entries by Euclidean distance, ties broken by lower id.
pub fn query_top_k(index: &RetrievalIndex, query: &[f64], k: usize) -> Result<RetrievalResult> {
    if k == 0 || k > index.len() {
        return data_err(format!("k = {k} outside [1, {}]", index.len()));
    }
    let mut all = ranked(index, query)?;
    all.truncate(k);
    Ok(RetrievalResult {
        ids: all.iter().map(|a| a.1).collect(),
        distances: all.iter().map(|a| a.0).collect(),
        success: false,
    })
}

/// Candidates per query for a top-`percent` retrieval over `count` entries.
pub fn top_percent_count(count: usize, percent: f64) -> usize {
    ((count as f64 * percent / 100.0).ceil() as usize).clamp(1, count.max(1))
}

/// Row-major query × database distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

const MATRIX_MAGIC: &[u8; 6] = b"I3DDM1";

impl DistanceMatrix {
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        write_magic(&mut w, MATRIX_MAGIC)?;
        write_u32(&mut w, self.rows as u32)?;
        write_u32(&mut w, self.cols as u32)?;
        write_f32s(&mut w, self.data.iter().map(|v| *v as f64))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, MATRIX_MAGIC)?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        if rows.saturating_mul(cols) > 1 << 30 {
            return data_err("distance matrix too large");
        }
        let data = read_f32s(&mut r, rows * cols)?.into_iter().map(|v| v as f32).collect();
        Ok(DistanceMatrix { rows, cols, data })
    }
}

/// Outcome of one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub top: RetrievalResult,
    pub success_top1: bool,
    /// Distance from the query's true pose to the rank-1 entry, meters.
    pub top1_error: f64,
}

/// Retrieval and localization metrics of one evaluation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub recall_top1pct: f64,
    pub recall_top1: f64,
    pub ape_mean: Option<f64>,
    pub ape_std: Option<f64>,
    pub queries: Vec<QueryRecord>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Eval(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Data(format!("malformed report: {e}")))
    }
}

/// Recall at top `top_percent`% with success radius `success_dist`, plus the
/// full distance matrix.
pub fn evaluate_recall(
    index: &RetrievalIndex,
    queries: &[Vec<f64>],
    truth: &[Pose],
    top_percent: f64,
    success_dist: f64,
) -> Result<(EvalReport, DistanceMatrix)> {
    if index.is_empty() {
        return Err(Error::Eval("empty index".into()));
    }
    if queries.is_empty() {
        return Err(Error::Eval("empty query set".into()));
    }
    if queries.len() != truth.len() {
        return data_err(format!("{} queries but {} poses", queries.len(), truth.len()));
    }
    if !(top_percent > 0.0 && top_percent <= 100.0) || !(success_dist >= 0.0) {
        return Err(Error::Config("top_percent must lie in (0, 100] and success_dist be non-negative".into()));
    }
    let k = top_percent_count(index.len(), top_percent);
    let mut matrix = DistanceMatrix {
        rows: queries.len(),
        cols: index.len(),
        data: Vec::with_capacity(queries.len() * index.len()),
    };
    let mut report = EvalReport::default();
    let (mut hits, mut hits1) = (0usize, 0usize);
    for (qi, (q, pose)) in queries.iter().zip(truth).enumerate() {
        let all = ranked(index, q)?;
        let mut row = vec![0f32; index.len()];
        for &(d, id) in &all {
            row[id as usize] = d as f32;
        }
        matrix.data.extend(row);
        let near = |id: u32| index.poses[id as usize].distance(pose) <= success_dist;
        let success = all[..k].iter().any(|a| near(a.1));
        let success_top1 = near(all[0].1);
        hits += success as usize;
        hits1 += success_top1 as usize;
        report.queries.push(QueryRecord {
            query: qi,
            top: RetrievalResult {
                ids: all[..k].iter().map(|a| a.1).collect(),
                distances: all[..k].iter().map(|a| a.0).collect(),
                success,
            },
            success_top1,
            top1_error: index.poses[all[0].1 as usize].distance(pose),
        });
    }
    report.recall_top1pct = hits as f64 / queries.len() as f64;
    report.recall_top1 = hits1 as f64 / queries.len() as f64;
    Ok((report, matrix))
}
