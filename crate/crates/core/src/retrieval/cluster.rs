//! Seeded k-means++ / Lloyd clustering of descriptors.

use std::io::Write;

use rand::Rng;

use crate::error::{data_err, Result};
use crate::transfer::net::rng_for;

pub const KMEANS_MAX_ITER: usize = 100;
/// Lloyd stops once no center moves farther than this.
pub const KMEANS_TOL: f64 = 1e-6;
/// Independent k-means++ starts; the lowest-inertia run is kept.
pub const KMEANS_RESTARTS: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties to the lower index.
fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Sum of squared distances to assigned centers.
pub fn inertia(points: &[Vec<f64>], centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    points.iter().zip(labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum()
}

/// Seeded k-means++ initial centers for start `restart` of [`cluster_descriptors`].
pub fn kmeans_init(points: &[Vec<f64>], k: usize, seed: u64, restart: usize) -> Vec<Vec<f64>> {
    kmeans_pp(points, k, &mut rng_for(seed, 505 + restart as u64))
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[idx].clone());
        let last = centers.last().expect("non-empty");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, last));
        }
    }
    centers
}

/// Lloyd iterations from [`KMEANS_RESTARTS`] seeded k-means++ starts; the run
/// with the lowest inertia wins (earliest on ties). Empty clusters keep their
/// previous center.
pub fn cluster_descriptors(points: &[Vec<f64>], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return data_err("k must be positive");
    }
    if points.len() < k {
        return data_err(format!("{} points cannot form {k} clusters", points.len()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return data_err("points differ in dimension");
    }
    let mut best: Option<Clustering> = None;
    for r in 0..KMEANS_RESTARTS {
        let run = lloyd(points, kmeans_init(points, k, seed, r));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> Clustering {
    let (k, dim) = (centers.len(), points[0].len());
    let mut labels = vec![0; points.len()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(p, &centers).0;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centers[c]).sqrt());
            centers[c] = new;
        }
        if shift <= KMEANS_TOL {
            break;
        }
    }
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(p, &centers).0;
    }
    let inertia = inertia(points, &centers, &labels);
    Clustering {
        labels,
        centers,
        inertia,
        iterations,
    }
}

pub fn write_cluster_csv<W: Write>(mut w: W, labels: &[usize]) -> Result<()> {
    writeln!(w, "id,label")?;
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    Ok(())
}
