//! Procedural worlds: a textured ground plane plus boxes and cylinders
//! placed along a closed loop trajectory.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::map::{Aabb, PointCloudMap};
use super::pose::{Pose, Trajectory};
use crate::error::{data_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    pub seed: u64,
    /// Side of the square world, meters.
    pub extent: f64,
    pub n_primitives: usize,
    /// Number of trajectory poses; derived from `max_step` when unset.
    pub n_poses: Option<usize>,
    pub max_step: f64,
    pub sensor_height: f64,
    pub ground_spacing: f64,
    pub surface_spacing: f64,
    /// Minimum free distance between the path and any primitive.
    pub clearance: f64,
    /// Primitives are placed within this lateral distance of the path.
    pub corridor: f64,
}

impl WorldConfig {
    pub fn new(seed: u64, extent: f64, n_primitives: usize) -> Self {
        WorldConfig {
            seed,
            extent,
            n_primitives,
            n_poses: None,
            max_step: 2.0,
            sensor_height: 1.8,
            ground_spacing: 0.5,
            surface_spacing: 0.3,
            clearance: 3.0,
            corridor: 24.0,
        }
    }
}

#[derive(Clone, Debug)]
enum Primitive {
    Box {
        center: (f64, f64),
        half: (f64, f64),
        height: f64,
        albedo: f64,
    },
    Cylinder {
        center: (f64, f64),
        radius: f64,
        height: f64,
        albedo: f64,
    },
}

impl Primitive {
    fn center(&self) -> (f64, f64) {
        match self {
            Primitive::Box { center, .. } | Primitive::Cylinder { center, .. } => *center,
        }
    }

    fn footprint_radius(&self) -> f64 {
        match self {
            Primitive::Box { half, .. } => half.0.hypot(half.1),
            Primitive::Cylinder { radius, .. } => *radius,
        }
    }

    fn sample(&self, spacing: f64, pts: &mut Vec<Vector3<f64>>, albedo: &mut Vec<f64>, normals: &mut Vec<Vector3<f64>>) {
        let steps = |len: f64| ((len / spacing).ceil() as usize).max(1);
        match *self {
            Primitive::Box {
                center: (cx, cy),
                half: (hx, hy),
                height,
                albedo: a,
            } => {
                let nz = steps(height);
                // (origin, along-edge direction, edge length, outward normal)
                let faces = [
                    ((cx - hx, cy - hy), (1.0, 0.0), 2.0 * hx, (0.0, -1.0)),
                    ((cx + hx, cy - hy), (0.0, 1.0), 2.0 * hy, (1.0, 0.0)),
                    ((cx + hx, cy + hy), (-1.0, 0.0), 2.0 * hx, (0.0, 1.0)),
                    ((cx - hx, cy + hy), (0.0, -1.0), 2.0 * hy, (-1.0, 0.0)),
                ];
                for (o, d, len, n) in faces {
                    let nu = steps(len);
                    for i in 0..nu {
                        let u = (i as f64 + 0.5) / nu as f64 * len;
                        for j in 0..nz {
                            let z = (j as f64 + 0.5) / nz as f64 * height;
                            pts.push(Vector3::new(o.0 + d.0 * u, o.1 + d.1 * u, z));
                            albedo.push(a);
                            normals.push(Vector3::new(n.0, n.1, 0.0));
                        }
                    }
                }
                let (nx, ny) = (steps(2.0 * hx), steps(2.0 * hy));
                for i in 0..nx {
                    for j in 0..ny {
                        let x = cx - hx + (i as f64 + 0.5) / nx as f64 * 2.0 * hx;
                        let y = cy - hy + (j as f64 + 0.5) / ny as f64 * 2.0 * hy;
                        pts.push(Vector3::new(x, y, height));
                        albedo.push(a);
                        normals.push(Vector3::z());
                    }
                }
            }
            Primitive::Cylinder {
                center: (cx, cy),
                radius,
                height,
                albedo: a,
            } => {
                let na = steps(TAU * radius).max(6);
                let nz = steps(height);
                for i in 0..na {
                    let t = (i as f64 + 0.5) / na as f64 * TAU;
                    let (s, c) = t.sin_cos();
                    for j in 0..nz {
                        let z = (j as f64 + 0.5) / nz as f64 * height;
                        pts.push(Vector3::new(cx + radius * c, cy + radius * s, z));
                        albedo.push(a);
                        normals.push(Vector3::new(c, s, 0.0));
                    }
                }
                let rings = steps(radius);
                for k in 0..rings {
                    let rho = (k as f64 + 0.5) / rings as f64 * radius;
                    let n = steps(TAU * rho).max(3);
                    for i in 0..n {
                        let t = i as f64 / n as f64 * TAU;
                        pts.push(Vector3::new(cx + rho * t.cos(), cy + rho * t.sin(), height));
                        albedo.push(a);
                        normals.push(Vector3::z());
                    }
                }
            }
        }
    }
}

/// Densely sampled closed loop with cumulative arc length.
struct LoopPath {
    points: Vec<(f64, f64)>,
    cumulative: Vec<f64>,
}

impl LoopPath {
    fn new(extent: f64, rng: &mut ChaCha8Rng) -> Self {
        let (p1, p2) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
        let (a, b) = (0.36 * extent, 0.28 * extent);
        let m = 8192;
        let points: Vec<(f64, f64)> = (0..=m)
            .map(|i| {
                let t = i as f64 / m as f64 * TAU;
                let r = 1.0 + 0.07 * (3.0 * t + p1).sin() + 0.04 * (5.0 * t + p2).sin();
                (a * r * t.cos(), b * r * t.sin())
            })
            .collect();
        let mut cumulative = vec![0.0; points.len()];
        for i in 1..points.len() {
            let (x0, y0) = points[i - 1];
            let (x1, y1) = points[i];
            cumulative[i] = cumulative[i - 1] + (x1 - x0).hypot(y1 - y0);
        }
        LoopPath { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Position and heading at arc length `s`.
    fn at(&self, s: f64) -> ((f64, f64), f64) {
        let i = self.cumulative.partition_point(|&c| c <= s).clamp(1, self.points.len() - 1);
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        let t = if c1 > c0 { (s - c0) / (c1 - c0) } else { 0.0 };
        let (x0, y0) = self.points[i - 1];
        let (x1, y1) = self.points[i];
        ((x0 + t * (x1 - x0), y0 + t * (y1 - y0)), (y1 - y0).atan2(x1 - x0))
    }

    fn distance_to(&self, x: f64, y: f64) -> f64 {
        self.points
            .iter()
            .map(|&(px, py)| (px - x).hypot(py - y))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Deterministic world and loop trajectory for `seed`.
pub fn synthesize_world(seed: u64, extent: f64, n_primitives: usize) -> Result<(PointCloudMap, Trajectory)> {
    synthesize_world_with(&WorldConfig::new(seed, extent, n_primitives))
}

pub fn synthesize_world_with(cfg: &WorldConfig) -> Result<(PointCloudMap, Trajectory)> {
    if !(cfg.extent > 0.0 && cfg.extent.is_finite()) {
        return data_err("extent must be positive");
    }
    if cfg.extent < 40.0 {
        return data_err(format!("no free space for a loop trajectory in a {} m world", cfg.extent));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let path = LoopPath::new(cfg.extent, &mut rng);
    let length = path.length();
    let n_poses = cfg
        .n_poses
        .unwrap_or_else(|| (length / (0.75 * cfg.max_step)).ceil() as usize)
        .max(2);
    let spacing = length / n_poses as f64;
    if spacing > cfg.max_step {
        return data_err(format!(
            "infeasible trajectory: {n_poses} poses on a {length:.1} m loop exceed the {} m step limit",
            cfg.max_step
        ));
    }
    let poses = (0..n_poses)
        .map(|i| {
            let ((x, y), yaw) = path.at(i as f64 * spacing);
            Pose::from_yaw(Vector3::new(x, y, cfg.sensor_height), yaw, i as f64)
        })
        .collect();
    let trajectory = Trajectory::new(poses)?;

    let half = cfg.extent / 2.0;
    let mut prims: Vec<Primitive> = Vec::with_capacity(cfg.n_primitives);
    let mut attempts = 0usize;
    while prims.len() < cfg.n_primitives {
        attempts += 1;
        if attempts > 200 * (cfg.n_primitives + 10) {
            return data_err(format!("no free space for {} primitives", cfg.n_primitives));
        }
        let albedo = rng.random_range(0.35..1.0);
        let prim = if rng.random_bool(0.4) {
            Primitive::Cylinder {
                center: (0.0, 0.0),
                radius: rng.random_range(0.3..2.5),
                height: rng.random_range(2.0..14.0),
                albedo,
            }
        } else {
            Primitive::Box {
                center: (0.0, 0.0),
                half: (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0)),
                height: rng.random_range(2.5..12.0),
                albedo,
            }
        };
        let fr = prim.footprint_radius();
        let ((px, py), heading) = path.at(rng.random_range(0.0..length));
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let lo = cfg.clearance + fr;
        if lo >= cfg.corridor {
            continue;
        }
        let d = rng.random_range(lo..cfg.corridor);
        let (nx, ny) = (-heading.sin() * side, heading.cos() * side);
        let center = (px + nx * d, py + ny * d);
        if center.0.abs() + fr > half || center.1.abs() + fr > half {
            continue;
        }
        if path.distance_to(center.0, center.1) < lo {
            continue;
        }
        let overlaps = prims.iter().any(|q| {
            let (qx, qy) = q.center();
            (qx - center.0).hypot(qy - center.1) < q.footprint_radius() + fr + 0.5
        });
        if overlaps {
            continue;
        }
        prims.push(match prim {
            Primitive::Box { half, height, albedo, .. } => Primitive::Box { center, half, height, albedo },
            Primitive::Cylinder { radius, height, albedo, .. } => Primitive::Cylinder { center, radius, height, albedo },
        });
    }

    let mut pts = Vec::new();
    let mut albedo = Vec::new();
    let mut normals = Vec::new();
    let gs = cfg.ground_spacing;
    let n = (cfg.extent / gs).floor() as usize;
    // refinement level per ground cell: dense near the path, where the
    // sensor looks steeply down at the ground
    let mut level = vec![0u8; n * n];
    let reach = (8.0 / gs).ceil() as i64;
    for &(px, py) in path.points.iter().step_by(4) {
        let ci = ((px + half) / gs).floor() as i64;
        let cj = ((py + half) / gs).floor() as i64;
        for i in (ci - reach).max(0)..=(ci + reach).min(n as i64 - 1) {
            for j in (cj - reach).max(0)..=(cj + reach).min(n as i64 - 1) {
                let x = -half + (i as f64 + 0.5) * gs;
                let y = -half + (j as f64 + 0.5) * gs;
                let d = (x - px).hypot(y - py);
                let lv = if d <= 3.5 { 2 } else if d <= 8.5 { 1 } else { 0 };
                let slot = &mut level[i as usize * n + j as usize];
                *slot = (*slot).max(lv);
            }
        }
    }
    let phases: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..TAU)).collect();
    for i in 0..n {
        for j in 0..n {
            let sub = match level[i * n + j] {
                2 => 5,
                1 => 2,
                _ => 1,
            };
            let step = gs / sub as f64;
            for a in 0..sub {
                for b in 0..sub {
                    let jx = rng.random_range(-0.3..0.3);
                    let jy = rng.random_range(-0.3..0.3);
                    let x = (-half + i as f64 * gs + (a as f64 + 0.5 + jx) * step).clamp(-half, half);
                    let y = (-half + j as f64 * gs + (b as f64 + 0.5 + jy) * step).clamp(-half, half);
                    let tex = 0.14
                        + 0.06 * (x / 9.0 + phases[0]).sin()
                        + 0.06 * (y / 13.0 + phases[1]).sin()
                        + 0.05 * ((x + y) / 5.0 + phases[2]).sin();
                    pts.push(Vector3::new(x, y, 0.0));
                    albedo.push(tex.clamp(0.0, 0.33));
                    normals.push(Vector3::z());
                }
            }
        }
    }
    for p in &prims {
        p.sample(cfg.surface_spacing, &mut pts, &mut albedo, &mut normals);
    }
    let extent = Aabb {
        min: Vector3::new(-half, -half, 0.0),
        max: Vector3::new(half, half, half.max(15.0)),
    };
    let map = PointCloudMap::with_extent(pts, albedo, extent)?.with_normals(normals)?;
    Ok((map, trajectory))
}

/// Range along a sensor ray at polar angle `theta` to a horizontal plane
/// `height` meters below the sensor; infinite at or above the horizon.
pub fn ground_plane_range(height: f64, theta: f64) -> f64 {
    let drop = theta - PI / 2.0;
    if drop <= 0.0 {
        f64::INFINITY
    } else {
        height / drop.sin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_extent_is_rejected() {
        assert!(synthesize_world(1, 10.0, 0).is_err());
    }

    #[test]
    fn steps_respect_limit() {
        let (_, traj) = synthesize_world(3, 80.0, 5).unwrap();
        assert!(traj.max_step() <= 2.0);
        assert!(traj.len() > 10);
    }

    #[test]
    fn too_few_poses_is_infeasible() {
        let mut cfg = WorldConfig::new(3, 200.0, 0);
        cfg.n_poses = Some(10);
        assert!(synthesize_world_with(&cfg).is_err());
    }
}
