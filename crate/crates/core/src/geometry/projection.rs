//! Spherical binning of map points into range projections and albedo renders.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;

use super::image::{EquirectImage, RangeImage};
use super::map::PointCloudMap;
use super::pose::Pose;
use crate::error::{data_err, Result};

/// Projection radius of the standard pipeline, meters.
pub const R_MAX: f64 = 30.0;
/// Side of the standard equirectangular grid.
pub const GRID: usize = 64;

/// Pixel `(row, col)` containing the sensor-frame direction `v`.
pub fn pixel_of(v: &Vector3<f64>, h: usize, w: usize) -> (usize, usize) {
    let r = v.norm();
    let theta = (v.z / r).clamp(-1.0, 1.0).acos();
    let phi = v.y.atan2(v.x).rem_euclid(TAU);
    let row = ((theta * h as f64 / PI).floor() as usize).min(h - 1);
    let col = ((phi * w as f64 / TAU).floor() as usize) % w;
    (row, col)
}

fn check_args(map: &PointCloudMap, h: usize, w: usize, r_max: f64) -> Result<()> {
    if h == 0 || w == 0 {
        return data_err("image dimensions must be positive");
    }
    if !(r_max > 0.0 && r_max.is_finite()) {
        return data_err("projection radius must be positive");
    }
    if map.is_empty() {
        return data_err("empty map");
    }
    Ok(())
}

/// Per-pixel closest point: `(range, point index)`, ties broken by lower index.
fn nearest_per_pixel(map: &PointCloudMap, pose: &Pose, h: usize, w: usize, r_max: f64) -> Vec<Option<(f64, usize)>> {
    let mut best: Vec<Option<(f64, usize)>> = vec![None; h * w];
    let points = map.points();
    map.visit_near(&pose.position, r_max, |i| {
        let local = pose.to_local(&points[i]);
        let range = local.norm();
        if range > r_max || range == 0.0 {
            return;
        }
        let (row, col) = pixel_of(&local, h, w);
        let slot = &mut best[row * w + col];
        let better = match *slot {
            None => true,
            Some((r, j)) => range < r || (range == r && i < j),
        };
        if better {
            *slot = Some((range, i));
        }
    });
    best
}

/// Minimum normalized range per angular bin from `pose`; 1.0 where no point
/// within `r_max` falls.
pub fn project_points_to_range(map: &PointCloudMap, pose: &Pose, h: usize, w: usize, r_max: f64) -> Result<RangeImage> {
    check_args(map, h, w, r_max)?;
    let best = nearest_per_pixel(map, pose, h, w, r_max);
    let data = best.iter().map(|b| b.map_or(1.0, |(r, _)| r / r_max)).collect();
    RangeImage::new(h, w, data)
}

/// Fixed light direction for Lambertian shading.
pub fn light_direction() -> Vector3<f64> {
    Vector3::new(0.45, 0.3, 0.84).normalize()
}

const PALETTE: [[f64; 3]; 6] = [
    [0.16, 0.26, 0.12],
    [0.36, 0.42, 0.20],
    [0.62, 0.55, 0.38],
    [0.72, 0.36, 0.26],
    [0.48, 0.55, 0.66],
    [0.92, 0.90, 0.84],
];

/// Albedo in `[0,1]` to an RGB surface color.
pub fn albedo_color(a: f64) -> [f64; 3] {
    let x = a.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (x.floor() as usize).min(PALETTE.len() - 2);
    let t = x - i as f64;
    let (p, q) = (PALETTE[i], PALETTE[i + 1]);
    [
        p[0] + t * (q[0] - p[0]),
        p[1] + t * (q[1] - p[1]),
        p[2] + t * (q[2] - p[2]),
    ]
}

/// Background color of row `r` for pixels without a return.
pub fn sky_color(r: usize, h: usize) -> [f64; 3] {
    let t = (r as f64 + 0.5) / h as f64;
    [0.30 + 0.5 * t, 0.50 + 0.38 * t, 0.85 + 0.1 * t]
}

/// Albedo point-splat render with the same binning as the range projection.
///
/// Returns the image together with its range projection, which is identical
/// to [`project_points_to_range`] for the same arguments.
pub fn render_view(map: &PointCloudMap, pose: &Pose, h: usize, w: usize, r_max: f64) -> Result<(EquirectImage, RangeImage)> {
    check_args(map, h, w, r_max)?;
    let best = nearest_per_pixel(map, pose, h, w, r_max);
    let light = light_direction();
    let mut img = EquirectImage::filled(h, w, [0.0; 3]);
    let mut range = RangeImage::empty(h, w);
    for r in 0..h {
        for c in 0..w {
            let rgb = match best[r * w + c] {
                None => sky_color(r, h),
                Some((dist, i)) => {
                    range.set(r, c, dist / r_max);
                    let shade = match map.normals() {
                        Some(n) => 0.35 + 0.65 * n[i].dot(&light).max(0.0),
                        None => 1.0,
                    };
                    let base = albedo_color(map.albedo()[i]);
                    [base[0] * shade, base[1] * shade, base[2] * shade]
                }
            };
            img.set_pixel(r, c, rgb);
        }
    }
    Ok((img, range))
}
