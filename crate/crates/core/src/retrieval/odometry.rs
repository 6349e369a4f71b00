//! Drifting odometry, retrieval-fix fusion and absolute pose error.

use nalgebra::{UnitQuaternion, Vector3};
use rand_distr::{Distribution, Normal};

use crate::error::{data_err, Error, Result};
use crate::geometry::{Pose, Trajectory};
use crate::transfer::net::rng_for;

/// Retrievals with descriptor distance below this are accepted as fixes.
pub const FIX_GATE: f64 = 0.8;
/// Timestamp matching tolerance, seconds.
const TIME_TOL: f64 = 1e-6;

/// Dead reckoning from ground truth: every relative translation is scaled
/// by `1 + drift_rate` and the heading picks up Gaussian noise each step, with
/// standard deviation `noise_sigma / step_length` radians (a lateral error of
/// `noise_sigma` meters over the step).
pub fn simulate_odometry(gt: &Trajectory, drift_rate: f64, noise_sigma: f64, seed: u64) -> Result<Trajectory> {
    if !(drift_rate >= 0.0 && drift_rate.is_finite()) || !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Config("drift_rate and noise_sigma must be finite and non-negative".into()));
    }
    let poses = gt.poses();
    let Some(first) = poses.first() else {
        return Ok(gt.clone());
    };
    let mut rng = rng_for(seed, 606);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut out = vec![first.clone()];
    // estimate = truth + offset, heading error `phi`
    let mut offset = Vector3::zeros();
    let mut phi = 0.0f64;
    for w in poses.windows(2) {
        let delta = w[1].position - w[0].position;
        let (s, c) = phi.sin_cos();
        let rotated = Vector3::new(c * delta.x - s * delta.y, s * delta.x + c * delta.y, delta.z);
        offset += (rotated - delta) + rotated * drift_rate;
        let step = delta.norm();
        if noise_sigma > 0.0 && step > 0.0 {
            phi += normal.sample(&mut rng) * noise_sigma / step;
        }
        let orientation = if phi == 0.0 {
            w[1].orientation
        } else {
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), phi) * w[1].orientation
        };
        out.push(Pose {
            position: w[1].position + offset,
            orientation,
            timestamp: w[1].timestamp,
        });
    }
    Trajectory::new(out)
}

/// A localization fix from place retrieval.
#[derive(Clone, Debug, PartialEq)]
pub struct Fix {
    pub timestamp: f64,
    pub pose: Pose,
    pub success: bool,
}

fn frame_of(odom: &[Pose], t: f64) -> Option<usize> {
    let i = odom.partition_point(|p| p.timestamp < t - TIME_TOL);
    (i < odom.len() && (odom[i].timestamp - t).abs() <= TIME_TOL).then_some(i)
}

/// Snaps the odometry to every successful fix and interpolates the position
/// correction linearly in time between fixes. The correction is zero at the
/// first frame and held constant after the last fix.
pub fn fuse_localization(odometry: &Trajectory, fixes: &[Fix]) -> Result<Trajectory> {
    if fixes.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return data_err("fixes must be strictly ordered in time");
    }
    let odom = odometry.poses();
    // (frame, correction) knots
    let mut knots: Vec<(usize, Vector3<f64>)> = Vec::new();
    for f in fixes {
        let Some(i) = frame_of(odom, f.timestamp) else {
            return data_err(format!("fix at t={} matches no odometry frame", f.timestamp));
        };
        if f.success {
            knots.push((i, f.pose.position - odom[i].position));
        }
    }
    let mut out = odom.to_vec();
    if knots.is_empty() {
        return Ok(odometry.clone());
    }
    if knots[0].0 != 0 {
        knots.insert(0, (0, Vector3::zeros()));
    }
    let mut seg = 0;
    for (i, pose) in out.iter_mut().enumerate() {
        while seg + 1 < knots.len() && knots[seg + 1].0 <= i {
            seg += 1;
        }
        let (i0, c0) = knots[seg];
        let correction = match knots.get(seg + 1) {
            Some(&(i1, c1)) if i > i0 => {
                let (t0, t1) = (odom[i0].timestamp, odom[i1].timestamp);
                let a = (odom[i].timestamp - t0) / (t1 - t0);
                c0 + (c1 - c0) * a
            }
            _ => c0,
        };
        pose.position += correction;
    }
    for f in fixes.iter().filter(|f| f.success) {
        let i = frame_of(odom, f.timestamp).expect("checked above");
        out[i] = Pose {
            timestamp: odom[i].timestamp,
            ..f.pose.clone()
        };
    }
    Trajectory::new(out)
}

/// Mean and population standard deviation of per-pose position errors,
/// without any alignment.
pub fn compute_ape(estimate: &Trajectory, gt: &Trajectory) -> Result<(f64, f64)> {
    let (e, g) = (estimate.poses(), gt.poses());
    if e.len() != g.len() {
        return Err(Error::Eval(format!("trajectory lengths differ ({} vs {})", e.len(), g.len())));
    }
    if e.is_empty() {
        return Err(Error::Eval("empty trajectories".into()));
    }
    let mut errs = Vec::with_capacity(e.len());
    for (a, b) in e.iter().zip(g) {
        if (a.timestamp - b.timestamp).abs() > TIME_TOL {
            return Err(Error::Eval(format!("timestamps differ ({} vs {})", a.timestamp, b.timestamp)));
        }
        errs.push(a.distance(b));
    }
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}
