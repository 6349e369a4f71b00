//! Paired image / range samples rendered along a trajectory.

use super::condition::{apply_condition, ConditionSpec};
use super::image::{EquirectImage, RangeImage};
use super::map::PointCloudMap;
use super::pose::{Pose, Trajectory};
use super::projection::render_view;
use crate::error::{data_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PairedSample {
    pub image: EquirectImage,
    pub range: RangeImage,
    pub pose: Pose,
    pub pose_index: usize,
    pub condition: usize,
}

/// Per-image noise seed, so that each pose gets independent noise under a condition.
pub fn pair_seed(cond_seed: u64, pose_index: usize) -> u64 {
    cond_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(pose_index as u64)
}

/// Renders every `pose × condition` pair, ordered by pose then condition.
pub fn generate_paired_dataset(
    map: &PointCloudMap,
    trajectory: &Trajectory,
    conditions: &[ConditionSpec],
    h: usize,
    w: usize,
    r_max: f64,
) -> Result<Vec<PairedSample>> {
    if trajectory.is_empty() {
        return data_err("empty trajectory");
    }
    if conditions.is_empty() {
        return data_err("empty condition list");
    }
    for c in conditions {
        c.validate()?;
        if c.label >= conditions.len() {
            return data_err(format!("condition label {} outside [0, {})", c.label, conditions.len()));
        }
    }
    let mut out = Vec::with_capacity(trajectory.len() * conditions.len());
    for (i, pose) in trajectory.poses().iter().enumerate() {
        let (base, range) = render_view(map, pose, h, w, r_max)?;
        for c in conditions {
            let spec = ConditionSpec {
                seed: pair_seed(c.seed, i),
                ..c.clone()
            };
            out.push(PairedSample {
                image: apply_condition(&base, &spec)?,
                range: range.clone(),
                pose: pose.clone(),
                pose_index: i,
                condition: c.label,
            });
        }
    }
    Ok(out)
}
