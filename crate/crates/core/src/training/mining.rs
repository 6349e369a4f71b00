//! Training tuples: an anchor place, rotated copies of it, nearby positives
//! and distant negatives.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::transfer::net::rng_for;

/// Rotation angles are multiples of this, in degrees.
pub const ROTATION_STEP_DEG: f64 = 30.0;

/// Place ids into the pose list the tuple was mined from. Every member can be
/// instantiated in either domain (image or range projection).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingTuple {
    pub anchor: usize,
    /// `(place id, yaw angle in degrees)`; the place is always the anchor.
    pub rotated: Vec<(usize, f64)>,
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

fn is_positive(d: f64, cfg: &TrainConfig) -> bool {
    d > cfg.exclude_radius && d <= cfg.margins.d_pos
}

fn is_negative(d: f64, cfg: &TrainConfig) -> bool {
    d >= cfg.margins.d_neg
}

/// Draws a tuple around `anchor`; deterministic in `seed`.
pub fn mine_tuple(poses: &[Pose], anchor: usize, cfg: &TrainConfig, seed: u64) -> Result<TrainingTuple> {
    let Some(a) = poses.get(anchor) else {
        return Err(Error::Data(format!("anchor {anchor} outside {} poses", poses.len())));
    };
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, p) in poses.iter().enumerate() {
        let d = a.distance(p);
        if i != anchor && is_positive(d, cfg) {
            pos.push(i);
        } else if is_negative(d, cfg) {
            neg.push(i);
        }
    }
    if pos.is_empty() {
        return Err(Error::Data(format!("no valid positive for anchor {anchor}")));
    }
    if neg.is_empty() {
        return Err(Error::Data(format!("no valid negative for anchor {anchor}")));
    }
    let mut rng = rng_for(seed, anchor as u64);
    let slots = (360.0 / ROTATION_STEP_DEG) as usize;
    let rotated = (0..cfg.rotations)
        .map(|_| {
            let angle = if cfg.rotate {
                rng.random_range(0..slots) as f64 * ROTATION_STEP_DEG
            } else {
                0.0
            };
            (anchor, angle)
        })
        .collect();
    let positives = choose(&mut rng, &pos, cfg.positives);
    let negatives = choose(&mut rng, &neg, cfg.negatives);
    Ok(TrainingTuple {
        anchor,
        rotated,
        positives,
        negatives,
    })
}

/// `n` distinct items when available, otherwise all of them.
fn choose(rng: &mut impl Rng, items: &[usize], n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = items.choose_multiple(rng, n.min(items.len())).copied().collect();
    v.sort_unstable();
    v
}

/// Re-checks every distance invariant of `t` against `poses`.
pub fn verify_tuple(poses: &[Pose], t: &TrainingTuple, cfg: &TrainConfig) -> Result<()> {
    let bad = |msg: String| Err(Error::Train(format!("invalid tuple for anchor {}: {msg}", t.anchor)));
    let n = poses.len();
    if t.anchor >= n || t.positives.iter().chain(&t.negatives).any(|&i| i >= n) {
        return bad("member outside the pose list".into());
    }
    if t.positives.is_empty() || t.negatives.is_empty() {
        return bad("empty positives or negatives".into());
    }
    let a = &poses[t.anchor];
    for &(id, angle) in &t.rotated {
        let on_grid = (angle / ROTATION_STEP_DEG).fract() == 0.0 && (0.0..360.0).contains(&angle);
        if id != t.anchor || !on_grid {
            return bad(format!("rotated member ({id}, {angle})"));
        }
    }
    for &p in &t.positives {
        let d = a.distance(&poses[p]);
        if p == t.anchor || !is_positive(d, cfg) {
            return bad(format!("positive {p} at {d} m"));
        }
    }
    for &q in &t.negatives {
        let d = a.distance(&poses[q]);
        if !is_negative(d, cfg) {
            return bad(format!("negative {q} at {d} m"));
        }
    }
    Ok(())
}
