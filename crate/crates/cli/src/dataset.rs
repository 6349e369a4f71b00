//! On-disk layout of a synthesized dataset directory.
//!
//! ```text
//! map.i3dpc            point-cloud map
//! trajectory.tum       keyframe poses
//! samples.csv          pose,condition,image,range
//! images/cC/pNNNN.png  appearance-conditioned panoramas
//! ranges/pNNNN.i3drg   range projections
//! rotated.csv          pose,yaw_deg
//! rotated/cC/pNNNN.png panoramas captured with the extra yaw
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use xdloc::geometry::dataset::pair_seed;
use xdloc::geometry::io::{read_png, read_range, read_tum, write_png, write_point_cloud, write_range, write_tum};
use xdloc::geometry::{
    apply_condition, generate_paired_dataset, render_view, synthesize_world_with, ConditionSpec, EquirectImage,
    PairedSample, Pose, Trajectory,
};
use xdloc::transfer::net::rng_for;
use xdloc::{Error, Result};
use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;

use crate::config::RunConfig;

pub struct Dataset {
    pub trajectory: Trajectory,
    /// Ordered by pose, then condition.
    pub samples: Vec<PairedSample>,
    pub conditions: usize,
}

/// A query captured with an additional yaw about the vertical axis.
pub struct RotatedQuery {
    pub pose_index: usize,
    pub image: EquirectImage,
}

fn data_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}

fn image_path(c: usize, i: usize) -> String {
    format!("images/c{c}/p{i:04}.png")
}

fn rotated_path(c: usize, i: usize) -> String {
    format!("rotated/c{c}/p{i:04}.png")
}

fn range_path(i: usize) -> String {
    format!("ranges/p{i:04}.i3drg")
}

fn save_png(path: &Path, img: &EquirectImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_png(&mut w, img)
}

fn yawed(pose: &Pose, yaw_deg: f64) -> Pose {
    Pose {
        orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw_deg.to_radians()) * pose.orientation,
        ..pose.clone()
    }
}

/// Renders the world, trajectory, paired samples and yawed query captures.
pub fn synthesize(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let (map, traj) = synthesize_world_with(&cfg.world()?)?;
    let conds = cfg.conditions()?;
    let (h, w, r_max): (usize, usize, f64) = (cfg.get("image.height")?, cfg.get("image.width")?, cfg.get("image.r_max")?);
    let samples = generate_paired_dataset(&map, &traj, &conds, h, w, r_max)?;
    for c in 0..conds.len() {
        fs::create_dir_all(dir.join(format!("images/c{c}")))?;
        fs::create_dir_all(dir.join(format!("rotated/c{c}")))?;
    }
    fs::create_dir_all(dir.join("ranges"))?;
    write_point_cloud(BufWriter::new(File::create(dir.join("map.i3dpc"))?), &map)?;
    write_tum(BufWriter::new(File::create(dir.join("trajectory.tum"))?), traj.poses())?;

    let mut index = String::from("pose,condition,image,range\n");
    for s in &samples {
        let (img, rng) = (image_path(s.condition, s.pose_index), range_path(s.pose_index));
        save_png(&dir.join(&img), &s.image)?;
        if s.condition == 0 {
            write_range(BufWriter::new(File::create(dir.join(&rng))?), &s.range)?;
        }
        index.push_str(&format!("{},{},{img},{rng}\n", s.pose_index, s.condition));
    }
    fs::write(dir.join("samples.csv"), index)?;

    let mut yaw_rng = rng_for(cfg.seed()?, 707);
    let mut rotated = String::from("pose,yaw_deg\n");
    for (i, pose) in traj.poses().iter().enumerate() {
        let yaw: f64 = yaw_rng.random_range(0.0..360.0);
        let (base, _) = render_view(&map, &yawed(pose, yaw), h, w, r_max)?;
        for c in &conds {
            let spec = ConditionSpec {
                seed: pair_seed(c.seed, i),
                ..c.clone()
            };
            save_png(&dir.join(rotated_path(c.label, i)), &apply_condition(&base, &spec)?)?;
        }
        rotated.push_str(&format!("{i},{yaw}\n"));
    }
    fs::write(dir.join("rotated.csv"), rotated)?;
    Ok(())
}

fn csv_rows(path: &Path, fields: usize) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let row: Vec<String> = line.split(',').map(str::to_string).collect();
        if row.len() != fields {
            return data_err(format!("{}:{}: expected {fields} fields", path.display(), n + 1));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Data(format!("bad {what} '{s}'")))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let f = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_tum(BufReader::new(f))
}

fn load_png(path: &Path) -> Result<EquirectImage> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    read_png(&bytes)
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let trajectory = load_trajectory(&dir.join("trajectory.tum"))?;
    let rows = csv_rows(&dir.join("samples.csv"), 4)?;
    let mut ranges = Vec::new();
    let mut samples = Vec::with_capacity(rows.len());
    let mut conditions = 0;
    for row in rows {
        let (p, c): (usize, usize) = (parse(&row[0], "pose")?, parse(&row[1], "condition")?);
        let Some(pose) = trajectory.poses().get(p) else {
            return data_err(format!("sample pose {p} outside the trajectory"));
        };
        if p >= ranges.len() {
            let f = File::open(dir.join(&row[3]))?;
            ranges.push(read_range(BufReader::new(f))?);
        }
        conditions = conditions.max(c + 1);
        samples.push(PairedSample {
            image: load_png(&dir.join(&row[2]))?,
            range: ranges[p].clone(),
            pose: pose.clone(),
            pose_index: p,
            condition: c,
        });
    }
    if samples.is_empty() {
        return data_err("dataset has no samples");
    }
    Ok(Dataset {
        trajectory,
        samples,
        conditions,
    })
}

pub fn load_rotated(dir: &Path, condition: usize) -> Result<Vec<RotatedQuery>> {
    csv_rows(&dir.join("rotated.csv"), 2)?
        .into_iter()
        .map(|row| {
            let pose_index = parse(&row[0], "pose")?;
            parse::<f64>(&row[1], "yaw")?;
            Ok(RotatedQuery {
                pose_index,
                image: load_png(&dir.join(rotated_path(condition, pose_index)))?,
            })
        })
        .collect()
}

impl Dataset {
    pub fn condition(&self, c: usize) -> impl Iterator<Item = &PairedSample> {
        self.samples.iter().filter(move |s| s.condition == c)
    }

    /// One range projection per place, in trajectory order.
    pub fn places(&self) -> impl Iterator<Item = &PairedSample> {
        self.condition(0)
    }

    pub fn training(&self, holdout: usize) -> Vec<PairedSample> {
        self.samples.iter().filter(|s| s.condition != holdout).cloned().collect()
    }
}
