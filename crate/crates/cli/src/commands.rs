//! One function per subcommand; each is a thin wrapper over library calls.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use xdloc::descriptor::{describe, read_descriptors, write_descriptors, DescriptorParams};
use xdloc::geometry::io::write_tum;
use xdloc::geometry::{yaw_shift_equirect, EquirectImage, Pose};
use xdloc::retrieval::{
    build_index, cluster_descriptors, compute_ape, evaluate_recall, fuse_localization, query_top_k,
    simulate_odometry, top_percent_count, write_cluster_csv, DistanceMatrix, Fix, RetrievalIndex,
};
use xdloc::training::{read_loss_csv, train_descriptor, train_joint, train_transfer, write_loss_csv, LossRow, VisualSource};
use xdloc::transfer::TransferParams;
use xdloc::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;
use crate::dataset::{self, Dataset};
use crate::plot;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_transfer(path: &Path) -> Result<TransferParams> {
    TransferParams::read(open(path)?)
}

fn load_descriptor(path: &Path) -> Result<DescriptorParams> {
    DescriptorParams::read(open(path)?)
}

fn load_index(path: &Path) -> Result<RetrievalIndex> {
    RetrievalIndex::read(open(path)?)
}

fn write_losses(path: &Path, rows: &[LossRow]) -> Result<()> {
    write_loss_csv(create(path)?, rows)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Query path selected by `desc.visual`.
fn visual_source<'a>(cfg: &RunConfig, transfer: Option<&'a TransferParams>) -> Result<VisualSource<'a>> {
    match cfg.raw("desc.visual") {
        "transfer" => transfer
            .map(VisualSource::Transfer)
            .ok_or_else(|| Error::Config("desc.visual = transfer needs --transfer".into())),
        "raw" => Ok(VisualSource::RawGray),
        other => Err(Error::Config(format!("desc.visual must be transfer or raw, got '{other}'"))),
    }
}

fn holdout(cfg: &RunConfig, data: &Dataset) -> Result<Vec<xdloc::geometry::PairedSample>> {
    let train = data.training(cfg.get("holdout")?);
    if train.is_empty() {
        return Err(Error::Config("holdout leaves no training data".into()));
    }
    Ok(train)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    dataset::synthesize(cfg, out)
}

pub fn train_transfer_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let data = dataset::load(data)?;
    let mut tc = cfg.train()?;
    tc.checkpoint_dir = Some(out.to_path_buf());
    let mut model = cfg.transfer()?;
    model.n_conditions = model.n_conditions.max(data.conditions);
    let (params, log) = train_transfer(&holdout(cfg, &data)?, model, &tc)?;
    params.write(create(&out.join("transfer.ck"))?)?;
    write_losses(&out.join("loss.csv"), &log)
}

pub fn train_descriptor_cmd(cfg: &RunConfig, data: &Path, transfer: Option<&Path>, out: &Path) -> Result<()> {
    let data = dataset::load(data)?;
    let train = holdout(cfg, &data)?;
    let mut tc = cfg.train()?;
    tc.checkpoint_dir = Some(out.to_path_buf());
    let transfer = transfer.map(load_transfer).transpose()?;
    let visual = visual_source(cfg, transfer.as_ref())?;
    let init = DescriptorParams::new(cfg.descriptor()?)?;
    let (desc, mut log) = train_descriptor(&train, visual, init, &tc)?;
    let desc = match (tc.joint_steps, transfer) {
        (0, _) => desc,
        (_, None) => return Err(Error::Config("train.joint_steps > 0 needs --transfer".into())),
        (_, Some(t)) => {
            let (t, d, joint) = train_joint(&train, t, desc, &tc)?;
            t.write(create(&out.join("transfer.ck"))?)?;
            log.extend(joint);
            d
        }
    };
    desc.write(create(&out.join("descriptor.ck"))?)?;
    write_losses(&out.join("loss.csv"), &log)
}

/// Database of range-projection descriptors, one per place.
pub fn index(data: &Path, descriptor: &Path, out: &Path) -> Result<()> {
    let data = dataset::load(data)?;
    let params = load_descriptor(descriptor)?;
    let mut descs = Vec::new();
    let mut poses = Vec::new();
    for s in data.places() {
        descs.push(describe(&s.range, &params)?.values);
        poses.push(s.pose.clone());
    }
    build_index(descs, poses)?.write(create(&out.join("index.i3dds"))?)
}

/// Query images for `eval.condition` with their true poses, optionally the
/// yawed captures.
fn query_images(cfg: &RunConfig, dir: &Path, data: &Dataset) -> Result<Vec<(EquirectImage, Pose)>> {
    let c: usize = cfg.get("eval.condition")?;
    if c >= data.conditions {
        return Err(Error::Config(format!("eval.condition {c} is not in the dataset")));
    }
    let poses = data.trajectory.poses();
    if cfg.get("eval.rotated")? {
        dataset::load_rotated(dir, c)?
            .into_iter()
            .map(|q| match poses.get(q.pose_index) {
                Some(p) => Ok((q.image, p.clone())),
                None => Err(Error::Data(format!("rotated query {} outside the trajectory", q.pose_index))),
            })
            .collect()
    } else {
        Ok(data.condition(c).map(|s| (s.image.clone(), s.pose.clone())).collect())
    }
}

fn describe_queries(images: &[(EquirectImage, Pose)], visual: &VisualSource, params: &DescriptorParams) -> Result<Vec<Vec<f64>>> {
    images.iter().map(|(img, _)| Ok(visual.describe(img, params)?.values)).collect()
}

pub struct QueryArgs<'a> {
    pub data: &'a Path,
    pub index: &'a Path,
    pub descriptor: &'a Path,
    pub transfer: Option<&'a Path>,
}

pub fn eval_recall(cfg: &RunConfig, args: &QueryArgs, out: &Path) -> Result<()> {
    let data = dataset::load(args.data)?;
    let index = load_index(args.index)?;
    let params = load_descriptor(args.descriptor)?;
    let transfer = args.transfer.map(load_transfer).transpose()?;
    let visual = visual_source(cfg, transfer.as_ref())?;
    let images = query_images(cfg, args.data, &data)?;
    let truth: Vec<Pose> = images.iter().map(|(_, p)| p.clone()).collect();
    let descs = describe_queries(&images, &visual, &params)?;
    let (pct, dist): (f64, f64) = (cfg.get("eval.top_percent")?, cfg.get("eval.success_dist")?);
    let (report, matrix) = evaluate_recall(&index, &descs, &truth, pct, dist)?;
    fs::write(out.join("report.json"), report.to_json()? + "\n")?;
    matrix.write(create(&out.join("distances.i3ddm"))?)?;
    write_descriptors(create(&out.join("queries.i3dds"))?, &descs, &truth)?;

    let angles: Vec<f64> = cfg.list("eval.sweep")?;
    if !angles.is_empty() {
        let mut csv = String::from("angle_deg,recall_top1pct,recall_top1\n");
        for a in angles {
            let shifted: Vec<Vec<f64>> = images
                .iter()
                .map(|(img, _)| Ok(visual.describe(&yaw_shift_equirect(img, a), &params)?.values))
                .collect::<Result<_>>()?;
            let (r, _) = evaluate_recall(&index, &shifted, &truth, pct, dist)?;
            csv.push_str(&format!("{a},{},{}\n", r.recall_top1pct, r.recall_top1));
        }
        fs::write(out.join("rotation_recall.csv"), csv)?;
    }
    Ok(())
}

fn ape_json(mean: f64, std: f64) -> serde_json::Value {
    json!({ "mean": mean, "std": std })
}

/// Drifting odometry fused with retrieval fixes along the query sequence.
pub fn localize(cfg: &RunConfig, args: &QueryArgs, out: &Path) -> Result<()> {
    let data = dataset::load(args.data)?;
    let index = load_index(args.index)?;
    let params = load_descriptor(args.descriptor)?;
    let transfer = args.transfer.map(load_transfer).transpose()?;
    let visual = visual_source(cfg, transfer.as_ref())?;
    let images = query_images(cfg, args.data, &data)?;
    let gt = &data.trajectory;
    if images.len() != gt.len() {
        return Err(Error::Data("localization needs one query per trajectory pose".into()));
    }
    let odom = simulate_odometry(gt, cfg.get("odometry.drift")?, cfg.get("odometry.noise")?, cfg.seed()?)?;
    let gate: f64 = cfg.get("localize.gate")?;
    let every: usize = cfg.get("localize.every")?;
    let consistency: f64 = cfg.get("localize.consistency")?;
    if every == 0 || !(consistency >= 0.0) {
        return Err(Error::Config("localize.every must be positive and localize.consistency non-negative".into()));
    }
    let k = top_percent_count(index.len(), cfg.get("eval.top_percent")?);

    let mut fixes = Vec::new();
    let mut csv = String::from("frame,timestamp,candidate,distance,success,error_m\n");
    let mut correction = nalgebra::Vector3::zeros();
    for (i, (img, truth)) in images.iter().enumerate() {
        if i % every != 0 {
            continue;
        }
        let odo = &odom.poses()[i];
        let desc = visual.describe(img, &params)?.values;
        let top = query_top_k(&index, &desc, k)?;
        let predicted = odo.position + correction;
        // best-ranked candidate passing both gates; otherwise a failed fix at top-1
        let accepted = top.ids.iter().zip(&top.distances).position(|(&id, &d)| {
            let p = &index.poses()[id as usize];
            d < gate && (consistency == 0.0 || (p.position - predicted).norm() <= consistency)
        });
        let j = accepted.unwrap_or(0);
        let (id, d) = (top.ids[j], top.distances[j]);
        let pose = Pose {
            timestamp: odo.timestamp,
            ..index.poses()[id as usize].clone()
        };
        if accepted.is_some() {
            correction = pose.position - odo.position;
        }
        csv.push_str(&format!(
            "{i},{},{id},{d},{},{}\n",
            odo.timestamp,
            accepted.is_some() as u8,
            (pose.position - truth.position).norm()
        ));
        fixes.push(Fix {
            timestamp: odo.timestamp,
            pose,
            success: accepted.is_some(),
        });
    }
    let fused = fuse_localization(&odom, &fixes)?;
    let (om, os) = compute_ape(&odom, gt)?;
    let (fm, fs_) = compute_ape(&fused, gt)?;
    write_tum(create(&out.join("odometry.tum"))?, odom.poses())?;
    write_tum(create(&out.join("fused.tum"))?, fused.poses())?;
    fs::write(out.join("fixes.csv"), csv)?;
    write_json(
        &out.join("ape.json"),
        &json!({
            "odometry": ape_json(om, os),
            "fused": ape_json(fm, fs_),
            "attempts": fixes.len(),
            "accepted": fixes.iter().filter(|f| f.success).count(),
        }),
    )
}

pub fn eval_ape(estimate: &Path, gt: &Path, out: &Path) -> Result<()> {
    let (m, s) = compute_ape(&dataset::load_trajectory(estimate)?, &dataset::load_trajectory(gt)?)?;
    write_json(&out.join("ape.json"), &ape_json(m, s))
}

pub fn cluster(cfg: &RunConfig, descriptors: &Path, out: &Path) -> Result<()> {
    let (descs, _) = read_descriptors(open(descriptors)?)?;
    let c = cluster_descriptors(&descs, cfg.get("cluster.k")?, cfg.seed()?)?;
    write_cluster_csv(create(&out.join("clusters.csv"))?, &c.labels)
}

pub struct PlotArgs<'a> {
    pub distances: Option<&'a Path>,
    pub losses: &'a [std::path::PathBuf],
    pub rotation: Option<&'a Path>,
}

fn read_rotation_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let v: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            match v[..] {
                [a, b, c] => Ok((a, b, c)),
                _ => Err(Error::Data(format!("{}: expected 3 columns", path.display()))),
            }
        })
        .collect()
}

pub fn plot_cmd(args: &PlotArgs, out: &Path) -> Result<()> {
    if args.distances.is_none() && args.losses.is_empty() && args.rotation.is_none() {
        return Err(Error::Config("plot needs --distances, --loss or --rotation".into()));
    }
    if let Some(p) = args.distances {
        plot::distance_matrix(&DistanceMatrix::read(open(p)?)?, &out.join("distances.png"))?;
    }
    for (i, p) in args.losses.iter().enumerate() {
        let rows = read_loss_csv(&fs::read_to_string(p)?)?;
        plot::loss_curves(&rows, &out.join(format!("loss_{i}.png")))?;
    }
    if let Some(p) = args.rotation {
        plot::rotation_grid(&read_rotation_csv(p)?, &out.join("rotation_recall.png"))?;
    }
    Ok(())
}
