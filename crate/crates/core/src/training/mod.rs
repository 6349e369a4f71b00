//! Tuple mining and staged optimization: the transfer module first, then the
//! place descriptor on top of frozen transfer weights, then an optional joint
//! fine-tuning phase.

mod descriptor_stage;
mod joint;
mod mining;
mod transfer_stage;

use std::io::Write;
use std::path::PathBuf;

use crate::descriptor::MarginConfig;
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::transfer::{Objective, TransferLossReport};

pub use descriptor_stage::{init_codebook, train_descriptor, VisualSource};
pub use joint::train_joint;
pub use mining::{mine_tuple, verify_tuple, TrainingTuple, ROTATION_STEP_DEG};
pub use transfer_stage::train_transfer;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    /// Samples per transfer step, tuples per descriptor step.
    pub batch_size: usize,
    pub transfer_lr: f64,
    pub transfer_steps: usize,
    pub descriptor_lr: f64,
    pub descriptor_steps: usize,
    pub joint_lr: f64,
    pub joint_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub objective: Objective,
    pub margins: MarginConfig,
    pub rotations: usize,
    /// Sample rotation angles from the 30° grid; when false every rotated
    /// member is the unrotated anchor.
    pub rotate: bool,
    pub positives: usize,
    pub negatives: usize,
    /// Frames this close to the anchor are never positives.
    pub exclude_radius: f64,
    /// Also update backbone weights during descriptor training; otherwise
    /// only the head learns and backbone fields are computed once.
    pub train_backbone: bool,
    /// Initialize VLAD centers by k-means over training local features.
    pub init_codebook: bool,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 8,
            transfer_lr: 1e-3,
            transfer_steps: 1000,
            descriptor_lr: 1e-4,
            descriptor_steps: 500,
            joint_lr: 1e-5,
            joint_steps: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            objective: Objective::default(),
            margins: MarginConfig::default(),
            rotations: 2,
            rotate: true,
            positives: 2,
            negatives: 4,
            exclude_radius: 0.5,
            train_backbone: false,
            init_codebook: true,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [
            ("transfer_lr", self.transfer_lr),
            ("descriptor_lr", self.descriptor_lr),
            ("joint_lr", self.joint_lr),
        ] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return config_err(format!("{name} must be a finite non-negative number"));
            }
        }
        if self.batch_size == 0 {
            return config_err("batch_size must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return config_err("optimizer needs beta1, beta2 in [0,1) and eps > 0");
        }
        if self.rotations == 0 || self.positives == 0 || self.negatives == 0 {
            return config_err("tuples need at least one rotation, positive and negative");
        }
        if !(self.exclude_radius >= 0.0 && self.exclude_radius < self.margins.d_pos) {
            return config_err("exclude_radius must lie in [0, d_pos)");
        }
        self.margins.validate()?;
        let w = &self.objective.weights;
        let ow = [w.recon, w.gan, w.mutual, w.classifier, self.objective.lambda1, self.objective.range_weight];
        if ow.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return config_err("objective weights must be finite and non-negative");
        }
        Ok(())
    }

    fn adam(&self, lr: f64) -> Adam {
        let mut a = Adam::new(lr);
        a.beta1 = self.beta1;
        a.beta2 = self.beta2;
        a.eps = self.eps;
        a
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub recon: f64,
    pub gan_g: f64,
    pub gan_d: f64,
    pub mutual: f64,
    pub classifier: f64,
    pub view: f64,
    pub domain: f64,
    pub total: f64,
}

impl LossRow {
    fn from_transfer(step: usize, r: &TransferLossReport) -> Self {
        LossRow {
            step,
            recon: r.recon,
            gan_g: r.gan_g,
            gan_d: r.gan_d,
            mutual: r.mutual,
            classifier: r.classifier,
            view: 0.0,
            domain: 0.0,
            total: r.total,
        }
    }

    pub fn components(&self) -> [(&'static str, f64); 8] {
        [
            ("recon", self.recon),
            ("gan_g", self.gan_g),
            ("gan_d", self.gan_d),
            ("mutual", self.mutual),
            ("classifier", self.classifier),
            ("view", self.view),
            ("domain", self.domain),
            ("total", self.total),
        ]
    }

    /// Fails with a diagnostic naming the step and every component when any
    /// value is not finite.
    fn check_finite(&self) -> Result<()> {
        let c = self.components();
        if c.iter().all(|(_, v)| v.is_finite()) {
            return Ok(());
        }
        let parts: Vec<String> = c.iter().map(|(k, v)| format!("{k}={v}")).collect();
        Err(Error::Train(format!("non-finite loss at step {}: {}", self.step, parts.join(" "))))
    }
}

pub const LOSS_CSV_HEADER: &str = "step,recon,gan_g,gan_d,mutual,classifier,view,domain,total";

pub fn write_loss_csv<W: Write>(mut w: W, rows: &[LossRow]) -> Result<()> {
    writeln!(w, "{LOSS_CSV_HEADER}")?;
    for r in rows {
        let vals: Vec<String> = r.components().iter().map(|(_, v)| format!("{v:.9e}")).collect();
        writeln!(w, "{},{}", r.step, vals.join(","))?;
    }
    Ok(())
}

pub fn read_loss_csv(text: &str) -> Result<Vec<LossRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LOSS_CSV_HEADER) {
        return Err(Error::Data("loss log has an unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Data(format!("malformed loss log line {}", i + 2));
        if f.len() != 9 {
            return Err(bad());
        }
        let v: Vec<f64> = f[1..].iter().map(|s| s.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        rows.push(LossRow {
            step: f[0].trim().parse().map_err(|_| bad())?,
            recon: v[0],
            gan_g: v[1],
            gan_d: v[2],
            mutual: v[3],
            classifier: v[4],
            view: v[5],
            domain: v[6],
            total: v[7],
        });
    }
    Ok(rows)
}

fn save_checkpoint(cfg: &TrainConfig, step: usize, stage: &str, ck: &crate::checkpoint::Checkpoint) -> Result<()> {
    if cfg.checkpoint_every == 0 || (step + 1) % cfg.checkpoint_every != 0 {
        return Ok(());
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join(format!("{stage}_{:06}.ck", step + 1)))?;
        ck.write(std::io::BufWriter::new(f))?;
    }
    Ok(())
}
