//! Plain-text `key = value` run configuration.
//!
//! Every tunable has a documented default in [`KEYS`]; files and `--set`
//! overrides may only name known keys. The resolved table is written as
//! `config.txt` next to each command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use xdloc::descriptor::{BackboneConfig, DescriptorConfig, MarginConfig};
use xdloc::geometry::{ConditionSpec, WorldConfig};
use xdloc::training::TrainConfig;
use xdloc::transfer::{Objective, TransferConfig, TransferWeights};
use xdloc::{Error, Result};

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "7", "master seed for world, conditions, initialization, training and odometry"),
    ("world.extent", "485", "side of the square world, meters"),
    ("world.primitives", "600", "number of boxes and cylinders"),
    ("world.poses", "500", "keyframes along the loop trajectory"),
    ("world.max_step", "2.5", "largest allowed keyframe spacing, meters"),
    ("image.height", "64", "equirectangular rows"),
    ("image.width", "64", "equirectangular columns"),
    ("image.r_max", "30", "range clipping distance, meters"),
    ("conditions", "4", "number of appearance presets used (1-6)"),
    ("holdout", "3", "condition withheld from training; >= conditions disables"),
    ("transfer.widths", "8,16,32,64", "encoder/decoder channel widths"),
    ("transfer.zc_dim", "32", "condition code length"),
    ("loss.recon", "1", "reconstruction weight"),
    ("loss.gan", "1", "adversarial weight"),
    ("loss.mutual", "1", "mutual (geometry/condition) hinge weight"),
    ("loss.classifier", "0.1", "condition classifier weight"),
    ("loss.range_weight", "10", "paired range L1 weight inside reconstruction"),
    ("loss.lambda1", "0.5", "mutual hinge margin"),
    ("loss.lambda2", "0.5", "view loss anchor margin"),
    ("loss.lambda3", "1.0", "view loss rotation margin"),
    ("loss.lambda4", "0.5", "domain loss anchor margin"),
    ("loss.lambda5", "1.0", "domain loss rotation margin"),
    ("loss.d_pos", "5", "positive radius, meters"),
    ("loss.d_neg", "20", "negative radius, meters"),
    ("train.batch_size", "8", "tuples or pairs per step"),
    ("train.transfer_lr", "1e-3", "transfer stage learning rate"),
    ("train.transfer_steps", "1000", "transfer stage steps"),
    ("train.descriptor_lr", "1e-4", "descriptor stage learning rate"),
    ("train.descriptor_steps", "500", "descriptor stage steps"),
    ("train.joint_lr", "1e-5", "joint fine-tuning learning rate"),
    ("train.joint_steps", "0", "joint fine-tuning steps (needs a transfer module)"),
    ("train.beta1", "0.9", "Adam first moment decay"),
    ("train.beta2", "0.999", "Adam second moment decay"),
    ("train.eps", "1e-8", "Adam epsilon"),
    ("train.backbone", "false", "also train the spherical backbone"),
    ("train.init_codebook", "true", "k-means initialization of the aggregation codebook"),
    ("train.checkpoint_every", "0", "checkpoint period in steps; 0 disables"),
    ("mining.rotations", "2", "rotated copies of the anchor per tuple"),
    ("mining.rotate", "true", "rotate the anchor copies by random multiples of 30 degrees"),
    ("mining.positives", "2", "positives per tuple"),
    ("mining.negatives", "4", "negatives per tuple"),
    ("mining.exclude_radius", "0.5", "positives must lie farther than this, meters"),
    ("desc.input_b", "32", "backbone input bandwidth (image side = 2B)"),
    ("desc.internal_b", "16", "backbone internal bandwidth"),
    ("desc.channels", "8,8,16", "backbone channels"),
    ("desc.local_dim", "32", "local feature width"),
    ("desc.clusters", "16", "aggregation clusters"),
    ("desc.out_dim", "256", "descriptor length"),
    ("desc.visual", "transfer", "query path: transfer (image to range) or raw (gray image)"),
    ("eval.condition", "3", "condition whose images are the queries"),
    ("eval.rotated", "false", "query with the randomly yawed captures"),
    ("eval.top_percent", "1", "candidate list size, percent of the database"),
    ("eval.success_dist", "10", "retrieval success radius, meters"),
    ("eval.sweep", "", "yaw angles (degrees) for a recall-vs-rotation sweep"),
    ("odometry.drift", "0.01", "odometry scale drift"),
    ("odometry.noise", "0.02", "per-step lateral heading noise, meters"),
    ("localize.gate", "0.8", "largest descriptor distance accepted as a fix"),
    ("localize.every", "1", "attempt a fix every this many frames"),
    ("localize.consistency", "0", "largest jump from the odometry prediction, meters; 0 disables"),
    ("cluster.k", "10", "k-means clusters"),
];

/// Appearance presets `(brightness, hue shift, noise sigma, fog density, seed)`.
const PRESETS: [(f64, f64, f64, f64, u64); 6] = [
    (1.0, 0.0, 0.01, 0.0, 11),
    (0.65, 25.0, 0.02, 0.0, 12),
    (1.15, -20.0, 0.01, 0.25, 13),
    (0.55, 40.0, 0.03, 0.15, 14),
    (0.8, -35.0, 0.02, 0.35, 15),
    (1.3, 60.0, 0.015, 0.05, 16),
];

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the file, then `--set` overrides, then `--seed`.
    pub fn load(file: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.merge_text(&text)?;
        }
        for s in sets {
            let Some((k, v)) = s.split_once('=') else {
                return config_err(format!("--set expects KEY=VALUE, got '{s}'"));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = seed {
            cfg.set("seed", &seed.to_string())?;
        }
        Ok(cfg)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return config_err(format!("line {}: expected 'key = value'", n + 1));
            };
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => config_err(format!("unknown config key '{key}'")),
        }
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared config key {key}"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse().map_err(|_| Error::Config(format!("bad value for {key}: '{v}'")))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.raw(key);
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad list for {key}: '{v}'"))))
            .collect()
    }

    fn array<const N: usize>(&self, key: &str) -> Result<[usize; N]> {
        let v: Vec<usize> = self.list(key)?;
        v.try_into().map_err(|_| Error::Config(format!("{key} needs exactly {N} values")))
    }

    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join("config.txt"), self.to_text())?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn world(&self) -> Result<WorldConfig> {
        let mut w = WorldConfig::new(self.seed()?, self.get("world.extent")?, self.get("world.primitives")?);
        w.n_poses = Some(self.get("world.poses")?);
        w.max_step = self.get("world.max_step")?;
        Ok(w)
    }

    pub fn conditions(&self) -> Result<Vec<ConditionSpec>> {
        let n: usize = self.get("conditions")?;
        if n == 0 || n > PRESETS.len() {
            return config_err(format!("conditions must be in 1..={}", PRESETS.len()));
        }
        let seed = self.seed()?;
        Ok(PRESETS[..n]
            .iter()
            .enumerate()
            .map(|(label, &(brightness, hue_shift, noise_sigma, fog_density, s))| ConditionSpec {
                label,
                brightness,
                hue_shift,
                noise_sigma,
                fog_density,
                seed: s.wrapping_add(seed.wrapping_mul(100)),
            })
            .collect())
    }

    pub fn transfer(&self) -> Result<TransferConfig> {
        Ok(TransferConfig {
            height: self.get("image.height")?,
            width: self.get("image.width")?,
            n_conditions: self.get("conditions")?,
            widths: self.array("transfer.widths")?,
            zc_dim: self.get("transfer.zc_dim")?,
            seed: self.seed()?,
        })
    }

    pub fn descriptor(&self) -> Result<DescriptorConfig> {
        Ok(DescriptorConfig {
            backbone: BackboneConfig {
                input_b: self.get("desc.input_b")?,
                internal_b: self.get("desc.internal_b")?,
                channels: self.array("desc.channels")?,
            },
            local_dim: self.get("desc.local_dim")?,
            clusters: self.get("desc.clusters")?,
            out_dim: self.get("desc.out_dim")?,
            seed: self.seed()?,
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let lambda1 = self.get("loss.lambda1")?;
        let cfg = TrainConfig {
            seed: self.seed()?,
            batch_size: self.get("train.batch_size")?,
            transfer_lr: self.get("train.transfer_lr")?,
            transfer_steps: self.get("train.transfer_steps")?,
            descriptor_lr: self.get("train.descriptor_lr")?,
            descriptor_steps: self.get("train.descriptor_steps")?,
            joint_lr: self.get("train.joint_lr")?,
            joint_steps: self.get("train.joint_steps")?,
            beta1: self.get("train.beta1")?,
            beta2: self.get("train.beta2")?,
            eps: self.get("train.eps")?,
            objective: Objective {
                weights: TransferWeights {
                    recon: self.get("loss.recon")?,
                    gan: self.get("loss.gan")?,
                    mutual: self.get("loss.mutual")?,
                    classifier: self.get("loss.classifier")?,
                },
                lambda1,
                range_weight: self.get("loss.range_weight")?,
            },
            margins: MarginConfig {
                lambda1,
                lambda2: self.get("loss.lambda2")?,
                lambda3: self.get("loss.lambda3")?,
                lambda4: self.get("loss.lambda4")?,
                lambda5: self.get("loss.lambda5")?,
                d_pos: self.get("loss.d_pos")?,
                d_neg: self.get("loss.d_neg")?,
            },
            rotations: self.get("mining.rotations")?,
            rotate: self.get("mining.rotate")?,
            positives: self.get("mining.positives")?,
            negatives: self.get("mining.negatives")?,
            exclude_radius: self.get("mining.exclude_radius")?,
            train_backbone: self.get("train.backbone")?,
            init_codebook: self.get("train.init_codebook")?,
            checkpoint_every: self.get("train.checkpoint_every")?,
            checkpoint_dir: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Markdown-ish key reference for `--help` output.
pub fn key_help() -> String {
    let mut s = String::from("Configuration keys (KEY = DEFAULT: meaning):\n");
    for (k, v, d) in KEYS {
        s.push_str(&format!("  {k} = {v}: {d}\n"));
    }
    s
}
