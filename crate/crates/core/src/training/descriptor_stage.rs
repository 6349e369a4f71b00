//! Stage two: place descriptor learning on frozen transfer weights.

use std::collections::{BTreeMap, HashMap};

use rand::seq::IndexedRandom;
use rand::Rng;

use super::mining::{mine_tuple, verify_tuple, TrainingTuple};
use super::{config_err, save_checkpoint, LossRow, TrainConfig};
use crate::descriptor::{
    loss_domain_grad, loss_view_grad, BackboneField, DescriptorParams, HeadTape, MarginConfig, PlaceDescriptor, Tuple,
};
use crate::error::{data_err, Error, Result};
use crate::geometry::{yaw_shift_equirect, EquirectImage, PairedSample, Panorama, Pose, RangeImage};
use crate::retrieval::cluster_descriptors;
use crate::transfer::net::rng_for;
use crate::transfer::{evaluate_objective, transfer_forward, Mode, TransferLossReport, TransferParams};

/// How the visual branch turns an image into the descriptor's input.
#[derive(Clone, Copy, Debug)]
pub enum VisualSource<'a> {
    /// Synthetic range image `ŷ` from the transfer module.
    Transfer(&'a TransferParams),
    /// Grayscale image fed directly, bypassing the transfer module.
    RawGray,
}

impl VisualSource<'_> {
    pub fn range_like(&self, x: &EquirectImage) -> Result<RangeImage> {
        match self {
            VisualSource::Transfer(p) => Ok(transfer_forward(x, p, Mode::Eval)?.y_hat),
            VisualSource::RawGray => {
                let g = x.to_gray().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
                RangeImage::new(x.height(), x.width(), g)
            }
        }
    }

    /// Descriptor of an image through this visual branch.
    pub fn describe(&self, x: &EquirectImage, params: &DescriptorParams) -> Result<PlaceDescriptor> {
        crate::descriptor::describe(&self.range_like(x)?, params)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(super) enum Domain {
    Visual,
    Lidar,
}

/// One descriptor evaluation: a sample seen through a domain at a yaw angle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(super) struct Key {
    pub domain: Domain,
    pub sample: usize,
    pub angle_deg: u32,
}

/// Places of a paired dataset: unique poses and the samples rendered there.
pub(super) struct Places {
    pub poses: Vec<Pose>,
    pub samples: Vec<Vec<usize>>,
}

impl Places {
    pub fn new(data: &[PairedSample]) -> Result<Self> {
        if data.is_empty() {
            return data_err("empty paired dataset");
        }
        let mut by_pose: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, s) in data.iter().enumerate() {
            by_pose.entry(s.pose_index).or_default().push(i);
        }
        let poses = by_pose.values().map(|v| data[v[0]].pose.clone()).collect();
        Ok(Places {
            poses,
            samples: by_pose.into_values().collect(),
        })
    }
}

/// Tuple members resolved to descriptor evaluations in both domains.
pub(super) struct TupleKeys {
    pub visual: [Vec<Key>; 4],
    pub lidar: [Vec<Key>; 4],
}

pub(super) fn tuple_keys(t: &TrainingTuple, places: &Places, rng: &mut impl Rng) -> TupleKeys {
    let mut pick = |place: usize| *places.samples[place].choose(rng).expect("places are non-empty");
    let anchor_sample = pick(t.anchor);
    let vis = |sample: usize, angle: f64| Key {
        domain: Domain::Visual,
        sample,
        angle_deg: angle as u32,
    };
    let lid = |place: usize, angle: f64| Key {
        domain: Domain::Lidar,
        sample: places.samples[place][0],
        angle_deg: angle as u32,
    };
    let pos: Vec<usize> = t.positives.iter().map(|&p| pick(p)).collect();
    let neg: Vec<usize> = t.negatives.iter().map(|&p| pick(p)).collect();
    TupleKeys {
        visual: [
            vec![vis(anchor_sample, 0.0)],
            t.rotated.iter().map(|&(_, a)| vis(anchor_sample, a)).collect(),
            pos.iter().map(|&s| vis(s, 0.0)).collect(),
            neg.iter().map(|&s| vis(s, 0.0)).collect(),
        ],
        lidar: [
            vec![lid(t.anchor, 0.0)],
            t.rotated.iter().map(|&(_, a)| lid(t.anchor, a)).collect(),
            t.positives.iter().map(|&p| lid(p, 0.0)).collect(),
            t.negatives.iter().map(|&p| lid(p, 0.0)).collect(),
        ],
    }
}

/// Descriptor inputs with memoized visual conversions and backbone fields.
pub(super) struct InputCache<'a> {
    pub data: &'a [PairedSample],
    pub visual: VisualSource<'a>,
    range_like: HashMap<usize, RangeImage>,
    fields: HashMap<Key, BackboneField>,
    pub cache_fields: bool,
}

impl<'a> InputCache<'a> {
    pub fn new(data: &'a [PairedSample], visual: VisualSource<'a>, cache_fields: bool) -> Self {
        InputCache {
            data,
            visual,
            range_like: HashMap::new(),
            fields: HashMap::new(),
            cache_fields,
        }
    }

    pub fn input(&mut self, key: Key) -> Result<RangeImage> {
        let base = match key.domain {
            Domain::Lidar => self.data[key.sample].range.clone(),
            Domain::Visual => match self.range_like.get(&key.sample) {
                Some(y) => y.clone(),
                None => {
                    let y = self.visual.range_like(&self.data[key.sample].image)?;
                    self.range_like.insert(key.sample, y.clone());
                    y
                }
            },
        };
        Ok(if key.angle_deg == 0 {
            base
        } else {
            yaw_shift_equirect(&base, key.angle_deg as f64)
        })
    }

    pub fn field(&mut self, key: Key, params: &DescriptorParams) -> Result<BackboneField> {
        let cacheable = self.cache_fields && key.angle_deg == 0;
        if cacheable {
            if let Some(f) = self.fields.get(&key) {
                return Ok(f.clone());
            }
        }
        let input = params.canonical_input(&self.input(key)?)?;
        let (field, _) = params.backbone_field(&input)?;
        if cacheable {
            self.fields.insert(key, field.clone());
        }
        Ok(field)
    }
}

/// Sets VLAD centers to k-means centers of local features drawn from
/// `fields`, and the assignment sharpness so that a feature's nearest center
/// outweighs the second nearest about a hundredfold on average.
pub fn init_codebook(params: &mut DescriptorParams, fields: &[BackboneField], seed: u64) -> Result<()> {
    const MAX_POINTS: usize = 8192;
    let k = params.config.clusters;
    let mut points = Vec::new();
    for f in fields {
        let local = params.local_features(f);
        points.extend((0..local.cells()).map(|i| local.cell(i).to_vec()));
    }
    if points.len() < k {
        return data_err("too few local features to initialize the codebook");
    }
    let mut rng = rng_for(seed, 303);
    if points.len() > MAX_POINTS {
        points = points.choose_multiple(&mut rng, MAX_POINTS).cloned().collect();
    }
    let clusters = cluster_descriptors(&points, k, seed)?;
    let d = params.config.local_dim;
    for (c, center) in clusters.centers.iter().enumerate() {
        params.codebook.centers.value[c * d..(c + 1) * d].copy_from_slice(center);
    }
    params.codebook.centers.round_to_f32();
    let mut gap = 0.0;
    for p in &points {
        let mut sq: Vec<f64> = clusters.centers.iter().map(|c| p.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()).collect();
        sq.sort_by(f64::total_cmp);
        gap += sq.get(1).unwrap_or(&sq[0]) - sq[0];
    }
    gap /= points.len() as f64;
    let alpha = if gap > 1e-12 { 100f64.ln() / gap } else { 1.0 };
    params.codebook.reset_assignment(alpha);
    Ok(())
}

pub(super) fn mine_batch(places: &Places, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Vec<TrainingTuple>> {
    let n = places.poses.len();
    let mut out = Vec::with_capacity(cfg.batch_size);
    let mut attempts = 0;
    while out.len() < cfg.batch_size {
        attempts += 1;
        if attempts > 100 * cfg.batch_size {
            return Err(Error::Train("no anchor admits a tuple under the distance thresholds".into()));
        }
        let anchor = rng.random_range(0..n);
        if let Ok(t) = mine_tuple(&places.poses, anchor, cfg, rng.random()) {
            verify_tuple(&places.poses, &t, cfg)?;
            out.push(t);
        }
    }
    Ok(out)
}

/// Descriptors and tapes for a set of keys, with gradient slots.
pub(super) struct Evaluated {
    pub index: HashMap<Key, usize>,
    pub keys: Vec<Key>,
    pub descs: Vec<Vec<f64>>,
    pub tapes: Vec<HeadTape>,
    pub grads: Vec<Vec<f64>>,
}

impl Evaluated {
    pub fn new(batch: &[TupleKeys], params: &DescriptorParams, cache: &mut InputCache) -> Result<Self> {
        let mut ev = Evaluated {
            index: HashMap::new(),
            keys: Vec::new(),
            descs: Vec::new(),
            tapes: Vec::new(),
            grads: Vec::new(),
        };
        for tk in batch {
            for key in tk.visual.iter().chain(&tk.lidar).flatten() {
                if ev.index.contains_key(key) {
                    continue;
                }
                let field = cache.field(*key, params)?;
                let (desc, tape) = params.head_forward(&field)?;
                ev.index.insert(*key, ev.keys.len());
                ev.grads.push(vec![0.0; desc.values.len()]);
                ev.keys.push(*key);
                ev.descs.push(desc.values);
                ev.tapes.push(tape);
            }
        }
        Ok(ev)
    }

    fn gather(&self, keys: &[Key]) -> Vec<Vec<f64>> {
        keys.iter().map(|k| self.descs[self.index[k]].clone()).collect()
    }

    fn scatter(&mut self, keys: &[Key], grads: &[Vec<f64>]) {
        for (k, g) in keys.iter().zip(grads) {
            let slot = &mut self.grads[self.index[k]];
            slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    }

    /// View losses in both domains and the image-to-range domain loss of one
    /// tuple; accumulates descriptor gradients. Returns `(view, domain)`.
    pub fn tuple_loss(&mut self, tk: &TupleKeys, margins: &MarginConfig) -> Result<(f64, f64)> {
        let mut view = 0.0;
        for parts in [&tk.visual, &tk.lidar] {
            let d: Vec<Vec<Vec<f64>>> = parts.iter().map(|p| self.gather(p)).collect();
            let t = Tuple {
                anchor: &d[0][0],
                rotations: &d[1],
                positives: &d[2],
                negatives: &d[3],
            };
            let (v, g) = loss_view_grad(&t, margins)?;
            view += v;
            self.scatter(&parts[0], std::slice::from_ref(&g.anchor));
            self.scatter(&parts[1], &g.rotations);
            self.scatter(&parts[2], &g.positives);
            self.scatter(&parts[3], &g.negatives);
        }
        let a = self.gather(&tk.visual[0]);
        let r = self.gather(&tk.visual[1]);
        let p = self.gather(&tk.lidar[2]);
        let n = self.gather(&tk.lidar[3]);
        let t = Tuple {
            anchor: &a[0],
            rotations: &r,
            positives: &p,
            negatives: &n,
        };
        let (dom, g) = loss_domain_grad(&t, margins)?;
        self.scatter(&tk.visual[0], std::slice::from_ref(&g.anchor));
        self.scatter(&tk.visual[1], &g.rotations);
        self.scatter(&tk.lidar[2], &g.positives);
        self.scatter(&tk.lidar[3], &g.negatives);
        Ok((view, dom))
    }
}

pub(super) fn add_report(acc: &mut TransferLossReport, r: &TransferLossReport, scale: f64) {
    acc.recon += r.recon * scale;
    acc.gan_g += r.gan_g * scale;
    acc.gan_d += r.gan_d * scale;
    acc.mutual += r.mutual * scale;
    acc.classifier += r.classifier * scale;
    acc.total += r.total * scale;
}

/// Trains `params` on tuples mined from `data` with the visual branch given
/// by `visual`. The transfer module is never modified; its objective on the
/// tuple anchors is logged alongside the place losses.
pub fn train_descriptor(
    data: &[PairedSample],
    visual: VisualSource,
    mut params: DescriptorParams,
    cfg: &TrainConfig,
) -> Result<(DescriptorParams, Vec<LossRow>)> {
    cfg.validate()?;
    if cfg.descriptor_steps == 0 {
        return config_err("descriptor_steps must be positive");
    }
    let places = Places::new(data)?;
    let before = match visual {
        VisualSource::Transfer(t) => Some(t.checksum()),
        VisualSource::RawGray => None,
    };
    let mut cache = InputCache::new(data, visual, !cfg.train_backbone);
    let mut rng = rng_for(cfg.seed, 202);

    if cfg.init_codebook {
        let mut fields = Vec::new();
        let n = places.poses.len();
        for place in rand::seq::index::sample(&mut rng, n, n.min(32)) {
            for domain in [Domain::Visual, Domain::Lidar] {
                let sample = places.samples[place][0];
                fields.push(cache.field(Key { domain, sample, angle_deg: 0 }, &params)?);
            }
        }
        init_codebook(&mut params, &fields, cfg.seed)?;
    }

    let mut opt = cfg.adam(cfg.descriptor_lr);
    let bs = cfg.batch_size as f64;
    let mut log = Vec::with_capacity(cfg.descriptor_steps);
    for step in 0..cfg.descriptor_steps {
        params.zero_grad();
        let tuples = mine_batch(&places, cfg, &mut rng)?;
        let keys: Vec<TupleKeys> = tuples.iter().map(|t| tuple_keys(t, &places, &mut rng)).collect();
        let mut ev = Evaluated::new(&keys, &params, &mut cache)?;
        let mut row = LossRow {
            step,
            ..Default::default()
        };
        for tk in &keys {
            let (v, d) = ev.tuple_loss(tk, &cfg.margins)?;
            row.view += v / bs;
            row.domain += d / bs;
        }
        if let VisualSource::Transfer(t) = visual {
            let mut rep = TransferLossReport::default();
            for tk in &keys {
                let s = &data[tk.visual[0][0].sample];
                add_report(&mut rep, &evaluate_objective(t, &s.image, &s.range, s.condition, &cfg.objective)?, 1.0 / bs);
            }
            row = LossRow {
                view: row.view,
                domain: row.domain,
                ..LossRow::from_transfer(step, &rep)
            };
        }
        row.total += row.view + row.domain;
        row.check_finite()?;

        for i in 0..ev.keys.len() {
            if ev.grads[i].iter().all(|g| *g == 0.0) {
                continue;
            }
            let g_pooled = params.head_backward(&ev.tapes[i], &ev.grads[i]);
            if cfg.train_backbone {
                let input = params.canonical_input(&cache.input(ev.keys[i])?)?;
                let (_, bt) = params.backbone_field(&input)?;
                params.backbone.backward(&bt, &g_pooled);
            }
        }
        params.flush_grads();
        if cfg.train_backbone {
            opt.step(&mut params.params_mut(), 1.0 / bs);
        } else {
            opt.step(&mut params.head_params_mut(), 1.0 / bs);
        }
        log.push(row);
        save_checkpoint(cfg, step, "descriptor", &params.to_checkpoint())?;
    }
    if let (Some(b), VisualSource::Transfer(t)) = (before, visual) {
        if t.checksum() != b {
            return Err(Error::Train("transfer parameters changed during descriptor training".into()));
        }
    }
    Ok((params, log))
}
