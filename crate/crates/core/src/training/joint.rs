//! Optional stage three: all losses, gradients flowing from the place losses
//! back into the transfer generator.

use std::collections::HashMap;

use super::descriptor_stage::{add_report, mine_batch, tuple_keys, Domain, Key, Places, TupleKeys};
use super::{config_err, save_checkpoint, LossRow, TrainConfig};
use crate::descriptor::{loss_domain_grad, loss_view_grad, DescriptorParams, MarginConfig, Tuple};
use crate::error::Result;
use crate::geometry::{yaw_shift_equirect, PairedSample, RangeImage};
use crate::transfer::net::rng_for;
use crate::transfer::{discriminator_pass, generator_pass, TransferGrads, TransferLossReport, TransferParams};

fn key_input(key: Key, data: &[PairedSample], transfer: &TransferParams) -> Result<RangeImage> {
    let s = &data[key.sample];
    let angle = key.angle_deg as f64;
    Ok(match key.domain {
        Domain::Lidar => yaw_shift_equirect(&s.range, angle),
        Domain::Visual => transfer.forward_tape(&yaw_shift_equirect(&s.image, angle))?.0.y_hat,
    })
}

/// Place losses of one tuple given descriptors by key; accumulates gradients
/// into `grads`. Returns `(view, domain)`.
fn tuple_loss(
    tk: &TupleKeys,
    descs: &HashMap<Key, Vec<f64>>,
    grads: &mut HashMap<Key, Vec<f64>>,
    margins: &MarginConfig,
) -> Result<(f64, f64)> {
    let gather = |keys: &[Key]| -> Vec<Vec<f64>> { keys.iter().map(|k| descs[k].clone()).collect() };
    let mut scatter = |keys: &[Key], gs: &[Vec<f64>]| {
        for (k, g) in keys.iter().zip(gs) {
            let slot = grads.entry(*k).or_insert_with(|| vec![0.0; g.len()]);
            slot.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
    };
    let mut view = 0.0;
    for parts in [&tk.visual, &tk.lidar] {
        let d: Vec<Vec<Vec<f64>>> = parts.iter().map(|p| gather(p)).collect();
        let t = Tuple {
            anchor: &d[0][0],
            rotations: &d[1],
            positives: &d[2],
            negatives: &d[3],
        };
        let (v, g) = loss_view_grad(&t, margins)?;
        view += v;
        scatter(&parts[0], std::slice::from_ref(&g.anchor));
        scatter(&parts[1], &g.rotations);
        scatter(&parts[2], &g.positives);
        scatter(&parts[3], &g.negatives);
    }
    let (a, r, p, n) = (gather(&tk.visual[0]), gather(&tk.visual[1]), gather(&tk.lidar[2]), gather(&tk.lidar[3]));
    let t = Tuple {
        anchor: &a[0],
        rotations: &r,
        positives: &p,
        negatives: &n,
    };
    let (dom, g) = loss_domain_grad(&t, margins)?;
    scatter(&tk.visual[0], std::slice::from_ref(&g.anchor));
    scatter(&tk.visual[1], &g.rotations);
    scatter(&tk.lidar[2], &g.positives);
    scatter(&tk.lidar[3], &g.negatives);
    Ok((view, dom))
}

/// Fine-tunes both modules on the full objective with `joint_lr`.
pub fn train_joint(
    data: &[PairedSample],
    mut transfer: TransferParams,
    mut desc: DescriptorParams,
    cfg: &TrainConfig,
) -> Result<(TransferParams, DescriptorParams, Vec<LossRow>)> {
    cfg.validate()?;
    if cfg.joint_steps == 0 {
        return config_err("joint_steps must be positive");
    }
    let places = Places::new(data)?;
    let mut gen_opt = cfg.adam(cfg.joint_lr);
    let mut disc_opt = cfg.adam(cfg.joint_lr);
    let mut desc_opt = cfg.adam(cfg.joint_lr);
    let mut rng = rng_for(cfg.seed, 404);
    let bs = cfg.batch_size as f64;
    let mut log = Vec::with_capacity(cfg.joint_steps);

    for step in 0..cfg.joint_steps {
        transfer.zero_grad();
        desc.zero_grad();
        let tuples = mine_batch(&places, cfg, &mut rng)?;
        let keys: Vec<TupleKeys> = tuples.iter().map(|t| tuple_keys(t, &places, &mut rng)).collect();

        let mut rep = TransferLossReport::default();
        let mut fakes = Vec::with_capacity(keys.len());
        for tk in &keys {
            let s = &data[tk.visual[0][0].sample];
            let (r, y_hat) = generator_pass(&mut transfer, &s.image, &s.range, s.condition, &cfg.objective)?;
            add_report(&mut rep, &r, 1.0 / bs);
            fakes.push((tk.visual[0][0].sample, y_hat));
        }

        // first pass: descriptors only, tapes dropped to bound memory
        let mut order = Vec::new();
        let mut descs = HashMap::new();
        for key in keys.iter().flat_map(|tk| tk.visual.iter().chain(&tk.lidar).flatten()) {
            if !descs.contains_key(key) {
                let d = crate::descriptor::describe(&key_input(*key, data, &transfer)?, &desc)?;
                descs.insert(*key, d.values);
                order.push(*key);
            }
        }
        let mut grads = HashMap::new();
        let mut row = LossRow::from_transfer(step, &rep);
        for tk in &keys {
            let (v, d) = tuple_loss(tk, &descs, &mut grads, &cfg.margins)?;
            row.view += v / bs;
            row.domain += d / bs;
        }
        row.total += row.view + row.domain;
        row.check_finite()?;

        // second pass: recompute with tapes where a gradient arrived
        for key in &order {
            let Some(g) = grads.get(key).filter(|g| g.iter().any(|v| *v != 0.0)) else {
                continue;
            };
            let s = &data[key.sample];
            let angle = key.angle_deg as f64;
            match key.domain {
                Domain::Lidar => {
                    let (_, ht, bt) = desc.forward_tape(&yaw_shift_equirect(&s.range, angle))?;
                    desc.backward(&ht, &bt, g);
                }
                Domain::Visual => {
                    let (out, tt) = transfer.forward_tape(&yaw_shift_equirect(&s.image, angle))?;
                    let (_, ht, bt) = desc.forward_tape(&out.y_hat)?;
                    let g_y = desc.backward(&ht, &bt, g);
                    let tg = TransferGrads {
                        y_hat: g_y,
                        ..Default::default()
                    };
                    transfer.backward(&tt, &tg);
                }
            }
        }
        desc.flush_grads();
        gen_opt.step(&mut transfer.generator_params_mut(), 1.0 / bs);
        if cfg.train_backbone {
            desc_opt.step(&mut desc.params_mut(), 1.0 / bs);
        } else {
            desc_opt.step(&mut desc.head_params_mut(), 1.0 / bs);
        }
        for p in transfer.discriminator_params_mut() {
            p.zero_grad();
        }
        for (sample, fake) in &fakes {
            discriminator_pass(&mut transfer, &data[*sample].range, fake)?;
        }
        disc_opt.step(&mut transfer.discriminator_params_mut(), 1.0 / bs);
        log.push(row);
        save_checkpoint(cfg, step, "joint_transfer", &transfer.to_checkpoint())?;
        save_checkpoint(cfg, step, "joint_descriptor", &desc.to_checkpoint())?;
    }
    Ok((transfer, desc, log))
}
