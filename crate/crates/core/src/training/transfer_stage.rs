//! Stage one: alternating generator / discriminator updates of the transfer
//! module on paired samples.

use rand::Rng;

use super::{config_err, save_checkpoint, LossRow, TrainConfig};
use crate::error::{data_err, Result};
use crate::geometry::PairedSample;
use crate::transfer::net::rng_for;
use crate::transfer::{discriminator_pass, generator_pass, TransferConfig, TransferLossReport, TransferParams};

pub fn train_transfer(data: &[PairedSample], config: TransferConfig, cfg: &TrainConfig) -> Result<(TransferParams, Vec<LossRow>)> {
    cfg.validate()?;
    if data.is_empty() {
        return data_err("empty paired dataset");
    }
    if cfg.transfer_steps == 0 {
        return config_err("transfer_steps must be positive");
    }
    if let Some(s) = data.iter().find(|s| s.condition >= config.n_conditions) {
        return data_err(format!("condition label {} outside [0, {})", s.condition, config.n_conditions));
    }
    let mut params = TransferParams::new(config)?;
    let mut gen_opt = cfg.adam(cfg.transfer_lr);
    let mut disc_opt = cfg.adam(cfg.transfer_lr);
    let mut rng = rng_for(cfg.seed, 101);
    let bs = cfg.batch_size;
    let scale = 1.0 / bs as f64;
    let mut log = Vec::with_capacity(cfg.transfer_steps);

    for step in 0..cfg.transfer_steps {
        params.zero_grad();
        let batch: Vec<&PairedSample> = (0..bs).map(|_| &data[rng.random_range(0..data.len())]).collect();
        let mut sum = TransferLossReport::default();
        let mut fakes = Vec::with_capacity(bs);
        for s in &batch {
            let (r, y_hat) = generator_pass(&mut params, &s.image, &s.range, s.condition, &cfg.objective)?;
            sum.recon += r.recon * scale;
            sum.gan_g += r.gan_g * scale;
            sum.gan_d += r.gan_d * scale;
            sum.mutual += r.mutual * scale;
            sum.classifier += r.classifier * scale;
            sum.total += r.total * scale;
            fakes.push(y_hat);
        }
        let row = LossRow::from_transfer(step, &sum);
        row.check_finite()?;
        gen_opt.step(&mut params.generator_params_mut(), scale);

        for p in params.discriminator_params_mut() {
            p.zero_grad();
        }
        for (s, fake) in batch.iter().zip(&fakes) {
            discriminator_pass(&mut params, &s.range, fake)?;
        }
        disc_opt.step(&mut params.discriminator_params_mut(), scale);
        log.push(row);
        save_checkpoint(cfg, step, "transfer", &params.to_checkpoint())?;
    }
    Ok((params, log))
}
