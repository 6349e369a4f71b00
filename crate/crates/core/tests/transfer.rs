use xdloc::geometry::*;
use xdloc::nn::Param;
use xdloc::transfer::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(seed: u64) -> TransferConfig {
    TransferConfig {
        height: 16,
        width: 16,
        n_conditions: 3,
        widths: [3, 4, 5, 6],
        zc_dim: 5,
        seed,
    }
}

fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize) -> EquirectImage {
    EquirectImage::new(h, w, (0..h * w * 3).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn random_range(rng: &mut ChaCha8Rng, h: usize, w: usize) -> RangeImage {
    RangeImage::new(h, w, (0..h * w).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn recon_examples_and_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_vec(&mut rng, 50, 1.0);
    assert_eq!(loss_recon(&x, &x).unwrap(), 0.0);
    let shifted: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
    assert!((loss_recon(&x, &shifted).unwrap() - 0.1).abs() < 1e-12);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let a = rand_vec(&mut rng, n, 1.0);
        let b = rand_vec(&mut rng, n, 1.0);
        let mut acc = 0.0;
        for i in 0..n {
            acc += if a[i] > b[i] { a[i] - b[i] } else { b[i] - a[i] };
        }
        let got = loss_recon(&a, &b).unwrap();
        assert!((got - acc / n as f64).abs() < 1e-9);
        assert_eq!(got, loss_recon(&b, &a).unwrap());
    }
    assert!(loss_recon(&[0.0; 3], &[0.0; 4]).is_err());
}

#[test]
fn gan_examples_and_oracle() {
    let (d, _) = loss_gan(&[0.5], &[0.5]).unwrap();
    assert!((d - 1.3863).abs() < 1e-4);
    let mut prev = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
        let (d, _) = loss_gan(&[1.0 - eps], &[eps]).unwrap();
        assert!(d < prev && d < 3.0 * eps);
        prev = d;
    }
    let (d, g) = loss_gan(&[1.0], &[0.0]).unwrap();
    assert!(d.is_finite() && g.is_finite());
    assert!(loss_gan(&[], &[0.5]).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let real: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0.01..0.99)).collect();
        let fake: Vec<f64> = (0..rng.random_range(1..8)).map(|_| rng.random_range(0.01..0.99)).collect();
        let mr = real.iter().map(|s: &f64| s.ln()).sum::<f64>() / real.len() as f64;
        let mf = fake.iter().map(|s: &f64| (1.0 - s).ln()).sum::<f64>() / fake.len() as f64;
        let mg = fake.iter().map(|s: &f64| s.ln()).sum::<f64>() / fake.len() as f64;
        let (d, g) = loss_gan(&real, &fake).unwrap();
        assert!((d - (-mr - mf)).abs() < 1e-9);
        assert!((g + mg).abs() < 1e-9);
    }
}

#[test]
fn mutual_examples_and_oracle() {
    let n = 12;
    let k = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let proj = rand_vec(&mut rng, n * k, 1.0);
    let zg = vec![0.0; n];
    let zc = vec![0.5, 0.0, 0.0];
    assert_eq!(loss_mutual(&zg, &zg, &zc, &proj, 0.5).unwrap(), 0.0);
    let mut zh = vec![0.0; n];
    zh[4] = 0.2;
    let zc = vec![0.0, -0.1, 0.0];
    assert!((loss_mutual(&zg, &zh, &zc, &proj, 0.5).unwrap() - 0.6).abs() < 1e-12);
    assert!(loss_mutual(&zg, &zh[..5], &zc, &proj, 0.5).is_err());
    for _ in 0..1000 {
        let a = rand_vec(&mut rng, n, 1.0);
        let b = rand_vec(&mut rng, n, 1.0);
        let c = rand_vec(&mut rng, k, 3.0);
        let mut d1 = 0.0;
        for i in 0..n {
            d1 += (a[i] - b[i]).powi(2);
        }
        let mut d2 = 0.0;
        for r in 0..k {
            let mut p = 0.0;
            for i in 0..n {
                p += proj[r * n + i] * a[i];
            }
            d2 += (p - c[r]).powi(2);
        }
        let want = (0.5 + d1.sqrt() - d2.sqrt()).max(0.0);
        assert!((loss_mutual(&a, &b, &c, &proj, 0.5).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn classifier_examples_and_oracle() {
    assert!((loss_classifier(&[0.3; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-12);
    assert!(loss_classifier(&[0.0, 20.0, 0.0, 0.0], 1).unwrap() <= 1e-3);
    assert!(loss_classifier(&[0.0; 4], 4).is_err());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let logits = rand_vec(&mut rng, 5, 6.0);
        let label = rng.random_range(0..5);
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        let want = -(logits[label].exp() / z).ln();
        assert!((loss_classifier(&logits, label).unwrap() - want).abs() < 1e-9);
    }
}

#[test]
fn transfer_total_examples_and_oracle() {
    let w = TransferWeights::default();
    assert!((loss_transfer(0.2, 0.5, 0.7, 0.1, 0.0, &w).total - 0.8).abs() < 1e-12);
    assert_eq!(loss_transfer(0.0, 0.0, 0.0, 0.0, 0.0, &w).total, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let c = rand_vec(&mut rng, 5, 2.0);
        let wv = rand_vec(&mut rng, 4, 2.0);
        let w = TransferWeights {
            recon: wv[0],
            gan: wv[1],
            mutual: wv[2],
            classifier: wv[3],
        };
        let r = loss_transfer(c[0], c[1], c[2], c[3], c[4], &w);
        let want = wv[0] * c[0] + wv[1] * c[1] + wv[2] * c[3] + wv[3] * c[4];
        assert!((r.total - want).abs() < 1e-9);
        assert_eq!(r.gan_d, c[2]);
    }
}

#[test]
fn forward_shapes_ranges_and_determinism() {
    let params = TransferParams::new(TransferConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random_image(&mut rng, 64, 64);
    let a = transfer_forward(&x, &params, Mode::Eval).unwrap();
    let b = transfer_forward(&x, &params, Mode::Eval).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.z.z_g.len(), 8 * 8 * 64);
    assert_eq!(a.z.z_c.len(), 32);
    assert_eq!(a.z_g_hat.len(), 8 * 8 * 64);
    assert_eq!((a.y_hat.height(), a.y_hat.width()), (64, 64));
    assert_eq!((a.x_hat.height(), a.x_hat.width(), a.x_hat.channels()), (64, 64, 3));
    assert_eq!(a.cond_logits.len(), 4);
    assert!(a.y_hat.values().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(a.x_hat.data().iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(a.z.z_g.iter().chain(&a.z.z_c).all(|v| v.is_finite()));
    assert!(transfer_forward(&random_image(&mut rng, 32, 64), &params, Mode::Eval).is_err());
}

#[test]
fn range_prediction_ignores_condition_latent() {
    let params = TransferParams::new(TransferConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_image(&mut rng, 64, 64);
    let out = transfer_forward(&x, &params, Mode::Eval).unwrap();
    let decoded = params.decode_range(&out.z.z_g).unwrap();
    let canon = yaw_shift_equirect(&out.y_hat, -(out.phase as f64) * 360.0 / 64.0);
    assert_eq!(decoded.values(), canon.values());
    // a second image with the same geometry but different photometry shifts z_c, not ŷ's decoder input
    let mut params2 = params.clone();
    params2.zc_head.params_mut()[1].value.iter_mut().for_each(|v| *v += 3.0);
    let out2 = transfer_forward(&x, &params2, Mode::Eval).unwrap();
    assert_ne!(out.z.z_c, out2.z.z_c);
    assert_eq!(out.y_hat, out2.y_hat);
    assert_eq!(out.z_g_hat, out2.z_g_hat);
}

#[test]
fn range_prediction_follows_yaw_shifts() {
    let params = TransferParams::new(TransferConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in [1, 5, 8, 13, 40] {
        let x = random_image(&mut rng, 64, 64);
        let deg = 360.0 / 64.0 * k as f64;
        let a = transfer_forward(&x, &params, Mode::Eval).unwrap();
        let b = transfer_forward(&yaw_shift_equirect(&x, deg), &params, Mode::Eval).unwrap();
        let expect = yaw_shift_equirect(&a.y_hat, deg);
        let mae = loss_recon(expect.values(), b.y_hat.values()).unwrap();
        assert!(mae < 1e-3, "shift {k}: {mae}");
    }
}

#[test]
fn discriminator_scores_are_bounded_and_reproducible() {
    let params = TransferParams::new(TransferConfig::default()).unwrap();
    let copy = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let y = random_range(&mut rng, 64, 64);
        let s = discriminate(&y, &params).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert_eq!(s, discriminate(&y, &copy).unwrap());
    }
    assert!(discriminate(&RangeImage::empty(16, 64), &params).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let params = TransferParams::new(TransferConfig {
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let mut buf = Vec::new();
    params.write(&mut buf).unwrap();
    assert_eq!(&buf[..6], b"I3DCK1");
    let loaded = TransferParams::read(buf.as_slice()).unwrap();
    assert_eq!(loaded.config, params.config);
    assert_eq!(loaded.checksum(), params.checksum());
    assert_eq!(loaded.projection.value, params.projection.value);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_image(&mut rng, 64, 64);
    let y = random_range(&mut rng, 64, 64);
    assert_eq!(
        transfer_forward(&x, &params, Mode::Eval).unwrap(),
        transfer_forward(&x, &loaded, Mode::Eval).unwrap()
    );
    assert_eq!(discriminate(&y, &params).unwrap(), discriminate(&y, &loaded).unwrap());
    assert!(TransferParams::read(&buf[..buf.len() - 3]).is_err());
}

fn flat_get(params: &mut [&mut Param], idx: usize) -> (usize, usize) {
    let mut i = idx;
    for (p, param) in params.iter().enumerate() {
        if i < param.len() {
            return (p, i);
        }
        i -= param.len();
    }
    unreachable!()
}

/// Compares accumulated gradients of `params` selected by `which` against
/// central differences of `value`.
fn check_gradients(
    seed: u64,
    base: &TransferParams,
    analytic: &TransferParams,
    which: fn(&mut TransferParams) -> Vec<&mut Param>,
    value: &dyn Fn(&TransferParams) -> f64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = analytic.clone();
    let grads: Vec<f64> = which(&mut a).iter().flat_map(|p| p.grad.clone()).collect();
    let candidates: Vec<usize> = (0..grads.len()).filter(|&i| grads[i].abs() > 1e-6).collect();
    assert!(candidates.len() >= 10, "only {} parameters carry gradient", candidates.len());
    let h = 1e-4;
    for _ in 0..10 {
        let idx = candidates[rng.random_range(0..candidates.len())];
        let mut plus = base.clone();
        let mut minus = base.clone();
        {
            let mut ps = which(&mut plus);
            let (p, i) = flat_get(&mut ps, idx);
            ps[p].value[i] += h;
        }
        {
            let mut ps = which(&mut minus);
            let (p, i) = flat_get(&mut ps, idx);
            ps[p].value[i] -= h;
        }
        let fd = (value(&plus) - value(&minus)) / (2.0 * h);
        let an = grads[idx];
        let rel = (an - fd).abs() / an.abs().max(fd.abs());
        assert!(rel < 1e-3, "param {idx}: analytic {an} vs numeric {fd} (rel {rel})");
    }
}

fn generator_check(seed: u64, obj: Objective) {
    let params = TransferParams::new(small_config(seed)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let x = random_image(&mut rng, 16, 16);
    let y = random_range(&mut rng, 16, 16);
    let label = 1;
    let mut analytic = params.clone();
    analytic.zero_grad();
    generator_pass(&mut analytic, &x, &y, label, &obj).unwrap();
    let value = |p: &TransferParams| {
        let mut q = p.clone();
        generator_pass(&mut q, &x, &y, label, &obj).unwrap().0.total
    };
    check_gradients(seed, &params, &analytic, |p| p.generator_params_mut(), &value);
}

fn only(recon: f64, gan: f64, mutual: f64, classifier: f64) -> TransferWeights {
    TransferWeights {
        recon,
        gan,
        mutual,
        classifier,
    }
}

#[test]
fn gradient_check_recon() {
    generator_check(21, Objective {
        weights: only(1.0, 0.0, 0.0, 0.0),
        lambda1: 0.5,
        range_weight: 1.0,
    });
}

#[test]
fn gradient_check_gan_generator() {
    generator_check(22, Objective {
        weights: only(0.0, 1.0, 0.0, 0.0),
        ..Default::default()
    });
}

#[test]
fn gradient_check_mutual() {
    generator_check(23, Objective {
        weights: only(0.0, 0.0, 1.0, 0.0),
        lambda1: 50.0,
        range_weight: 0.0,
    });
}

#[test]
fn gradient_check_classifier() {
    generator_check(24, Objective {
        weights: only(0.0, 0.0, 0.0, 1.0),
        ..Default::default()
    });
}

#[test]
fn gradient_check_full_objective() {
    generator_check(25, Objective {
        lambda1: 50.0,
        ..Default::default()
    });
}

#[test]
fn gradient_check_gan_discriminator() {
    let params = TransferParams::new(small_config(26)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(126);
    let real = random_range(&mut rng, 16, 16);
    let fake = random_range(&mut rng, 16, 16);
    let mut analytic = params.clone();
    analytic.zero_grad();
    discriminator_pass(&mut analytic, &real, &fake).unwrap();
    let value = |p: &TransferParams| {
        let (sr, sf) = (discriminate(&real, p).unwrap(), discriminate(&fake, p).unwrap());
        loss_gan(&[sr], &[sf]).unwrap().0
    };
    check_gradients(26, &params, &analytic, |p| p.discriminator_params_mut(), &value);
}

#[test]
fn generator_pass_leaves_projection_frozen() {
    let mut params = TransferParams::new(small_config(27)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(127);
    let x = random_image(&mut rng, 16, 16);
    let y = random_range(&mut rng, 16, 16);
    params.zero_grad();
    generator_pass(&mut params, &x, &y, 0, &Objective::default()).unwrap();
    assert!(params.projection.grad.iter().all(|&g| g == 0.0));
    assert!(params.generator_params().iter().all(|p| p.name != "mutual.proj"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hinged_losses_are_nonnegative(
        a in prop::collection::vec(-5.0f64..5.0, 8),
        b in prop::collection::vec(-5.0f64..5.0, 8),
        c in prop::collection::vec(-5.0f64..5.0, 2),
        p in prop::collection::vec(-2.0f64..2.0, 16),
        lambda in 0.0f64..2.0,
    ) {
        prop_assert!(loss_mutual(&a, &b, &c, &p, lambda).unwrap() >= 0.0);
        prop_assert!(loss_recon(&a, &b).unwrap() >= 0.0);
        prop_assert_eq!(loss_recon(&a, &b).unwrap(), loss_recon(&b, &a).unwrap());
    }

    #[test]
    fn classifier_loss_is_nonnegative(logits in prop::collection::vec(-30.0f64..30.0, 1..6), pick in 0usize..6) {
        let label = pick % logits.len();
        prop_assert!(loss_classifier(&logits, label).unwrap() >= 0.0);
    }
}
