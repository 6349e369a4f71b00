use xdloc_harmonics::*;
use proptest::prelude::*;

fn grid(b: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 4 * b * b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sht_is_linear(x in grid(4), y in grid(4), a in -3.0f64..3.0, c in -3.0f64..3.0) {
        let sx = SphericalSignal::from_grid(4, 1, x.clone()).unwrap();
        let sy = SphericalSignal::from_grid(4, 1, y.clone()).unwrap();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + c * v).collect();
        let sc = SphericalSignal::from_grid(4, 1, comb).unwrap();
        let (fx, fy, fc) = (sht_forward(&sx).unwrap(), sht_forward(&sy).unwrap(), sht_forward(&sc).unwrap());
        for i in 0..fc.data().len() {
            let want = fx.data()[i] * a + fy.data()[i] * c;
            prop_assert!((fc.data()[i] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn synthesis_then_analysis_is_identity(x in grid(8)) {
        // project an arbitrary grid onto the band-limited subspace first
        let s = SphericalSignal::from_grid(8, 1, x).unwrap();
        let c = sht_forward(&s).unwrap();
        let back = sht_forward(&sht_inverse(&c).unwrap()).unwrap();
        for (u, v) in c.data().iter().zip(back.data()) {
            prop_assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn rotation_preserves_energy(x in grid(8), a in 0.0f64..6.28, b in 0.0f64..3.14, g in 0.0f64..6.28) {
        let s = SphericalSignal::from_grid(8, 1, x).unwrap();
        let c = sht_forward(&s).unwrap();
        let r = rotate_harmonics(&c, &RotationZYZ::new(a, b, g));
        prop_assert!((r.norm_sq() - c.norm_sq()).abs() < 1e-9 * c.norm_sq().max(1.0));
    }

    #[test]
    fn rotation_round_trip(x in grid(8), a in 0.0f64..6.28, b in 0.0f64..3.14, g in 0.0f64..6.28) {
        let s = SphericalSignal::from_grid(8, 1, x).unwrap();
        let c = sht_forward(&s).unwrap();
        let r = RotationZYZ::new(a, b, g);
        let back = rotate_harmonics(&rotate_harmonics(&c, &r), &r.inverse());
        for (u, v) in c.data().iter().zip(back.data()) {
            prop_assert!((u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn column_shift_commutes_with_correlation(x in grid(4), h in grid(4), k in 0i64..8) {
        let f = SphericalSignal::from_grid(4, 1, x).unwrap();
        let h = SphericalSignal::from_grid(4, 1, h).unwrap();
        // band-limit both so the shift is exact
        let f = sht_inverse(&sht_forward(&f).unwrap()).unwrap();
        let h = sht_inverse(&sht_forward(&h).unwrap()).unwrap();
        let base = s2_correlate(&f, &h).unwrap().shift_alpha(k);
        let rot = rotate_s2(&f, &RotationZYZ::about_z(k as f64 * std::f64::consts::PI / 4.0)).unwrap();
        let moved = s2_correlate(&rot, &h).unwrap();
        for (u, v) in base.data().iter().zip(moved.data()) {
            prop_assert!((u - v).abs() < 1e-8);
        }
    }
}
