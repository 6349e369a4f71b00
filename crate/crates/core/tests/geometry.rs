use std::f64::consts::{PI, TAU};

use xdloc::geometry::io::*;
use xdloc::geometry::world::ground_plane_range;
use xdloc::geometry::*;
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-pixel scan over all points, binning each from its own angles.
fn brute_force_projection(points: &[Vector3<f64>], pose: &Pose, h: usize, w: usize, r_max: f64) -> Vec<f64> {
    let mut out = vec![1.0; h * w];
    for row in 0..h {
        for col in 0..w {
            for p in points {
                let local = pose.orientation.inverse_transform_vector(&(p - pose.position));
                let r = local.norm();
                if r == 0.0 || r > r_max {
                    continue;
                }
                let theta = (local.z / r).clamp(-1.0, 1.0).acos();
                let phi = local.y.atan2(local.x).rem_euclid(TAU);
                let pr = ((theta * h as f64 / PI).floor() as usize).min(h - 1);
                let pc = ((phi * w as f64 / TAU).floor() as usize) % w;
                if pr == row && pc == col && r / r_max < out[row * w + col] {
                    out[row * w + col] = r / r_max;
                }
            }
        }
    }
    out
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let q = UnitQuaternion::from_scaled_axis(axis);
    let p = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-2.0..2.0));
    Pose::new(p, *q.quaternion(), 0.0).unwrap()
}

#[test]
fn projection_matches_brute_force_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..3 {
        let pts: Vec<_> = (0..1000)
            .map(|_| Vector3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(-10.0..10.0)))
            .collect();
        let map = PointCloudMap::new(pts.clone(), vec![0.5; 1000]).unwrap();
        let pose = random_pose(&mut rng);
        let (h, w) = if trial == 0 { (64, 64) } else { (16 + trial * 8, 48) };
        let fast = project_points_to_range(&map, &pose, h, w, 30.0).unwrap();
        let slow = brute_force_projection(&pts, &pose, h, w, 30.0);
        assert_eq!(fast.values(), &slow[..]);
    }
}

#[test]
fn ground_plane_matches_analytic_range() {
    let (map, traj) = synthesize_world(5, 60.0, 0).unwrap();
    let pose = &traj.poses()[7];
    let h = pose.position.z;
    let img = project_points_to_range(&map, pose, 64, 64, 30.0).unwrap();
    let mut hits = 0;
    let mut expected_hits = 0;
    for r in 0..64 {
        let lo = ground_plane_range(h, r as f64 * PI / 64.0);
        let hi = ground_plane_range(h, (r + 1) as f64 * PI / 64.0);
        for c in 0..64 {
            let v = img.get(r, c);
            if r < 32 {
                assert_eq!(v, 1.0, "upper hemisphere row {r}");
                continue;
            }
            // within one angular bin: between the ranges at the bin's edges
            if v < 1.0 {
                hits += 1;
                assert!(v * 30.0 >= hi - 1e-9 && v * 30.0 <= lo.min(30.0) + 1e-9, "row {r}: {v}");
            }
            // rows whose footprint holds several ground samples near the path
            if (33..=45).contains(&r) {
                expected_hits += 1;
            }
        }
    }
    assert!(hits as f64 >= 0.97 * expected_hits as f64, "{hits} hits of {expected_hits}");
}

#[test]
fn worlds_are_deterministic_and_bounded() {
    let (m1, t1) = synthesize_world(9, 100.0, 50).unwrap();
    let (m2, t2) = synthesize_world(9, 100.0, 50).unwrap();
    assert_eq!(m1.points(), m2.points());
    assert_eq!(m1.albedo(), m2.albedo());
    assert_eq!(t1, t2);
    for p in m1.points() {
        assert!(p.x.abs() <= 50.0 && p.y.abs() <= 50.0 && p.z >= 0.0 && p.z <= 100.0);
    }
    assert!(t1.max_step() <= 2.0);
    let (m3, _) = synthesize_world(10, 100.0, 50).unwrap();
    assert_ne!(m1.points().len() + 1, 0);
    assert_ne!(m1.points(), m3.points());
}

#[test]
fn trajectory_stays_clear_of_structures() {
    let (map, traj) = synthesize_world(2, 120.0, 80).unwrap();
    for pose in traj.poses() {
        let mut nearest = f64::INFINITY;
        map.visit_near(&pose.position, 3.0, |i| {
            let p = map.points()[i];
            if p.z > 0.0 {
                nearest = nearest.min((p.xy() - pose.position.xy()).norm());
            }
        });
        assert!(nearest >= 2.9, "structure {nearest} m from the path");
    }
}

#[test]
fn paired_dataset_is_consistent() {
    let (map, traj) = synthesize_world(4, 80.0, 20).unwrap();
    let poses: Vec<_> = traj.poses()[..10].to_vec();
    let traj = Trajectory::new(poses).unwrap();
    let conds = vec![
        ConditionSpec::identity(0),
        ConditionSpec {
            label: 1,
            brightness: 0.6,
            hue_shift: 30.0,
            noise_sigma: 0.05,
            fog_density: 0.2,
            seed: 3,
        },
        ConditionSpec {
            label: 2,
            brightness: 1.2,
            ..ConditionSpec::identity(2)
        },
    ];
    let data = generate_paired_dataset(&map, &traj, &conds, 64, 64, 30.0).unwrap();
    assert_eq!(data.len(), 30);
    for (i, s) in data.iter().enumerate() {
        assert_eq!(s.pose_index, i / 3);
        assert_eq!(s.condition, i % 3);
        assert_eq!(s.range, data[i - i % 3].range);
        let direct = project_points_to_range(&map, &s.pose, 64, 64, 30.0).unwrap();
        assert_eq!(s.range, direct);
    }
    // identity condition: sky pixels are exactly the no-return pixels
    for s in data.iter().filter(|s| s.condition == 0) {
        let (plain, _) = render_view(&map, &s.pose, 64, 64, 30.0).unwrap();
        assert_eq!(plain, s.image);
        for r in 0..64 {
            for c in 0..64 {
                let sky = xdloc::geometry::projection::sky_color(r, 64);
                let is_sky = s.image.pixel(r, c) == sky;
                assert_eq!(is_sky, s.range.get(r, c) == 1.0);
            }
        }
    }
    let again = generate_paired_dataset(&map, &traj, &conds, 64, 64, 30.0).unwrap();
    let encode = |d: &[PairedSample]| {
        let mut buf = Vec::new();
        for s in d {
            write_png(&mut buf, &s.image).unwrap();
            write_range(&mut buf, &s.range).unwrap();
        }
        buf
    };
    assert_eq!(encode(&data), encode(&again));
}

#[test]
fn point_cloud_file_round_trip() {
    let (map, traj) = synthesize_world(1, 60.0, 5).unwrap();
    let mut buf = Vec::new();
    write_point_cloud(&mut buf, &map).unwrap();
    assert_eq!(&buf[..6], b"I3DPC1");
    assert_eq!(buf.len(), 6 + 8 + map.len() * 16);
    let back = read_point_cloud(&buf[..]).unwrap();
    assert_eq!(back.len(), map.len());
    for (a, b) in back.points().iter().zip(map.points()) {
        assert!((a - b).norm() < 1e-4);
    }
    let mut tum = Vec::new();
    write_tum(&mut tum, traj.poses()).unwrap();
    assert_eq!(read_tum(&tum[..]).unwrap(), traj);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn projection_oracle_equivalence(seed in 0u64..1000, h in 4usize..40, w in 4usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<_> = (0..150)
            .map(|_| Vector3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)))
            .collect();
        let map = PointCloudMap::new(pts.clone(), vec![0.3; 150]).unwrap();
        let pose = random_pose(&mut rng);
        let fast = project_points_to_range(&map, &pose, h, w, 25.0).unwrap();
        prop_assert_eq!(fast.values(), &brute_force_projection(&pts, &pose, h, w, 25.0)[..]);
    }

    #[test]
    fn full_turn_of_grid_shifts_is_identity(seed in 0u64..1000, w in prop::sample::select(vec![8usize, 16, 64])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..8 * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let img = RangeImage::new(8, w, data).unwrap();
        let mut cur = img.clone();
        for _ in 0..w {
            cur = yaw_shift_equirect(&cur, 360.0 / w as f64);
        }
        prop_assert_eq!(cur, img);
    }

    #[test]
    fn conditions_never_touch_geometry(seed in 0u64..100, b in 0.0f64..2.0, hue in -180.0f64..180.0, fog in 0.0f64..1.0) {
        let (map, traj) = synthesize_world(seed % 3, 60.0, 4).unwrap();
        let traj = Trajectory::new(traj.poses()[..2].to_vec()).unwrap();
        let cond = ConditionSpec { label: 1, brightness: b, hue_shift: hue, noise_sigma: 0.02, fog_density: fog, seed };
        let data = generate_paired_dataset(&map, &traj, &[ConditionSpec::identity(0), cond], 32, 32, 30.0).unwrap();
        prop_assert_eq!(&data[0].range, &data[1].range);
        prop_assert!(data[1].image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
