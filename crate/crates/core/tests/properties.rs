use dfvo_core::eval::{ate_windows, format_kitti_poses, integrate, parse_kitti_poses, Trajectory};
use dfvo_core::geometry::{exp_map, Pixel, Twist};
use dfvo_core::grid::{bilinear_sample, gaussian_smooth, zscore_normalize};
use dfvo_core::selection::{gumbel_sample, harden, kl_bernoulli, sparsity_kl, ProbabilityMap};
use dfvo_core::solver::{inlier_indices, outlier_threshold, ResidualPoint, ResidualSet};
use dfvo_core::{Grid, GridKind, RigidTransform};
use nalgebra::Vector6;
use proptest::prelude::*;

fn affine(h: usize, w: usize, a: f64, b: f64, c: f64) -> Grid {
    Grid::from_fn(h, w, 1, GridKind::Image, |y, x, _| a + b * x as f64 + c * y as f64).unwrap()
}

fn pose() -> impl Strategy<Value = RigidTransform> {
    prop::array::uniform6(-0.5f64..0.5).prop_map(|v| exp_map(&Twist::from_vector(&Vector6::from_column_slice(&v))))
}

fn trajectory(n: usize) -> impl Strategy<Value = Trajectory> {
    prop::collection::vec(pose(), n).prop_map(|rel| integrate(&rel))
}

fn residual_set(norms: &[f64]) -> ResidualSet {
    let points = norms
        .iter()
        .enumerate()
        .map(|(i, _)| ResidualPoint {
            y: 0,
            x: i,
            depth: 1.0,
            warped: Pixel::new(i as f64, 0.0),
            warped_depth: 1.0,
            squared_norm: 0.0,
        })
        .collect();
    ResidualSet::from_parts(1, points, norms.iter().map(|n| n.sqrt()).collect()).unwrap()
}

proptest! {
    #[test]
    fn smoothing_keeps_ramps_in_the_interior(a in -5.0f64..5.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let g = affine(9, 12, a, b, c);
        let s = gaussian_smooth(&g);
        for y in 1..8 {
            for x in 1..11 {
                prop_assert!((s.get(y, x, 0) - g.get(y, x, 0)).abs() < 1e-12);
            }
        }
        let flat = Grid::filled(5, 5, 2, GridKind::Feature, a).unwrap();
        prop_assert!(gaussian_smooth(&flat).data().iter().all(|v| (v - a).abs() < 1e-12));
    }

    #[test]
    fn bilinear_is_exact_on_affine_grids(
        a in -5.0f64..5.0, b in -1.0f64..1.0, c in -1.0f64..1.0,
        u in 0.0f64..11.0, v in 0.0f64..8.0,
    ) {
        let g = affine(9, 12, a, b, c);
        let (s, ok) = bilinear_sample(&g, Pixel::new(u, v));
        prop_assert!(ok);
        prop_assert!((s[0] - (a + b * u + c * v)).abs() < 1e-12);
    }

    #[test]
    fn zscore_gives_unit_moments(data in prop::collection::vec(-10.0f64..10.0, 30 * 2), shift in -100.0f64..100.0) {
        let g = Grid::new(5, 6, 2, GridKind::Feature, data).unwrap();
        prop_assume!(zscore_normalize(&g).is_ok());
        let z = zscore_normalize(&g).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = z.data().iter().skip(c).step_by(2).copied().collect();
            let m = vals.iter().sum::<f64>() / 30.0;
            let var = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 30.0;
            prop_assert!(m.abs() < 1e-10 && (var - 1.0).abs() < 1e-10);
        }
        // Shift-invariant.
        let shifted = zscore_normalize(&g.map(|v| v + shift)).unwrap();
        for (p, q) in z.data().iter().zip(shifted.data()) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn ate_ignores_prediction_scale(gt in trajectory(5), pred in trajectory(5), s in 0.1f64..10.0) {
        let scaled = Trajectory::new(
            pred.poses.iter().map(|p| RigidTransform::new(p.rotation, p.translation * s).unwrap()).collect(),
        );
        let a = ate_windows(&pred, &gt, 3).unwrap();
        let b = ate_windows(&scaled, &gt, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9 * (1.0 + x));
        }
        prop_assert!(ate_windows(&gt, &gt, 5).unwrap().iter().all(|&e| e < 1e-12));
    }

    #[test]
    fn kitti_text_roundtrips(traj in trajectory(4)) {
        let back = parse_kitti_poses(&format_kitti_poses(&traj)).unwrap();
        prop_assert_eq!(back.len(), traj.len());
        for (p, q) in back.poses.iter().zip(&traj.poses) {
            prop_assert!((p.rotation - q.rotation).amax() < 1e-12);
            prop_assert!((p.translation - q.translation).amax() < 1e-12);
        }
    }

    #[test]
    fn integrating_relatives_recovers_the_trajectory(traj in trajectory(6)) {
        let again = integrate(&traj.relatives());
        for (p, q) in again.poses.iter().zip(&traj.poses) {
            prop_assert!((p.rotation - q.rotation).amax() < 1e-12);
            prop_assert!((p.translation - q.translation).amax() < 1e-12);
        }
    }

    #[test]
    fn outlier_threshold_scales_and_orders(norms in prop::collection::vec(0.0f64..10.0, 3..40), s in 0.01f64..100.0, bump in 0.0f64..5.0) {
        let rs = residual_set(&norms);
        let d = outlier_threshold(&rs).unwrap();
        let d_scaled = outlier_threshold(&residual_set(&norms.iter().map(|n| n * s).collect::<Vec<_>>())).unwrap();
        prop_assert!((d_scaled - s * d).abs() <= 1e-9 * (1.0 + s * d));
        // Raising any one norm never lowers the threshold.
        let mut raised = norms.clone();
        raised[0] += bump;
        prop_assert!(outlier_threshold(&residual_set(&raised)).unwrap() >= d - 1e-12);
        // Inliers are exactly the points strictly below the threshold.
        let (kept, used) = inlier_indices(&rs).unwrap();
        match used {
            Some(t) => prop_assert!(rs.squared_norms().iter().enumerate().all(|(i, &n)| kept.contains(&i) == (n < t))),
            None => prop_assert_eq!(kept.len(), norms.len()),
        }
    }

    #[test]
    fn kl_vanishes_only_at_the_target(rho in 0.01f64..0.99, rate in 0.01f64..0.99) {
        prop_assert!(kl_bernoulli(rho, rho).abs() < 1e-15);
        prop_assert!(kl_bernoulli(rho, rate) >= -1e-15);
    }
}

#[test]
fn hard_gumbel_rate_matches_the_probability() {
    let n = 100 * 100;
    for (q, seed) in [(0.1, 1), (0.3, 2), (0.5, 3), (0.8, 4)] {
        let p = ProbabilityMap::uniform(100, 100, q).unwrap();
        let rate = harden(&gumbel_sample(&p, 0.1, seed).unwrap()).rate();
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((rate - q).abs() < 3.0 * se, "q {q}: rate {rate}");
    }
    let p = ProbabilityMap::uniform(100, 100, 0.999).unwrap();
    assert!(harden(&gumbel_sample(&p, 0.1, 9).unwrap()).rate() >= 0.99);
}

#[test]
fn sparsity_penalty_is_zero_at_the_realized_rate() {
    let p = ProbabilityMap::uniform(40, 50, 0.25).unwrap();
    let m = gumbel_sample(&p, 0.1, 5).unwrap();
    assert!(sparsity_kl(&m, m.rate()).abs() < 1e-15);
    assert!(sparsity_kl(&m, 0.9) > 0.1);
}

#[test]
fn gumbel_masks_are_seeded() {
    let p = ProbabilityMap::uniform(30, 30, 0.4).unwrap();
    assert_eq!(gumbel_sample(&p, 0.2, 7).unwrap(), gumbel_sample(&p, 0.2, 7).unwrap());
    assert_ne!(gumbel_sample(&p, 0.2, 7).unwrap(), gumbel_sample(&p, 0.2, 8).unwrap());
}
