use dfvo_core::geometry::{exp_map, Pixel, Twist};
use dfvo_core::pyramid::Pyramid;
use dfvo_core::selection::sample_masks;
use dfvo_core::solver::{
    compute_residuals, gauss_newton_step, inlier_indices, outlier_threshold, solve_level, solve_pyramid, Jacobians,
    JacobianMode, LevelProblem, LevelStatus, ResidualPoint, ResidualSet, SolverConfig,
};
use dfvo_core::synthetic::{random_motion, render_pair, RenderedPair, Scene};
use dfvo_core::{random, Error, Grid, GridKind, Intrinsics, PatchSpec, PyramidConfig, RigidTransform, SelectionMask};
use nalgebra::{DMatrix, DVector, Vector3};

fn points(n: usize) -> Vec<ResidualPoint> {
    (0..n)
        .map(|i| ResidualPoint {
            y: 0,
            x: i,
            depth: 1.0,
            warped: Pixel::default(),
            warped_depth: 1.0,
            squared_norm: 0.0,
        })
        .collect()
}

fn norms_set(norms: &[f64]) -> ResidualSet {
    ResidualSet::from_parts(1, points(norms.len()), norms.iter().map(|n| n.sqrt()).collect()).unwrap()
}

#[test]
fn outlier_threshold_examples() {
    let rs = norms_set(&[1.0, 1.0, 1.0, 1.0, 100.0]);
    assert_eq!(outlier_threshold(&rs).unwrap(), 50.5);
    assert_eq!(inlier_indices(&rs).unwrap(), (vec![0, 1, 2, 3], Some(50.5)));

    let equal = norms_set(&[4.0; 6]);
    assert_eq!(outlier_threshold(&equal).unwrap(), 4.0);
    assert_eq!(inlier_indices(&equal).unwrap(), ((0..6).collect(), None));

    let single = norms_set(&[9.0]);
    assert_eq!(outlier_threshold(&single).unwrap(), 9.0);
    assert_eq!(inlier_indices(&single).unwrap().0, vec![0]);

    let empty = norms_set(&[]);
    assert_eq!(outlier_threshold(&empty), Err(Error::EmptyResidualSet));
}

#[test]
fn gauss_newton_matches_dense_least_squares() {
    let mut rng = random::seeded(11);
    for &(n, dim, damping) in &[(10usize, 1usize, 1e-6), (40, 3, 1e-6), (25, 9, 1e-2)] {
        let rows: Vec<f64> = (0..n * dim * 6).map(|_| random::uniform(&mut rng, -2.0, 2.0)).collect();
        let res: Vec<f64> = (0..n * dim).map(|_| random::uniform(&mut rng, -1.0, 1.0)).collect();
        let rs = ResidualSet::from_parts(dim, points(n), res.clone()).unwrap();
        let j = Jacobians::from_parts(dim, vec![(0, 0); n], rows.clone()).unwrap();
        let step = gauss_newton_step(&rs, &j, damping).unwrap().to_vector();

        // Stacked [J; √λ I] δ = [−r; 0], solved by SVD.
        let m = n * dim;
        let mut a = DMatrix::zeros(m + 6, 6);
        let mut b = DVector::zeros(m + 6);
        for r in 0..m {
            for c in 0..6 {
                a[(r, c)] = rows[r * 6 + c];
            }
            b[r] = -res[r];
        }
        for c in 0..6 {
            a[(m + c, c)] = damping.sqrt();
        }
        let oracle = a.svd(true, true).solve(&b, 1e-14).unwrap();
        for c in 0..6 {
            assert!((step[c] - oracle[c]).abs() <= 1e-10 * oracle.amax(), "n {n} dim {dim}: {step} vs {oracle}");
        }
    }
}

fn plane_pair(seed: u64, size: (usize, usize), cfg: &PyramidConfig) -> RenderedPair {
    let depth = 4.0 + seed as f64 % 3.0;
    let scene = Scene::random_plane(seed, size.0, size.1, 8, depth, seed % 2 == 1);
    let mut rng = random::seeded(seed + 77);
    let motion = random_motion(&mut rng, 0.05 * depth, 2f64.to_radians());
    render_pair(&scene, &motion, cfg).unwrap()
}

fn masks(pair: &RenderedPair, cfg: &PyramidConfig, seed: u64) -> Vec<SelectionMask> {
    sample_masks(&pair.target_images, cfg, 0.1, seed).unwrap()
}

fn errors(est: &RigidTransform, truth: &RigidTransform) -> (f64, f64) {
    let rot = est.compose(&truth.inverse()).rotation_angle().to_degrees();
    let trans = (est.translation - truth.translation).norm() / truth.translation.norm();
    (rot, trans)
}

#[test]
fn identical_frames_converge_at_once() {
    let cfg = PyramidConfig::default();
    let pair = plane_pair(1, (60, 80), &cfg);
    let all = SelectionMask::all(60, 80).unwrap();
    let lp = LevelProblem {
        target: pair.target.level(1),
        source: pair.target.level(1),
        depth: pair.depth.level(1),
        mask: &all,
        intrinsics: pair.target.intrinsics(1),
        patch: cfg.level(1).patch,
    };
    let (pose, log) = solve_level(&lp, &RigidTransform::identity(), &SolverConfig::default()).unwrap();
    assert_eq!(pose, RigidTransform::identity());
    assert!(!log.iterations[0].accepted);
    assert_eq!(log.status, LevelStatus::Converged);
    assert_eq!(log.iterations.len(), 1);

    let masks = vec![SelectionMask::all(60, 80).unwrap(); 1]
        .into_iter()
        .chain((2..=4).map(|l| SelectionMask::all(pair.target.level(l).height(), pair.target.level(l).width()).unwrap()))
        .collect::<Vec<_>>();
    let rep = solve_pyramid(&pair.target, &pair.target, &pair.depth, &masks, &cfg, &SolverConfig::default()).unwrap();
    assert!(rep.levels.iter().all(|l| l.result == RigidTransform::identity()));
}

#[test]
fn solve_level_recovers_the_transform_not_its_inverse() {
    let cfg = PyramidConfig::default();
    let pair = plane_pair(2, (60, 80), &cfg);
    let all = SelectionMask::all(60, 80).unwrap();
    let lp = LevelProblem {
        target: pair.target.level(1),
        source: pair.source.level(1),
        depth: pair.depth.level(1),
        mask: &all,
        intrinsics: pair.target.intrinsics(1),
        patch: cfg.level(1).patch,
    };
    let (pose, _) = solve_level(&lp, &RigidTransform::identity(), &SolverConfig::default()).unwrap();
    let (rot, trans) = errors(&pose, &pair.truth);
    assert!(rot < 0.05 && trans < 0.02, "rot {rot} trans {trans}");
    let (_, inv) = errors(&pose, &pair.truth.inverse());
    assert!(inv > 1.0);
}

#[test]
fn accepted_steps_never_raise_the_energy() {
    let cfg = PyramidConfig::default();
    for seed in 0..4 {
        let pair = plane_pair(seed, (60, 80), &cfg);
        let rep = solve_pyramid(&pair.target, &pair.source, &pair.depth, &masks(&pair, &cfg, seed), &cfg, &SolverConfig::default())
            .unwrap();
        for level in &rep.levels {
            for it in &level.iterations {
                assert!(it.energy.is_finite());
                if it.accepted {
                    let after = it.energy_after.unwrap();
                    assert!(after <= it.energy + 1e-12, "seed {seed} level {} iter {}", level.level, it.iteration);
                }
            }
        }
    }
}

#[test]
fn depth_scaling_scales_translation_only() {
    let cfg = PyramidConfig::default();
    let pair = plane_pair(3, (96, 128), &cfg);
    let m = masks(&pair, &cfg, 3);
    let solver = SolverConfig::default();
    let base = solve_pyramid(&pair.target, &pair.source, &pair.depth, &m, &cfg, &solver).unwrap();
    for s in [0.5, 2.0, 10.0] {
        let scaled: Pyramid = pair.depth.map(|_, g| g.map(|z| z * s).with_kind(GridKind::Depth)).unwrap();
        let rep = solve_pyramid(&pair.target, &pair.source, &scaled, &m, &cfg, &solver).unwrap();
        let rel = (rep.pose.translation - base.pose.translation * s).norm() / (base.pose.translation * s).norm();
        assert!(rel < 1e-9, "s {s}: {rel:e}");
        assert!((rep.pose.rotation - base.pose.rotation).amax() < 1e-12, "s {s}");
        for (a, b) in rep.levels.iter().zip(&base.levels) {
            assert_eq!(a.iterations.len(), b.iterations.len());
        }
    }
}

#[test]
fn full_pyramid_refines_the_coarse_estimate() {
    let cfg = PyramidConfig::default();
    for seed in 0..3 {
        let pair = plane_pair(seed, (96, 128), &cfg);
        let m = masks(&pair, &cfg, seed);
        let full = solve_pyramid(&pair.target, &pair.source, &pair.depth, &m, &cfg, &SolverConfig::default()).unwrap();
        let coarse_cfg = SolverConfig {
            enabled_levels: [false, false, false, true],
            ..SolverConfig::default()
        };
        let coarse = solve_pyramid(&pair.target, &pair.source, &pair.depth, &m, &cfg, &coarse_cfg).unwrap();
        let energy = |t: &RigidTransform| {
            compute_residuals(pair.target.level(1), pair.source.level(1), pair.depth.level(1), &m[0], t, pair.target.intrinsics(1), cfg.level(1).patch)
                .unwrap()
                .energy()
        };
        assert!(energy(&full.pose) <= energy(&coarse.pose), "seed {seed}");
        assert_eq!(coarse.level(1).unwrap().status, LevelStatus::Disabled);
    }
}

#[test]
fn frozen_jacobian_mode_also_converges() {
    let cfg = PyramidConfig::default();
    let pair = plane_pair(4, (96, 128), &cfg);
    let solver = SolverConfig {
        jacobian_mode: JacobianMode::FrozenPerLevel,
        max_iterations: 40,
        ..SolverConfig::default()
    };
    let rep = solve_pyramid(&pair.target, &pair.source, &pair.depth, &masks(&pair, &cfg, 4), &cfg, &solver).unwrap();
    let (rot, trans) = errors(&rep.pose, &pair.truth);
    assert!(rot < 0.05 && trans < 0.01, "rot {rot} trans {trans}");
}

#[test]
fn shifted_affine_features_have_zero_residual() {
    let k = Intrinsics::new(50.0, 50.0, 19.5, 14.5).unwrap();
    let (z, b) = (4.0, 0.2);
    let shift = k.fx * b / z;
    let f = |y: usize, x: f64, c: usize| 0.1 * (c + 1) as f64 * x - 0.05 * y as f64 + c as f64;
    let target = Grid::from_fn(30, 40, 3, GridKind::Feature, |y, x, c| f(y, x as f64, c)).unwrap();
    let source = Grid::from_fn(30, 40, 3, GridKind::Feature, |y, x, c| f(y, x as f64 - shift, c)).unwrap();
    let depth = Grid::filled(30, 40, 1, GridKind::Depth, z).unwrap();
    let t = RigidTransform::from_translation(Vector3::new(b, 0.0, 0.0));
    let rs = compute_residuals(&target, &source, &depth, &SelectionMask::all(30, 40).unwrap(), &t, &k, PatchSpec::new(3).unwrap())
        .unwrap();
    assert!(rs.len() > 500);
    assert!(rs.squared_norms().iter().all(|&n| n.sqrt() <= 1e-6));

    let none = SelectionMask::from_weights(&Grid::filled(30, 40, 1, GridKind::Mask, 0.0).unwrap()).unwrap();
    assert!(compute_residuals(&target, &source, &depth, &none, &t, &k, PatchSpec::new(3).unwrap()).unwrap().is_empty());
}

#[test]
fn small_twist_update_lands_near_truth() {
    // A single level started close to the answer reaches it in a few steps.
    let cfg = PyramidConfig::default();
    let pair = plane_pair(5, (60, 80), &cfg);
    let all = SelectionMask::all(60, 80).unwrap();
    let lp = LevelProblem {
        target: pair.target.level(1),
        source: pair.source.level(1),
        depth: pair.depth.level(1),
        mask: &all,
        intrinsics: pair.target.intrinsics(1),
        patch: PatchSpec::new(1).unwrap(),
    };
    let init = exp_map(&Twist::new(Vector3::new(0.01, 0.0, -0.01), Vector3::new(0.0, 0.002, 0.0))).compose(&pair.truth);
    let (pose, log) = solve_level(&lp, &init, &SolverConfig::default()).unwrap();
    let (rot, trans) = errors(&pose, &pair.truth);
    assert!(rot < 0.01 && trans < 5e-3, "rot {rot} trans {trans}");
    assert!(log.iterations.len() <= 10);
}
