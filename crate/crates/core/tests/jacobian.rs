//! Analytic Jacobians against central finite differences of the residuals.

use std::collections::HashMap;

use dfvo_core::geometry::{exp_map, Twist};
use dfvo_core::random;
use dfvo_core::selection::{gumbel_sample, harden, ProbabilityMap};
use dfvo_core::solver::{compute_residuals, jacobian_ic};
use dfvo_core::synthetic::{random_motion, Scene};
use dfvo_core::{Grid, PatchSpec, RigidTransform};
use nalgebra::Vector6;

const H: f64 = 1e-6;
// Sample lattices this close to a cell edge straddle a kink of the
// bilinear interpolant, where finite differences are meaningless.
const EDGE: f64 = 1e-3;

// Residual and warped coordinates of each pixel.
type Sample = (Vec<f64>, (f64, f64));

fn residual_map(
    target: &Grid,
    source: &Grid,
    depth: &Grid,
    mask: &dfvo_core::SelectionMask,
    t: &RigidTransform,
    scene: &Scene,
    patch: PatchSpec,
) -> HashMap<(usize, usize), Sample> {
    let rs = compute_residuals(target, source, depth, mask, t, &scene.intrinsics, patch).unwrap();
    rs.points()
        .iter()
        .enumerate()
        .map(|(i, p)| ((p.y, p.x), (rs.residual(i).to_vec(), (p.warped.u, p.warped.v))))
        .collect()
}

fn near_edge(u: f64) -> bool {
    let f = u - u.floor();
    !(EDGE..=1.0 - EDGE).contains(&f)
}

/// Returns (checked points, worst relative error).
fn check_scene(seed: u64, patch: usize, relief: bool) -> (usize, f64) {
    let scene = if relief {
        Scene::random_relief(seed, 48, 64, 4, 4.0, 0.15)
    } else {
        Scene::random_plane(seed, 48, 64, 4, 4.0, true)
    };
    let mut rng = random::seeded(seed);
    let motion = random_motion(&mut rng, 0.2, 0.05);
    let target = scene.render_view(&RigidTransform::identity()).unwrap();
    let source = scene.render_view(&motion.inverse()).unwrap();
    // Linearize away from the truth so residuals are not all small.
    let t0 = exp_map(&Twist::from_vector(&Vector6::new(0.02, -0.01, 0.03, 0.004, -0.003, 0.002))).compose(&motion.inverse());
    let mask = harden(&gumbel_sample(&ProbabilityMap::uniform(48, 64, 0.3).unwrap(), 0.1, seed).unwrap());
    let spec = PatchSpec::new(patch).unwrap();

    let jac = jacobian_ic(&source.features, &target.depth, &mask, &t0, &scene.intrinsics, spec).unwrap();
    let base = residual_map(&target.features, &source.features, &target.depth, &mask, &t0, &scene, spec);
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for j in 0..6 {
        let mut e = Vector6::zeros();
        e[j] = H;
        let tp = exp_map(&Twist::from_vector(&e)).compose(&t0);
        let tm = exp_map(&Twist::from_vector(&-e)).compose(&t0);
        plus.push(residual_map(&target.features, &source.features, &target.depth, &mask, &tp, &scene, spec));
        minus.push(residual_map(&target.features, &source.features, &target.depth, &mask, &tm, &scene, spec));
    }

    assert_eq!(jac.len(), base.len(), "Jacobians and residuals keep the same points");
    let dim = jac.dim();
    let (mut checked, mut worst) = (0, 0.0f64);
    'points: for i in 0..jac.len() {
        let px = jac.pixel(i);
        let (_, (u, v)) = &base[&px];
        if near_edge(*u) || near_edge(*v) {
            continue;
        }
        let mut fd = vec![0.0; dim * 6];
        for j in 0..6 {
            let (Some((rp, _)), Some((rm, _))) = (plus[j].get(&px), minus[j].get(&px)) else {
                continue 'points;
            };
            for e in 0..dim {
                fd[e * 6 + j] = (rp[e] - rm[e]) / (2.0 * H);
            }
        }
        let analytic = jac.matrix(i);
        let diff: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        worst = worst.max(diff / norm);
        checked += 1;
    }
    (checked, worst)
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    let mut total = 0;
    for seed in 0..6 {
        for (patch, relief) in [(3, false), (1, true), (3, true)] {
            let (n, worst) = check_scene(seed, patch, relief);
            assert!(worst < 1e-4, "seed {seed} k {patch}: relative error {worst:e}");
            total += n;
        }
    }
    assert!(total >= 500, "only {total} points checked");
}

#[test]
fn constant_source_has_zero_jacobians() {
    let scene = Scene::random_plane(3, 20, 24, 2, 3.0, false);
    let v = scene.render_view(&RigidTransform::identity()).unwrap();
    let flat = Grid::filled(20, 24, 2, dfvo_core::GridKind::Feature, 0.7).unwrap();
    let mask = dfvo_core::SelectionMask::all(20, 24).unwrap();
    let j = jacobian_ic(&flat, &v.depth, &mask, &RigidTransform::identity(), &scene.intrinsics, PatchSpec::new(3).unwrap()).unwrap();
    assert!(!j.is_empty());
    assert!((0..j.len()).all(|i| j.matrix(i).iter().all(|&x| x == 0.0)));
}
