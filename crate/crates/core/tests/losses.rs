use dfvo_core::losses::{
    appearance_loss, robust_clip, ssim, total_loss, warp_image, LossBreakdown, LossFrame, LossLevel, LossWeights,
};
use dfvo_core::selection::{gumbel_sample, ProbabilityMap};
use dfvo_core::synthetic::{make_snippet, ImageTexture, Scene, TrajectorySpec};
use dfvo_core::{Grid, GridKind, RigidTransform};
use nalgebra::Vector3;
use proptest::prelude::*;

/// Three frames of an affine-textured fronto-parallel plane under pure
/// translation; every view-to-view warp is affine in pixels.
fn exact_snippet() -> Vec<LossFrame> {
    let mut scene = Scene::random_plane(9, 48, 64, 1, 6.0, false);
    scene.image = ImageTexture::Affine { offset: 0.5, gx: 0.35, gy: 0.25 };
    let traj = TrajectorySpec::new(vec![
        RigidTransform::from_translation(Vector3::new(0.1, 0.0, 0.25)),
        RigidTransform::from_translation(Vector3::new(0.08, -0.03, 0.2)),
    ])
    .unwrap();
    make_snippet(&scene, &traj)
        .unwrap()
        .into_iter()
        .map(|f| LossFrame {
            pose: f.pose,
            levels: f
                .levels
                .into_iter()
                .map(|v| LossLevel {
                    image: v.image,
                    depth: v.depth,
                    intrinsics: v.intrinsics,
                })
                .collect(),
        })
        .collect()
}

#[test]
fn ground_truth_snippet_has_no_appearance_error() {
    let frames = exact_snippet();
    let out = total_loss(&frames, &[], &[], &LossWeights::default()).unwrap();
    assert_eq!(out.appearance.len(), 6 * 4);
    for t in &out.appearance {
        assert!(t.value < 1e-6, "{t:?}");
    }
    assert!(out.appearance_total() < 1e-6);
}

#[test]
fn wrong_pose_costs_appearance() {
    let mut frames = exact_snippet();
    frames[1].pose.translation.x += 0.05;
    let out = total_loss(&frames, &[], &[], &LossWeights::default()).unwrap();
    assert!(out.appearance_total() > 1e-4);
}

type Inputs = (Vec<LossFrame>, Vec<(dfvo_core::SelectionMask, f64)>, Vec<(Grid, Grid)>);

fn breakdown_inputs() -> Inputs {
    let frames = exact_snippet();
    let p = ProbabilityMap::uniform(48, 64, 0.4).unwrap();
    let masks = vec![(gumbel_sample(&p, 0.5, 1).unwrap(), 0.3), (gumbel_sample(&p, 0.5, 2).unwrap(), 0.3)];
    let a = Grid::from_fn(8, 8, 1, GridKind::Image, |y, x, _| (y * 8 + x) as f64 / 64.0).unwrap();
    let recon = vec![(a.clone(), a.map(|v| v * 0.9 + 0.02))];
    (frames, masks, recon)
}

#[test]
fn total_is_linear_in_each_weight() {
    let (frames, masks, recon) = breakdown_inputs();
    let total = |w: LossWeights| total_loss(&frames, &masks, &recon, &w).unwrap().total;
    let base = LossWeights::default();
    let t0 = total(base);
    let parts: LossBreakdown = total_loss(&frames, &masks, &recon, &base).unwrap();
    for which in 0..3 {
        for factor in [0.0, 2.0, 7.5] {
            let mut w = base;
            let (delta, unit) = match which {
                0 => {
                    w.smoothness *= factor;
                    (w.smoothness - base.smoothness, parts.weighted_smoothness(&LossWeights { smoothness: 1.0, ..base }))
                }
                1 => {
                    w.sparsity *= factor;
                    (w.sparsity - base.sparsity, parts.sparsity)
                }
                _ => {
                    w.reconstruction *= factor;
                    (w.reconstruction - base.reconstruction, parts.reconstruction)
                }
            };
            let expected = t0 + delta * unit;
            assert!((total(w) - expected).abs() < 1e-10, "term {which} factor {factor}");
        }
    }
    assert!((parts.total - parts.weighted_total(&base)).abs() < 1e-10);
}

#[test]
fn only_smoothness_left_when_other_weights_vanish() {
    let (frames, masks, recon) = breakdown_inputs();
    let w = LossWeights {
        sparsity: 0.0,
        reconstruction: 0.0,
        ..LossWeights::default()
    };
    let out = total_loss(&frames, &masks, &recon, &w).unwrap();
    let expected = out.appearance_total() + out.weighted_smoothness(&w);
    assert!((out.total - expected).abs() < 1e-12);
    let per_level: Vec<f64> = (1..=4).map(|l| w.smoothness_at(l)).collect();
    assert_eq!(per_level, [0.1, 0.05, 0.025, 0.0125]);
}

#[test]
fn all_zero_components_give_zero_total() {
    let flat = Grid::filled(8, 8, 1, GridKind::Image, 0.5).unwrap();
    let depth = Grid::filled(8, 8, 1, GridKind::Depth, 3.0).unwrap();
    let k = dfvo_core::Intrinsics::new(8.0, 8.0, 3.5, 3.5).unwrap();
    let frame = LossFrame {
        pose: RigidTransform::identity(),
        levels: vec![LossLevel { image: flat.clone(), depth, intrinsics: k }],
    };
    let out = total_loss(&[frame.clone(), frame], &[], &[(flat.clone(), flat)], &LossWeights::default()).unwrap();
    assert_eq!(out.total, 0.0);
}

#[test]
fn robust_clip_knees_are_continuous() {
    for eps in [0.15, 0.3] {
        assert_eq!(robust_clip(eps * (1.0 - 1e-12), eps), eps * (1.0 - 1e-12));
        assert!((robust_clip(eps, eps) - eps).abs() < 1e-16);
        assert!((robust_clip(eps + 0.1, eps) - (eps + 0.01)).abs() < 1e-15);
    }
}

fn image(h: usize, w: usize) -> impl Strategy<Value = Grid> {
    prop::collection::vec(0.0f64..1.0, h * w).prop_map(move |d| Grid::new(h, w, 1, GridKind::Image, d).unwrap())
}

proptest! {
    #[test]
    fn ssim_is_bounded_and_symmetric(a in image(6, 7), b in image(6, 7)) {
        let ab = ssim(&a, &b).unwrap();
        let ba = ssim(&b, &a).unwrap();
        for (x, y) in ab.data().iter().zip(ba.data()) {
            prop_assert!((-1.0..=1.0).contains(x));
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!(ssim(&a, &a).unwrap().data().iter().all(|&s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn appearance_is_nonnegative(a in image(6, 6), b in image(6, 6)) {
        let ones = Grid::filled(6, 6, 1, GridKind::Mask, 1.0).unwrap();
        prop_assert!(appearance_loss(&a, &b, &ones).unwrap() >= 0.0);
        prop_assert!(appearance_loss(&a, &a, &ones).unwrap() < 1e-15);
    }

    #[test]
    fn robust_clip_is_monotone(x in 0.0f64..2.0, dx in 0.0f64..1.0, eps in 0.01f64..1.0) {
        prop_assert!(robust_clip(x + dx, eps) >= robust_clip(x, eps));
        let slope = (robust_clip(x + 1e-6, eps) - robust_clip(x, eps)) / 1e-6;
        let expected = if x + 1e-6 < eps { 1.0 } else if x >= eps { 0.1 } else { slope };
        prop_assert!((slope - expected).abs() < 1e-6);
    }
}

#[test]
fn identity_warp_is_lossless() {
    let img = Grid::from_fn(9, 11, 2, GridKind::Image, |y, x, c| ((y * 11 + x + c) as f64 * 0.37).sin() * 0.5 + 0.5).unwrap();
    let depth = Grid::filled(9, 11, 1, GridKind::Depth, 2.0).unwrap();
    let k = dfvo_core::Intrinsics::new(10.0, 10.0, 5.0, 4.0).unwrap();
    let (w, valid) = warp_image(&img, &depth, &RigidTransform::identity(), &k).unwrap();
    assert!(appearance_loss(&img, &w, &valid).unwrap() < 1e-15);
}
