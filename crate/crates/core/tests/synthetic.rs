use dfvo_core::geometry::{backproject, exp_map, project, Pixel, Twist};
use dfvo_core::grid::bilinear_sample;
use dfvo_core::losses::warp_image;
use dfvo_core::synthetic::{corrupt_with_indices, make_snippet, random_motion, ImageTexture, Scene, Surface, TrajectorySpec};
use dfvo_core::{random, GridKind, RigidTransform};
use nalgebra::{Vector3, Vector6};

fn slanted_scene(seed: u64) -> Scene {
    Scene::random_plane(seed, 40, 56, 3, 6.0, true)
}

fn plane(scene: &Scene) -> (Vector3<f64>, f64) {
    match scene.surface {
        Surface::Plane { normal, offset } => (normal, offset),
        _ => unreachable!(),
    }
}

#[test]
fn slanted_plane_views_follow_the_homography() {
    for seed in 0..5 {
        let scene = slanted_scene(seed);
        let (n, d) = plane(&scene);
        let mut rng = random::seeded(seed);
        let view = random_motion(&mut rng, 0.4, 0.1).inverse();
        let rendered = scene.render_view(&view).unwrap();
        let k = scene.intrinsics.matrix();
        let h = k * (view.rotation + view.translation * n.transpose() / d) * k.try_inverse().unwrap();
        let h_inv = h.try_inverse().unwrap();
        let mut expected = [0.0; 3];
        for y in (0..40).step_by(3) {
            for x in (0..56).step_by(5) {
                let r = h_inv * Vector3::new(x as f64, y as f64, 1.0);
                let (u, v) = (r.x / r.z, r.y / r.z);
                let kk = &scene.intrinsics;
                scene.features.eval_into((u - kk.cx) / kk.fx, (v - kk.cy) / kk.fy, &mut expected);
                for (c, want) in expected.iter().enumerate() {
                    let got = rendered.features.get(y, x, c);
                    assert!((got - want).abs() < 1e-10, "seed {seed} ({y},{x},{c}): {got} vs {want}");
                }
            }
        }
    }
}

#[test]
fn warping_the_source_reproduces_the_target() {
    // Affine texture on a fronto-parallel plane under pure translation:
    // the warp is affine in pixels, so bilinear sampling is exact.
    let mut scene = Scene::random_plane(3, 36, 48, 2, 5.0, false);
    scene.image = ImageTexture::Affine { offset: 0.5, gx: 0.4, gy: -0.3 };
    let motion = RigidTransform::from_translation(Vector3::new(0.15, -0.1, 0.2));
    let truth = motion.inverse();
    let target = scene.render_view(&RigidTransform::identity()).unwrap();
    let source = scene.render_view(&truth).unwrap();
    let (warped, valid) = warp_image(&source.image, &target.depth, &truth, &scene.intrinsics).unwrap();
    let mut count = 0;
    for y in 0..36 {
        for x in 0..48 {
            if valid.get(y, x, 0) == 1.0 {
                assert!((warped.get(y, x, 0) - target.image.get(y, x, 0)).abs() < 1e-6);
                count += 1;
            }
        }
    }
    assert!(count > 36 * 48 / 2);
}

#[test]
fn depths_agree_across_views_of_a_plane() {
    for seed in 0..5 {
        let scene = slanted_scene(seed);
        let mut rng = random::seeded(seed + 10);
        let truth = random_motion(&mut rng, 0.5, 0.1).inverse();
        let target = scene.render_view(&RigidTransform::identity()).unwrap();
        let source = scene.render_view(&truth).unwrap();
        // Inverse depth on a plane is affine in pixels, so bilinear sampling is exact.
        let inv = source.depth.map(|z| 1.0 / z).with_kind(GridKind::Mask).unwrap();
        let k = &scene.intrinsics;
        let mut checked = 0;
        for y in 0..40 {
            for x in 0..56 {
                let xs = truth.transform_point(&backproject(Pixel::new(x as f64, y as f64), target.depth.get(y, x, 0), k).unwrap());
                let p = project(&xs, k).unwrap();
                let (s, ok) = bilinear_sample(&inv, p);
                if ok {
                    assert!((1.0 / s[0] - xs.z).abs() < 1e-8 * xs.z, "seed {seed} ({y},{x})");
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }
}

#[test]
fn snippet_frames_chain_consistently() {
    let scene = slanted_scene(7);
    let step = exp_map(&Twist::from_vector(&Vector6::new(0.0, 0.0, 0.3, 0.0, 0.01, 0.0)));
    let traj = TrajectorySpec::new(vec![step, step]).unwrap();
    let frames = make_snippet(&scene, &traj).unwrap();
    assert_eq!(frames.len(), 3);
    let rel = |i: usize, j: usize| frames[j].pose.inverse().compose(&frames[i].pose);
    let two = rel(1, 2).compose(&rel(0, 1));
    let direct = rel(0, 2);
    assert!((two.rotation - direct.rotation).amax() < 1e-12 && (two.translation - direct.translation).amax() < 1e-12);
    for f in &frames {
        assert_eq!(f.levels.len(), 4);
        assert_eq!((f.levels[3].image.height(), f.levels[3].image.width()), (5, 7));
    }

    let still = make_snippet(&scene, &TrajectorySpec::stationary(3).unwrap()).unwrap();
    assert!(still.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn corruption_is_seeded_and_sized() {
    let scene = slanted_scene(1);
    let f = scene.render_view(&RigidTransform::identity()).unwrap().features;
    let (a, idx) = corrupt_with_indices(&f, 0.1, 4.0, 5).unwrap();
    assert_eq!(idx.len(), (0.1 * (40 * 56) as f64).round() as usize);
    assert_eq!(corrupt_with_indices(&f, 0.1, 4.0, 5).unwrap().1, idx);
    assert_ne!(corrupt_with_indices(&f, 0.1, 4.0, 6).unwrap().1, idx);
    for &i in &idx {
        assert!(a.pixel(i / 56, i % 56).iter().all(|v| v.abs() == 4.0));
    }
    let changed = (0..40 * 56).filter(|&i| a.pixel(i / 56, i % 56) != f.pixel(i / 56, i % 56)).count();
    assert_eq!(changed, idx.len());
}
