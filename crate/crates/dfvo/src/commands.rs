//! The subcommands. Each returns what it printed so tests can inspect it;
//! the binary maps errors to exit codes.

use std::fmt::Write;
use std::path::Path;

use dfvo_core::eval::{ate_windows, depth_metrics, integrate, DepthMetrics, Trajectory};
use dfvo_core::features::FeatureSource;
use dfvo_core::geometry::rescale_intrinsics;
use dfvo_core::losses::{total_loss, LossBreakdown, LossFrame, LossLevel};
use dfvo_core::pyramid::{depth_pyramid, feature_pyramid_pair, image_pyramid};
use dfvo_core::selection::{sample_masks, sample_masks_from};
use dfvo_core::synthetic::{random_motion, ImageTexture, Scene};
use dfvo_core::{random, Grid, GridKind, ProbabilityMap, Pyramid, RigidTransform, SolveReport, LEVELS};

use crate::config::{FeatureChoice, RunConfig};
use crate::frames::{self, Frame, FrameSet};
use crate::report::{self, num};
use crate::{io, CliError};

/// Seeds of consecutive pairs are this far apart; each pair uses one per level.
const PAIR_SEED_STRIDE: u64 = 16;

/// Error of one recovered relative pose against the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    pub rotation_deg: f64,
    /// Relative to the true translation length, or absolute when the true
    /// translation is zero.
    pub translation: f64,
}

pub fn pose_error(estimate: &RigidTransform, truth: &RigidTransform) -> PoseError {
    let rotation_deg = estimate.inverse().compose(truth).rotation_angle().to_degrees();
    let diff = (estimate.translation - truth.translation).norm();
    let len = truth.translation.norm();
    PoseError {
        rotation_deg,
        translation: if len > 0.0 { diff / len } else { diff },
    }
}

fn feature_source(set: &FrameSet, cfg: &RunConfig) -> Result<Option<FeatureSource>, CliError> {
    let have_files = set.frames.iter().all(|f| f.features.is_some());
    match cfg.feature_source {
        FeatureChoice::Dfog if !have_files => Err(CliError::Input(
            "feature source \"dfog\" needs a frame_XXXXXX.features.dfog for every frame".into(),
        )),
        FeatureChoice::Dfog => Ok(None),
        FeatureChoice::Auto if have_files => Ok(None),
        FeatureChoice::Auto => Ok(Some(FeatureSource::Gradient)),
        c => Ok(cfg.feature_extractor(c)),
    }
}

fn features_of(frame: &Frame, source: Option<FeatureSource>) -> Result<Grid, CliError> {
    match source {
        None => Ok(frame.features.clone().expect("checked by feature_source")),
        Some(s) => Ok(s.extract(&frame.image)?),
    }
}

/// Solves every consecutive pair `(k, k+1)` with frame `k` as the target.
/// Each report's pose maps frame-`k` camera points into frame `k+1`.
pub fn solve_frames(set: &FrameSet, cfg: &RunConfig) -> Result<Vec<SolveReport>, CliError> {
    let levels = cfg.pyramid()?;
    let solver = cfg.solver()?;
    let source = feature_source(set, cfg)?;
    let k = &set.intrinsics;
    let mut features: Vec<Grid> = Vec::with_capacity(set.frames.len());
    for f in &set.frames {
        features.push(features_of(f, source)?);
    }
    let mut reports = Vec::with_capacity(set.frames.len() - 1);
    for pair in 0..set.frames.len() - 1 {
        let target = &set.frames[pair];
        let seed = cfg.seed.wrapping_add(PAIR_SEED_STRIDE * pair as u64);
        let (tp, sp) = feature_pyramid_pair(&features[pair], &features[pair + 1], k, &levels)?;
        let depth = depth_pyramid(&target.depth, k)?;
        let masks = match &target.prob {
            Some(p) => sample_masks_from(&ProbabilityMap::new(p)?, cfg.tau, seed)?,
            None => sample_masks(&image_pyramid(&target.image, k)?, &levels, cfg.tau, seed)?,
        };
        reports.push(dfvo_core::solve_pyramid(&tp, &sp, &depth, &masks, &levels, &solver)?);
    }
    Ok(reports)
}

/// Relative poses (frame `k+1` in frame `k`) of the solved pairs.
pub fn relatives(reports: &[SolveReport]) -> Vec<RigidTransform> {
    reports.iter().map(|r| r.pose.inverse()).collect()
}

fn write_solve_outputs(out: &Path, reports: &[SolveReport]) -> Result<Trajectory, CliError> {
    let traj = integrate(&relatives(reports));
    io::write_poses(&out.join("poses.txt"), &traj)?;
    let mut log = String::new();
    let mut kv = Vec::new();
    for (i, r) in reports.iter().enumerate() {
        report::solve_log(i, r, &mut log);
        report::solve_dump(i, r, &mut kv);
    }
    io::write_bytes(&out.join("report.txt"), log.as_bytes())?;
    io::write_bytes(&out.join("report.kv"), report::render_dump(&kv).as_bytes())?;
    Ok(traj)
}

/// `solve`: pyramids from a frame directory, one solve per consecutive
/// pair, integrated trajectory to `out/poses.txt`.
pub fn solve(cfg: &RunConfig, dir: &Path, out: &Path) -> Result<String, CliError> {
    let set = frames::load(dir)?;
    let reports = solve_frames(&set, cfg)?;
    write_solve_outputs(out, &reports)?;
    let mut s = String::new();
    for (i, r) in reports.iter().enumerate() {
        let _ = writeln!(s, "pair {i}: converged {} relative {}", r.converged(), report::pose_values(&r.pose.inverse()));
    }
    let _ = writeln!(s, "wrote {}", out.join("poses.txt").display());
    Ok(s)
}

/// Seeded synthetic snippet described by the `[synth]` section, as a frame
/// set with ground-truth poses.
pub fn synth_frames(cfg: &RunConfig) -> Result<FrameSet, CliError> {
    let s = &cfg.synth;
    let mut scene = Scene::random_plane(cfg.seed, s.height, s.width, s.channels, s.depth, s.slanted);
    if s.image == "affine" {
        scene.image = ImageTexture::Affine {
            offset: 0.5,
            gx: 0.3,
            gy: 0.2,
        };
    }
    let reference = scene.render_view(&RigidTransform::identity())?;
    let step = s.translation * reference.depth.mean();
    let mut rng = random::seeded(cfg.seed.wrapping_add(1000));
    let rel: Vec<RigidTransform> = (1..cfg.snippet_len)
        .map(|_| random_motion(&mut rng, step, s.max_rotation_deg.to_radians()))
        .collect();
    let poses = integrate(&rel);
    let frames = poses
        .poses
        .iter()
        .map(|p| {
            let v = scene.render_view(&p.inverse())?;
            Ok(Frame {
                image: v.image,
                depth: v.depth,
                features: Some(v.features),
                prob: None,
                recon: None,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(FrameSet {
        intrinsics: scene.intrinsics,
        frames,
        poses: Some(poses),
    })
}

/// `synth-solve`: render and export a snippet to `out/frames`, solve it
/// through the same path as `solve`, and check every relative pose.
pub fn synth_solve(cfg: &RunConfig, out: &Path) -> Result<String, CliError> {
    let set = synth_frames(cfg)?;
    let frames_dir = out.join("frames");
    frames::export(&frames_dir, &set)?;
    io::write_bytes(&out.join("config.toml"), cfg.to_toml().as_bytes())?;

    let loaded = frames::load(&frames_dir)?;
    let reports = solve_frames(&loaded, cfg)?;
    write_solve_outputs(out, &reports)?;

    let truth = set.poses.expect("synthetic poses").relatives();
    let s = &cfg.synth;
    let mut text = String::new();
    let mut kv = Vec::new();
    let mut failures = Vec::new();
    for (i, (est, gt)) in relatives(&reports).iter().zip(&truth).enumerate() {
        let e = pose_error(est, gt);
        let ok = e.rotation_deg < s.rotation_tolerance_deg && e.translation < s.translation_tolerance;
        let _ = writeln!(
            text,
            "pair {i}: rotation error {:.3e} deg, translation error {:.3e} {}",
            e.rotation_deg,
            e.translation,
            if ok { "ok" } else { "FAIL" }
        );
        kv.push((format!("pair.{i}.rotation_error_deg"), num(e.rotation_deg)));
        kv.push((format!("pair.{i}.translation_error"), num(e.translation)));
        kv.push((format!("pair.{i}.pass"), ok.to_string()));
        if !ok {
            failures.push(i);
        }
    }
    io::write_bytes(&out.join("errors.kv"), report::render_dump(&kv).as_bytes())?;
    print!("{text}");
    if failures.is_empty() {
        Ok(text)
    } else {
        Err(CliError::Tolerance(format!(
            "pairs {failures:?} exceed {} deg / {} relative",
            s.rotation_tolerance_deg, s.translation_tolerance
        )))
    }
}

/// `eval-pose`: ATE over `n`-frame snippets.
pub fn eval_pose(pred: &Path, gt: &Path, n: usize) -> Result<String, CliError> {
    let (p, g) = (io::read_poses(pred)?, io::read_poses(gt)?);
    let windows = ate_windows(&p, &g, n).map_err(|e| CliError::Input(e.to_string()))?;
    let mean = windows.iter().sum::<f64>() / windows.len() as f64;
    let std = (windows.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / windows.len() as f64).sqrt();
    let rows = vec![
        ("snippet_len".to_string(), n.to_string()),
        ("windows".to_string(), windows.len().to_string()),
        ("ate_mean".to_string(), format!("{mean:.6}")),
        ("ate_std".to_string(), format!("{std:.6}")),
    ];
    let kv = vec![
        ("ate.snippet_len".to_string(), n.to_string()),
        ("ate.windows".to_string(), windows.len().to_string()),
        ("ate.mean".to_string(), num(mean)),
        ("ate.std".to_string(), num(std)),
    ];
    Ok(format!("{}\n{}", report::table(&rows), report::render_dump(&kv)))
}

pub fn depth_eval(cfg: &RunConfig, pred: &Path, gt: &Path, mask: Option<&Path>) -> Result<(DepthMetrics, String), CliError> {
    // Ground truth may hold zeros for missing pixels, so read without the depth check.
    let p = io::read_dfog(pred, GridKind::Feature)?;
    let g = io::read_dfog(gt, GridKind::Feature)?;
    let m = mask.map(|m| io::read_dfog(m, GridKind::Mask)).transpose()?;
    let metrics = depth_metrics(&p, &g, m.as_ref(), &cfg.depth_eval()).map_err(|e| CliError::Input(e.to_string()))?;
    let kv = metrics.key_values();
    let rows: Vec<_> = kv.iter().map(|(k, v)| (k.to_string(), format!("{v:.6}"))).collect();
    let dump: Vec<_> = kv.iter().map(|(k, v)| (format!("depth.{k}"), num(*v))).collect();
    Ok((metrics, format!("{}\n{}", report::table(&rows), report::render_dump(&dump))))
}

/// Four levels by plain decimation, so coarse images stay pixel-aligned
/// with the decimated depth.
fn decimated(g: &Grid) -> Vec<Grid> {
    let mut out = vec![g.clone()];
    for _ in 1..LEVELS {
        let next = out.last().expect("non-empty").decimate2();
        out.push(next);
    }
    out
}

/// `losses`: the full objective over a snippet with ground-truth poses.
pub fn losses(cfg: &RunConfig, dir: &Path) -> Result<(LossBreakdown, String), CliError> {
    let set = frames::load(dir)?;
    let Some(poses) = &set.poses else {
        return Err(CliError::Input(format!("{} has no poses.txt", dir.display())));
    };
    let levels = cfg.pyramid()?;
    let weights = cfg.loss()?;
    let k = &set.intrinsics;
    let mut loss_frames = Vec::with_capacity(set.frames.len());
    let mut masks = Vec::new();
    let mut recon = Vec::new();
    for (i, (f, pose)) in set.frames.iter().zip(&poses.poses).enumerate() {
        let images = decimated(&f.image);
        let depths = decimated(&f.depth);
        let lv = images
            .iter()
            .zip(&depths)
            .enumerate()
            .map(|(l, (im, d))| {
                Ok(LossLevel {
                    image: im.clone(),
                    depth: d.clone(),
                    intrinsics: rescale_intrinsics(k, l + 1)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        loss_frames.push(LossFrame { pose: *pose, levels: lv });

        let seed = cfg.seed.wrapping_add(PAIR_SEED_STRIDE * i as u64);
        let m = match &f.prob {
            Some(p) => sample_masks_from(&ProbabilityMap::new(p)?, cfg.tau, seed)?,
            None => sample_masks(&Pyramid::from_levels(images, k)?, &levels, cfg.tau, seed)?,
        };
        masks.extend(m.into_iter().enumerate().map(|(l, m)| (m, levels.level(l + 1).sparsity)));
        if let (Some(a), Some(b)) = (&f.features, &f.recon) {
            recon.push((a.clone(), b.clone()));
        }
    }
    let out = total_loss(&loss_frames, &masks, &recon, &weights)?;
    let kv: Vec<_> = out.key_values().into_iter().map(|(k, v)| (format!("loss.{k}"), num(v))).collect();
    let rows = vec![
        ("appearance".to_string(), format!("{:.6e}", out.appearance_total())),
        ("smoothness (weighted)".to_string(), format!("{:.6e}", out.weighted_smoothness(&weights))),
        ("sparsity".to_string(), format!("{:.6e}", out.sparsity)),
        ("reconstruction".to_string(), format!("{:.6e}", out.reconstruction)),
        ("total".to_string(), format!("{:.6e}", out.total)),
    ];
    let text = format!("{}\n{}", report::table(&rows), report::render_dump(&kv));
    Ok((out, text))
}
