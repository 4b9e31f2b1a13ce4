//! View-synthesis and regularization losses, used as evaluation metrics
//! for a given depth, pose and image configuration.

use alloc::{format, string::String, vec, vec::Vec};


#[allow(unused_imports)] // float math without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{warp_point, Intrinsics, Pixel, RigidTransform};
use crate::grid::{bilinear_sample_into, Grid, GridKind};
use crate::selection::{sparsity_kl, SelectionMask};

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;
pub const DSSIM_KNEE: f64 = 0.15;
pub const L1_KNEE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub smoothness: f64,
    pub sparsity: f64,
    pub reconstruction: f64,
    /// SSIM share of the appearance term.
    pub alpha: f64,
    pub dssim_knee: f64,
    pub l1_knee: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            smoothness: 0.1,
            sparsity: 0.01,
            reconstruction: 0.01,
            alpha: 0.85,
            dssim_knee: DSSIM_KNEE,
            l1_knee: L1_KNEE,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.smoothness, self.sparsity, self.reconstruction].iter().all(|w| *w >= 0.0 && w.is_finite())
            && (0.0..=1.0).contains(&self.alpha)
            && [self.dssim_knee, self.l1_knee].iter().all(|k| *k > 0.0 && k.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid loss weights {self:?}")))
        }
    }

    /// Weight of the smoothness term at pyramid `level` (1-based).
    pub fn smoothness_at(&self, level: usize) -> f64 {
        self.smoothness / (1u64 << (level - 1)) as f64
    }
}

/// Synthesizes the target view by sampling `source` at the pixels where
/// `target_depth` lands under `t` (target camera to source camera).
/// Returns the image and a mask that is 1 where the sample is valid.
pub fn warp_image(source: &Grid, target_depth: &Grid, t: &RigidTransform, k: &Intrinsics) -> Result<(Grid, Grid)> {
    let (h, w) = (target_depth.height(), target_depth.width());
    if source.height() != h || source.width() != w || target_depth.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{} vs depth {}x{}x{}",
            source.height(),
            source.width(),
            h,
            w,
            target_depth.channels()
        )));
    }
    let ch = source.channels();
    let mut out = vec![0.0; h * w * ch];
    let mut valid = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let z = target_depth.get(y, x, 0);
            if let Ok((p, _)) = warp_point(Pixel::new(x as f64, y as f64), z, t, k) {
                if bilinear_sample_into(source, p, &mut out[i * ch..(i + 1) * ch]) {
                    valid[i] = 1.0;
                    continue;
                }
            }
            out[i * ch..(i + 1) * ch].fill(0.0);
        }
    }
    Ok((
        Grid::new(h, w, ch, source.kind(), out)?,
        Grid::new(h, w, 1, GridKind::Mask, valid)?,
    ))
}

fn same_shape(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )))
    }
}

/// Per-pixel, per-channel SSIM over 3×3 uniform windows with replicate padding.
pub fn ssim(a: &Grid, b: &Grid) -> Result<Grid> {
    same_shape(a, b)?;
    let (h, w, ch) = (a.height(), a.width(), a.channels());
    let clampy = |y: isize| y.clamp(0, h as isize - 1) as usize;
    let clampx = |x: isize| x.clamp(0, w as isize - 1) as usize;
    let mut out = Vec::with_capacity(h * w * ch);
    for y in 0..h as isize {
        for x in 0..w as isize {
            for c in 0..ch {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (yy, xx) = (clampy(y + dy), clampx(x + dx));
                        let (va, vb) = (a.get(yy, xx, c), b.get(yy, xx, c));
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / 9.0, sb / 9.0);
                let va = saa / 9.0 - ma * ma;
                let vb = sbb / 9.0 - mb * mb;
                let cov = sab / 9.0 - ma * mb;
                let s = (2.0 * ma * mb + C1) * (2.0 * cov + C2) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                out.push(s.clamp(-1.0, 1.0));
            }
        }
    }
    Grid::new(h, w, ch, GridKind::Image, out)
}

/// Linear below the knee `eps`, slope 0.1 above it; continuous at the knee.
#[inline]
pub fn robust_clip(x: f64, eps: f64) -> f64 {
    if x < eps {
        x
    } else {
        0.1 * x + 0.9 * eps
    }
}

/// Mean of `α·clip(DSSIM, 0.15) + (1−α)·clip(L1, 0.3)` over the pixels
/// whose whole 3×3 SSIM window is valid.
pub fn appearance_loss(target: &Grid, warped: &Grid, validity: &Grid) -> Result<f64> {
    appearance_loss_with(target, warped, validity, &LossWeights::default())
}

/// [`appearance_loss`] with the α and knees taken from `w`.
pub fn appearance_loss_with(target: &Grid, warped: &Grid, validity: &Grid, w: &LossWeights) -> Result<f64> {
    let (alpha, dssim_knee, l1_knee) = (w.alpha, w.dssim_knee, w.l1_knee);
    same_shape(target, warped)?;
    let (h, w, ch) = (target.height(), target.width(), target.channels());
    if validity.height() != h || validity.width() != w || validity.channels() != 1 {
        return Err(Error::ShapeMismatch("validity grid must be single-channel and match the images".into()));
    }
    let s = ssim(target, warped)?;
    let window_valid = |y: usize, x: usize| {
        (y.saturating_sub(1)..=(y + 1).min(h - 1))
            .all(|yy| (x.saturating_sub(1)..=(x + 1).min(w - 1)).all(|xx| validity.get(yy, xx, 0) >= 0.5))
    };
    let (mut sum, mut count) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if !window_valid(y, x) {
                continue;
            }
            let mut dssim = 0.0;
            let mut l1 = 0.0;
            for c in 0..ch {
                dssim += (1.0 - s.get(y, x, c)) / 2.0;
                l1 += (target.get(y, x, c) - warped.get(y, x, c)).abs();
            }
            dssim /= ch as f64;
            l1 /= ch as f64;
            sum += alpha * robust_clip(dssim, dssim_knee) + (1.0 - alpha) * robust_clip(l1, l1_knee);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(sum / count as f64)
}

/// Edge-aware smoothness of depth `z` with forward differences, each
/// direction averaged over the pixels where its difference exists.
pub fn smoothness_loss(z: &Grid, image: &Grid) -> Result<f64> {
    let (h, w) = (z.height(), z.width());
    if image.height() != h || image.width() != w || z.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "depth {}x{}x{} vs image {}x{}",
            h,
            w,
            z.channels(),
            image.height(),
            image.width()
        )));
    }
    let ch = image.channels() as f64;
    let grad = |y0: usize, x0: usize, y1: usize, x1: usize| {
        image.pixel(y1, x1).iter().zip(image.pixel(y0, x0)).map(|(a, b)| (a - b).abs()).sum::<f64>() / ch
    };
    let mut total = 0.0;
    if w > 1 {
        let mut s = 0.0;
        for y in 0..h {
            for x in 0..w - 1 {
                s += (z.get(y, x + 1, 0) - z.get(y, x, 0)).abs() * (-grad(y, x, y, x + 1)).exp();
            }
        }
        total += s / (h * (w - 1)) as f64;
    }
    if h > 1 {
        let mut s = 0.0;
        for y in 0..h - 1 {
            for x in 0..w {
                s += (z.get(y + 1, x, 0) - z.get(y, x, 0)).abs() * (-grad(y, x, y + 1, x)).exp();
            }
        }
        total += s / ((h - 1) * w) as f64;
    }
    Ok(total)
}

/// Mean squared difference between an input and its reconstruction.
pub fn reconstruction_loss(input: &Grid, output: &Grid) -> Result<f64> {
    same_shape(input, output)?;
    let n = input.data().len() as f64;
    Ok(input.data().iter().zip(output.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

/// Depth from a network disparity output `x ∈ [0, 1]`: `1 / (10x + 0.01)`.
pub fn depth_from_disparity(x: f64) -> f64 {
    1.0 / (10.0 * x + 0.01)
}

pub fn depth_grid_from_disparity(disp: &Grid) -> Result<Grid> {
    disp.map(depth_from_disparity).with_kind(GridKind::Depth)
}

/// One level of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLevel {
    pub image: Grid,
    pub depth: Grid,
    pub intrinsics: Intrinsics,
}

/// A frame of a snippet: its levels (finest first) and camera-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LossFrame {
    pub pose: RigidTransform,
    pub levels: Vec<LossLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub target: usize,
    pub source: usize,
    pub level: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessTerm {
    pub frame: usize,
    pub level: usize,
    pub value: f64,
}

/// Unweighted parts plus the weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub appearance: Vec<PairTerm>,
    pub smoothness: Vec<SmoothnessTerm>,
    pub sparsity: f64,
    pub reconstruction: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn appearance_total(&self) -> f64 {
        self.appearance.iter().map(|t| t.value).sum()
    }

    pub fn weighted_smoothness(&self, w: &LossWeights) -> f64 {
        self.smoothness.iter().map(|t| w.smoothness_at(t.level) * t.value).sum()
    }

    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        self.appearance_total()
            + self.weighted_smoothness(w)
            + w.sparsity * self.sparsity
            + w.reconstruction * self.reconstruction
    }

    /// Flat `key = value` pairs in a stable order.
    pub fn key_values(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for t in &self.appearance {
            out.push((format!("appearance.l{}.{}_{}", t.level, t.target, t.source), t.value));
        }
        for t in &self.smoothness {
            out.push((format!("smoothness.l{}.{}", t.level, t.frame), t.value));
        }
        out.push(("appearance".into(), self.appearance_total()));
        out.push(("sparsity".into(), self.sparsity));
        out.push(("reconstruction".into(), self.reconstruction));
        out.push(("total".into(), self.total));
        out
    }
}

/// Full objective over a snippet: appearance for every ordered frame pair
/// at every level, level-weighted smoothness, the sparsity penalty of each
/// `(mask, target rate)` and the reconstruction error of each `(input, output)`.
pub fn total_loss(
    frames: &[LossFrame],
    masks: &[(SelectionMask, f64)],
    reconstructions: &[(Grid, Grid)],
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 frames, got {}", frames.len())));
    }
    let levels = frames[0].levels.len();
    if levels == 0 || frames.iter().any(|f| f.levels.len() != levels) {
        return Err(Error::ShapeMismatch("every frame needs the same non-zero number of levels".into()));
    }

    let mut appearance = Vec::new();
    for (i, target) in frames.iter().enumerate() {
        for (j, source) in frames.iter().enumerate() {
            if i == j {
                continue;
            }
            let t = source.pose.inverse().compose(&target.pose);
            for l in 0..levels {
                let (tl, sl) = (&target.levels[l], &source.levels[l]);
                let (warped, valid) = warp_image(&sl.image, &tl.depth, &t, &tl.intrinsics)?;
                let value = appearance_loss_with(&tl.image, &warped, &valid, weights)?;
                appearance.push(PairTerm {
                    target: i,
                    source: j,
                    level: l + 1,
                    value,
                });
            }
        }
    }

    let mut smoothness = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        for (l, lv) in f.levels.iter().enumerate() {
            smoothness.push(SmoothnessTerm {
                frame: i,
                level: l + 1,
                value: smoothness_loss(&lv.depth, &lv.image)?,
            });
        }
    }

    // Folds from +0.0: an empty float `sum()` is -0.0.
    let sparsity = masks.iter().fold(0.0, |acc, (m, rho)| acc + sparsity_kl(m, *rho));
    let mut reconstruction = 0.0;
    for (a, b) in reconstructions {
        reconstruction += reconstruction_loss(a, b)?;
    }

    let mut out = LossBreakdown {
        appearance,
        smoothness,
        sparsity,
        reconstruction,
        total: 0.0,
    };
    out.total = out.weighted_total(weights);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn img(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Grid {
        Grid::from_fn(h, w, 1, GridKind::Image, |y, x, _| f(y, x)).unwrap()
    }

    #[test]
    fn robust_clip_examples() {
        assert_eq!(robust_clip(0.1, 0.15), 0.1);
        assert_eq!(robust_clip(0.15, 0.15), 0.1 * 0.15 + 0.9 * 0.15);
        assert!((robust_clip(0.15, 0.15) - 0.15).abs() < 1e-15);
        assert!((robust_clip(0.5, 0.3) - 0.32).abs() < 1e-15);
    }

    #[test]
    fn ssim_examples() {
        let a = img(6, 7, |y, x| ((y * 7 + x) as f64 * 0.13).sin() * 0.5 + 0.5);
        assert!(ssim(&a, &a).unwrap().data().iter().all(|&s| s == 1.0));
        let checker = img(6, 6, |y, x| ((y + x) % 2) as f64);
        let inv = checker.map(|v| 1.0 - v);
        let s = ssim(&checker, &inv).unwrap();
        assert!(s.data().iter().all(|&v| v < 0.0));
        let b = a.map(|v| v * 0.8 + 0.05);
        let (ab, ba) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        assert!(ab.data().iter().zip(ba.data()).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn appearance_examples() {
        let a = img(5, 5, |y, x| (y + x) as f64 * 0.05);
        let ones = Grid::filled(5, 5, 1, GridKind::Mask, 1.0).unwrap();
        assert_eq!(appearance_loss(&a, &a, &ones).unwrap(), 0.0);

        let zero = Grid::filled(5, 5, 1, GridKind::Image, 0.0).unwrap();
        let one = Grid::filled(5, 5, 1, GridKind::Image, 1.0).unwrap();
        let s = ssim(&zero, &one).unwrap().get(0, 0, 0);
        let dssim = (1.0 - s) / 2.0;
        assert!((dssim - 0.5).abs() < 1e-3);
        let expected = 0.85 * robust_clip(dssim, 0.15) + 0.15 * robust_clip(1.0, 0.3);
        assert!((appearance_loss(&zero, &one, &ones).unwrap() - expected).abs() < 1e-15);
        let hand = 0.85 * robust_clip(0.5, 0.15) + 0.15 * robust_clip(1.0, 0.3);
        assert!((expected - hand).abs() < 1e-4);

        let none = Grid::filled(5, 5, 1, GridKind::Mask, 0.0).unwrap();
        assert_eq!(appearance_loss(&a, &a, &none), Err(Error::NoValidPixels));
    }

    #[test]
    fn smoothness_examples() {
        let flat = Grid::filled(6, 6, 1, GridKind::Depth, 2.0).unwrap();
        let edge = img(6, 6, |_, x| if x < 3 { 0.0 } else { 1.0 });
        assert_eq!(smoothness_loss(&flat, &edge).unwrap(), 0.0);
        let ramp = Grid::from_fn(6, 6, 1, GridKind::Depth, |_, x, _| 1.0 + 0.5 * x as f64).unwrap();
        let constant = Grid::filled(6, 6, 1, GridKind::Image, 0.3).unwrap();
        assert!((smoothness_loss(&ramp, &constant).unwrap() - 0.5).abs() < 1e-15);
        assert!(smoothness_loss(&ramp, &edge).unwrap() < 0.5);
    }

    #[test]
    fn identity_warp_reproduces_source() {
        let k = Intrinsics::new(10.0, 10.0, 4.0, 3.0).unwrap();
        let src = img(7, 9, |y, x| (y as f64 * 0.3 + x as f64 * 0.7).cos());
        let d = Grid::filled(7, 9, 1, GridKind::Depth, 3.0).unwrap();
        let (w, v) = warp_image(&src, &d, &RigidTransform::identity(), &k).unwrap();
        assert!(w.data().iter().zip(src.data()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(v.data().iter().all(|&x| x == 1.0));
        let far = RigidTransform::from_translation(Vector3::new(2.0, 0.0, 0.0));
        let (_, v) = warp_image(&src, &d, &far, &k).unwrap();
        assert!(v.data().contains(&0.0));
    }

    #[test]
    fn smoothness_weight_halves_per_level() {
        let w = LossWeights::default();
        for l in 1..4 {
            assert_eq!(w.smoothness_at(l), 2.0 * w.smoothness_at(l + 1));
        }
    }
}
