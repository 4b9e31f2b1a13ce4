//! Ground-truth scenes for verifying the solver and the losses.
//!
//! A scene is a surface seen from a reference camera (the world frame)
//! plus textures attached to it. Textures are functions of the reference
//! camera's normalized image coordinates `(X/Z, Y/Z)`, so every surface
//! point carries a fixed value no matter which view renders it. Views are
//! rendered by intersecting each pixel ray with the surface, in closed
//! form for planes.

use alloc::{vec, vec::Vec};
use core::f64::consts::TAU;

use nalgebra::Vector3;

#[allow(unused_imports)] // float math without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{exp_map, rescale_intrinsics, Intrinsics, RigidTransform, Twist};
use crate::grid::{Grid, GridKind};
use crate::pyramid::{Pyramid, PyramidConfig, LEVELS};
use crate::random::{self, Rng};

/// `amplitude · sin(fx·x + fy·y + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wave {
    pub amplitude: f64,
    pub fx: f64,
    pub fy: f64,
    pub phase: f64,
}

impl Wave {
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.amplitude * (self.fx * x + self.fy * y + self.phase).sin()
    }

    /// Random wave whose wavelength, measured in pixels of a camera with
    /// focal length `focal`, lies in `wavelengths`.
    pub fn random(rng: &mut Rng, focal: f64, wavelengths: (f64, f64), amplitude: (f64, f64)) -> Self {
        let lambda = random::uniform(rng, wavelengths.0, wavelengths.1);
        let omega = TAU * focal / lambda;
        let dir = random::uniform(rng, 0.0, TAU);
        Self {
            amplitude: random::uniform(rng, amplitude.0, amplitude.1),
            fx: omega * dir.cos(),
            fy: omega * dir.sin(),
            phase: random::uniform(rng, 0.0, TAU),
        }
    }
}

/// Multi-channel band-limited texture: a sum of at most 8 waves per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTexture {
    pub channels: Vec<Vec<Wave>>,
}

pub const MAX_WAVES: usize = 8;

impl FeatureTexture {
    pub fn random(rng: &mut Rng, channels: usize, waves: usize, focal: f64, wavelengths: (f64, f64)) -> Self {
        let waves = waves.clamp(1, MAX_WAVES);
        Self {
            channels: (0..channels)
                .map(|_| (0..waves).map(|_| Wave::random(rng, focal, wavelengths, (0.5, 1.0))).collect())
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn eval_into(&self, x: f64, y: f64, out: &mut [f64]) {
        for (o, waves) in out.iter_mut().zip(&self.channels) {
            *o = waves.iter().map(|w| w.eval(x, y)).sum();
        }
    }
}

/// Single-channel intensity in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ImageTexture {
    /// `offset + Σ waves`; keep `offset ± Σ|amplitude|` inside `[0, 1]`.
    Waves { offset: f64, waves: Vec<Wave> },
    /// `offset + gx·x + gy·y`, reproduced exactly by bilinear interpolation
    /// wherever the view-to-view warp is affine.
    Affine { offset: f64, gx: f64, gy: f64 },
}

impl ImageTexture {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            ImageTexture::Waves { offset, waves } => offset + waves.iter().map(|w| w.eval(x, y)).sum::<f64>(),
            ImageTexture::Affine { offset, gx, gy } => offset + gx * x + gy * y,
        }
    }

    pub fn random_waves(rng: &mut Rng, waves: usize, focal: f64, wavelengths: (f64, f64)) -> Self {
        let waves = waves.clamp(1, MAX_WAVES);
        let amp = 0.45 / waves as f64;
        ImageTexture::Waves {
            offset: 0.5,
            waves: (0..waves).map(|_| Wave::random(rng, focal, wavelengths, (0.5 * amp, amp))).collect(),
        }
    }
}

/// Geometry of the scene in the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Surface {
    /// Points with `normal · X = offset`.
    Plane { normal: Vector3<f64>, offset: f64 },
    /// Depth `base · (1 + Σ waves(x̂, ŷ))` along the reference ray through `(x̂, ŷ)`.
    Harmonic { base: f64, waves: Vec<Wave> },
}

impl Surface {
    pub fn fronto_parallel(depth: f64) -> Self {
        Surface::Plane {
            normal: Vector3::new(0.0, 0.0, 1.0),
            offset: depth,
        }
    }

    /// Plane through `(0, 0, depth)` with unit normal tilted by `(tx, ty)` radians.
    pub fn slanted(depth: f64, tx: f64, ty: f64) -> Self {
        let n = Vector3::new(ty.sin(), tx.sin(), 1.0).normalize();
        Surface::Plane {
            normal: n,
            offset: n.z * depth,
        }
    }

    fn reference_depth(base: f64, waves: &[Wave], x: f64, y: f64) -> f64 {
        base * (1.0 + waves.iter().map(|w| w.eval(x, y)).sum::<f64>())
    }

    /// Ray parameter where `origin + λ dir` meets the surface.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Surface::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                let lambda = (offset - normal.dot(origin)) / denom;
                (lambda.is_finite() && lambda > 0.0).then_some(lambda)
            }
            Surface::Harmonic { base, waves } => {
                let f = |lambda: f64| {
                    let p = origin + dir * lambda;
                    p.z - Self::reference_depth(*base, waves, p.x / p.z, p.y / p.z)
                };
                // Start on the mean-depth plane, then Newton with a numeric slope.
                let mut lambda = (base - origin.z) / dir.z;
                if !(lambda > 0.0) {
                    return None;
                }
                for _ in 0..60 {
                    let v = f(lambda);
                    let h = 1e-7 * lambda.abs().max(1.0);
                    let slope = (f(lambda + h) - f(lambda - h)) / (2.0 * h);
                    if slope == 0.0 || !slope.is_finite() {
                        return None;
                    }
                    let step = v / slope;
                    lambda -= step;
                    if step.abs() <= 1e-14 * lambda.abs() {
                        break;
                    }
                }
                (lambda.is_finite() && lambda > 0.0 && f(lambda).abs() < 1e-9).then_some(lambda)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub intrinsics: Intrinsics,
    pub surface: Surface,
    pub features: FeatureTexture,
    pub image: ImageTexture,
}

/// One rendered view: features, intensity and true depth.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub features: Grid,
    pub image: Grid,
    pub depth: Grid,
    pub intrinsics: Intrinsics,
}

impl Scene {
    /// Camera with focal length `0.6·W` and the principal point at the image center.
    pub fn default_intrinsics(height: usize, width: usize) -> Intrinsics {
        let f = 0.6 * width as f64;
        Intrinsics {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    /// Seeded random textured plane at mean depth `depth`; tilted up to
    /// ±25° when `slanted`.
    pub fn random_plane(seed: u64, height: usize, width: usize, channels: usize, depth: f64, slanted: bool) -> Self {
        let mut rng = random::seeded(seed);
        let intrinsics = Self::default_intrinsics(height, width);
        let surface = if slanted {
            let max = 25f64.to_radians();
            Surface::slanted(depth, random::uniform(&mut rng, -max, max), random::uniform(&mut rng, -max, max))
        } else {
            Surface::fronto_parallel(depth)
        };
        let wavelengths = default_wavelengths(width);
        Self {
            height,
            width,
            intrinsics,
            surface,
            features: FeatureTexture::random(&mut rng, channels, 4, intrinsics.fx, wavelengths),
            image: ImageTexture::random_waves(&mut rng, 4, intrinsics.fx, wavelengths),
        }
    }

    /// Surface with smooth random relief of relative amplitude up to `relief`.
    pub fn random_relief(seed: u64, height: usize, width: usize, channels: usize, depth: f64, relief: f64) -> Self {
        let mut scene = Self::random_plane(seed, height, width, channels, depth, false);
        let mut rng = random::seeded(seed ^ 0x5eed_5eed);
        let waves = (0..3)
            .map(|_| Wave::random(&mut rng, scene.intrinsics.fx, (0.8 * width as f64, 2.0 * width as f64), (0.0, relief / 3.0)))
            .collect();
        scene.surface = Surface::Harmonic { base: depth, waves };
        scene
    }

    /// Renders the view whose camera sees reference-frame points as
    /// `view_from_reference · X`, at pyramid `level` (1 = full resolution).
    pub fn render_level(&self, view_from_reference: &RigidTransform, level: usize) -> Result<RenderedView> {
        let k = rescale_intrinsics(&self.intrinsics, level)?;
        let scale = 1usize << (level - 1);
        let (h, w) = (self.height.div_ceil(scale), self.width.div_ceil(scale));
        let ch = self.features.len();

        let rt = view_from_reference.rotation.transpose();
        let origin = -(rt * view_from_reference.translation);
        let mut features = Vec::with_capacity(h * w * ch);
        let mut image = Vec::with_capacity(h * w);
        let mut depth = Vec::with_capacity(h * w);
        let mut buf = vec![0.0; ch];
        for y in 0..h {
            for x in 0..w {
                let ray = Vector3::new((x as f64 - k.cx) / k.fx, (y as f64 - k.cy) / k.fy, 1.0);
                let dir = rt * ray;
                let lambda = self.surface.intersect(&origin, &dir).ok_or(Error::SceneBehindCamera)?;
                let p = origin + dir * lambda;
                if !(p.z > 0.0) {
                    return Err(Error::SceneBehindCamera);
                }
                let (u, v) = (p.x / p.z, p.y / p.z);
                self.features.eval_into(u, v, &mut buf);
                features.extend_from_slice(&buf);
                image.push(self.image.eval(u, v));
                depth.push(lambda);
            }
        }
        Ok(RenderedView {
            features: Grid::new(h, w, ch.max(1), GridKind::Feature, if ch == 0 { vec![0.0; h * w] } else { features })?,
            image: Grid::new(h, w, 1, GridKind::Image, image)?,
            depth: Grid::new(h, w, 1, GridKind::Depth, depth)?,
            intrinsics: k,
        })
    }

    pub fn render_view(&self, view_from_reference: &RigidTransform) -> Result<RenderedView> {
        self.render_level(view_from_reference, 1)
    }
}

/// Texture wavelengths (in full-resolution pixels) used by the random scenes.
pub fn default_wavelengths(width: usize) -> (f64, f64) {
    let w = width as f64;
    (0.4 * w, 1.0 * w)
}

/// Frame-to-frame motions: `relatives[k]` is the pose of camera `k + 1`
/// expressed in camera `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub relatives: Vec<RigidTransform>,
}

impl TrajectorySpec {
    pub fn new(relatives: Vec<RigidTransform>) -> Result<Self> {
        if relatives.is_empty() {
            return Err(Error::InvalidArgument("a trajectory needs at least 2 frames".into()));
        }
        Ok(Self { relatives })
    }

    pub fn stationary(frames: usize) -> Result<Self> {
        Self::new(vec![RigidTransform::identity(); frames.saturating_sub(1)])
    }

    pub fn frames(&self) -> usize {
        self.relatives.len() + 1
    }

    /// Camera-to-reference poses, starting at the identity.
    pub fn absolute(&self) -> Vec<RigidTransform> {
        let mut out = Vec::with_capacity(self.frames());
        out.push(RigidTransform::identity());
        for rel in &self.relatives {
            let next = out.last().expect("non-empty").compose(rel);
            out.push(next);
        }
        out
    }
}

/// Random motion with `‖t‖ = translation` and a rotation angle drawn
/// uniformly from `[0, max_rotation]` radians about a random axis.
pub fn random_motion(rng: &mut Rng, translation: f64, max_rotation: f64) -> RigidTransform {
    let dir = random_unit(rng);
    let axis = random_unit(rng);
    let angle = random::uniform(rng, 0.0, max_rotation);
    let rot = exp_map(&Twist::new(Vector3::zeros(), axis * angle));
    RigidTransform {
        rotation: rot.rotation,
        translation: dir * translation,
    }
}

fn random_unit(rng: &mut Rng) -> Vector3<f64> {
    let z = random::uniform(rng, -1.0, 1.0);
    let phi = random::uniform(rng, 0.0, TAU);
    let r = (1.0 - z * z).sqrt();
    Vector3::new(r * phi.cos(), r * phi.sin(), z)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnippetFrame {
    /// Camera-to-reference pose.
    pub pose: RigidTransform,
    /// Levels 1 through 4, each rendered exactly.
    pub levels: Vec<RenderedView>,
}

impl SnippetFrame {
    pub fn view(&self) -> &RenderedView {
        &self.levels[0]
    }
}

/// Renders every frame of `traj` at all four pyramid levels.
pub fn make_snippet(scene: &Scene, traj: &TrajectorySpec) -> Result<Vec<SnippetFrame>> {
    traj.absolute()
        .into_iter()
        .map(|pose| {
            let view_from_reference = pose.inverse();
            let levels = (1..=4)
                .map(|l| scene.render_level(&view_from_reference, l))
                .collect::<Result<Vec<_>>>()?;
            Ok(SnippetFrame { pose, levels })
        })
        .collect()
}

/// Target-to-source transform between two camera-to-reference poses.
pub fn relative_transform(target_pose: &RigidTransform, source_pose: &RigidTransform) -> RigidTransform {
    source_pose.inverse().compose(target_pose)
}

/// A target view (the reference camera) and a source view, as solver-ready
/// pyramids rendered analytically at every level.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPair {
    pub target: Pyramid,
    pub source: Pyramid,
    pub depth: Pyramid,
    pub target_images: Pyramid,
    pub source_images: Pyramid,
    /// Maps target-camera points to source-camera points.
    pub truth: RigidTransform,
}

/// Renders the reference view and the view of a camera whose pose in the
/// reference frame is `motion`. Level `l` keeps the first `c_l` feature
/// channels of `cfg`.
pub fn render_pair(scene: &Scene, motion: &RigidTransform, cfg: &PyramidConfig) -> Result<RenderedPair> {
    let truth = motion.inverse();
    let mut target = Vec::with_capacity(LEVELS);
    let mut source = Vec::with_capacity(LEVELS);
    let mut depth = Vec::with_capacity(LEVELS);
    let mut target_images = Vec::with_capacity(LEVELS);
    let mut source_images = Vec::with_capacity(LEVELS);
    for l in 1..=LEVELS {
        let c = cfg.level(l).channels;
        let t = scene.render_level(&RigidTransform::identity(), l)?;
        let s = scene.render_level(&truth, l)?;
        target.push(t.features.select_channels(c));
        source.push(s.features.select_channels(c));
        depth.push(t.depth);
        target_images.push(t.image);
        source_images.push(s.image);
    }
    let k = &scene.intrinsics;
    Ok(RenderedPair {
        target: Pyramid::from_levels(target, k)?,
        source: Pyramid::from_levels(source, k)?,
        depth: Pyramid::from_levels(depth, k)?,
        target_images: Pyramid::from_levels(target_images, k)?,
        source_images: Pyramid::from_levels(source_images, k)?,
        truth,
    })
}

/// Image size of the benchmark scenes.
pub const BENCHMARK_SIZE: (usize, usize) = (240, 320);

/// Seeded plane scene and motion used by the pose-recovery benchmarks:
/// mean depth 5 to 10, fronto-parallel for even seeds and slanted for odd
/// ones, `‖t‖ = 0.05·z̄` with z̄ the mean reference depth, rotation ≤ 2°.
pub fn benchmark_case(seed: u64) -> Result<(Scene, RigidTransform)> {
    let (h, w) = BENCHMARK_SIZE;
    let depth = 5.0 + (seed % 6) as f64;
    let scene = Scene::random_plane(seed, h, w, 16, depth, seed % 2 == 1);
    let mean_depth = scene.render_level(&RigidTransform::identity(), 4)?.depth.mean();
    let mut rng = random::seeded(seed.wrapping_add(1000));
    let motion = random_motion(&mut rng, 0.05 * mean_depth, 2f64.to_radians());
    Ok((scene, motion))
}

/// Replaces `round(fraction · H·W)` seeded pixels with noise: each channel
/// becomes `±magnitude` with a random sign. Returns the grid and the sorted
/// linear indices of the replaced pixels.
pub fn corrupt_with_indices(grid: &Grid, fraction: f64, magnitude: f64, seed: u64) -> Result<(Grid, Vec<usize>)> {
    plant(grid, fraction, magnitude, seed, |_, noise| noise)
}

/// Like [`corrupt_with_indices`] but adds the `±magnitude` noise to the
/// chosen pixels, so every planted residual carries about
/// `C · magnitude²` energy regardless of the underlying features.
pub fn offset_with_indices(grid: &Grid, fraction: f64, magnitude: f64, seed: u64) -> Result<(Grid, Vec<usize>)> {
    plant(grid, fraction, magnitude, seed, |v, noise| v + noise)
}

fn plant(grid: &Grid, fraction: f64, magnitude: f64, seed: u64, apply: impl Fn(f64, f64) -> f64) -> Result<(Grid, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(alloc::format!("fraction must lie in [0, 1], got {fraction}")));
    }
    let n = grid.len_pixels();
    let count = (fraction * n as f64).round() as usize;
    let mut rng = random::seeded(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in 0..count {
        let j = i + random::below(&mut rng, n - i);
        order.swap(i, j);
    }
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();
    let mut out = grid.clone();
    let w = grid.width();
    for &idx in &chosen {
        for v in out.pixel_mut(idx / w, idx % w) {
            let noise = if random::coin(&mut rng) { magnitude } else { -magnitude };
            *v = apply(*v, noise);
        }
    }
    Ok((out, chosen))
}

pub fn corrupt(grid: &Grid, fraction: f64, magnitude: f64, seed: u64) -> Result<Grid> {
    corrupt_with_indices(grid, fraction, magnitude, seed).map(|(g, _)| g)
}
