//! Four-level image, feature and depth pyramids.

use alloc::{format, vec::Vec};

use crate::error::{Error, Result};
use crate::geometry::{rescale_intrinsics, Intrinsics};
use crate::grid::{channel_stats, downsample2, normalize_with, zscore_normalize, Grid, PatchSpec};

pub const LEVELS: usize = 4;

/// Per-level settings: feature channels, patch size and target sparsity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelConfig {
    pub channels: usize,
    pub patch: PatchSpec,
    pub sparsity: f64,
}

impl LevelConfig {
    pub fn new(channels: usize, patch: usize, sparsity: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("channel count must be >= 1".into()));
        }
        if !(sparsity > 0.0 && sparsity < 1.0) {
            return Err(Error::InvalidArgument(format!("sparsity must lie in (0, 1), got {sparsity}")));
        }
        Ok(Self {
            channels,
            patch: PatchSpec::new(patch)?,
            sparsity,
        })
    }
}

/// Settings for levels 1 (finest) through 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidConfig {
    pub levels: [LevelConfig; LEVELS],
}

impl Default for PyramidConfig {
    fn default() -> Self {
        let l = |c, k, rho| LevelConfig::new(c, k, rho).expect("valid default");
        Self {
            levels: [l(16, 3, 0.3), l(16, 3, 0.3), l(8, 3, 0.5), l(8, 1, 0.7)],
        }
    }
}

impl PyramidConfig {
    /// Config for 1-based `level`.
    pub fn level(&self, level: usize) -> &LevelConfig {
        &self.levels[level - 1]
    }

    /// Same patch size at every level.
    pub fn with_patch(mut self, patch: PatchSpec) -> Self {
        for l in &mut self.levels {
            l.patch = patch;
        }
        self
    }
}

/// Exactly four grids, finest first, with their intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    levels: Vec<Grid>,
    intrinsics: Vec<Intrinsics>,
}

impl Pyramid {
    pub fn from_levels(levels: Vec<Grid>, k: &Intrinsics) -> Result<Self> {
        if levels.len() != LEVELS {
            return Err(Error::ShapeMismatch(format!("a pyramid needs {LEVELS} levels, got {}", levels.len())));
        }
        for (i, pair) in levels.windows(2).enumerate() {
            let (fine, coarse) = (&pair[0], &pair[1]);
            if coarse.height() != fine.height().div_ceil(2) || coarse.width() != fine.width().div_ceil(2) {
                return Err(Error::ShapeMismatch(format!(
                    "level {} is {}x{}, expected half of {}x{}",
                    i + 2,
                    coarse.height(),
                    coarse.width(),
                    fine.height(),
                    fine.width()
                )));
            }
        }
        let intrinsics = (1..=LEVELS).map(|l| rescale_intrinsics(k, l)).collect::<Result<_>>()?;
        Ok(Self { levels, intrinsics })
    }

    /// Grid at 1-based `level`.
    pub fn level(&self, level: usize) -> &Grid {
        &self.levels[level - 1]
    }

    pub fn intrinsics(&self, level: usize) -> &Intrinsics {
        &self.intrinsics[level - 1]
    }

    pub fn levels(&self) -> &[Grid] {
        &self.levels
    }

    pub fn levels_mut(&mut self) -> &mut [Grid] {
        &mut self.levels
    }

    /// Applies `f` to every level.
    pub fn map(&self, mut f: impl FnMut(usize, &Grid) -> Result<Grid>) -> Result<Pyramid> {
        let levels = self
            .levels
            .iter()
            .enumerate()
            .map(|(i, g)| f(i + 1, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            levels,
            intrinsics: self.intrinsics.clone(),
        })
    }
}

/// Smooth-and-decimate pyramid of an image or raw feature grid.
pub fn image_pyramid(g: &Grid, k: &Intrinsics) -> Result<Pyramid> {
    let mut levels = Vec::with_capacity(LEVELS);
    levels.push(g.clone());
    for _ in 1..LEVELS {
        let next = downsample2(levels.last().expect("non-empty"));
        levels.push(next);
    }
    Pyramid::from_levels(levels, k)
}

/// Feature pyramid: downsample all channels, keep the configured number of
/// channels per level, then z-score each level.
pub fn feature_pyramid(features: &Grid, k: &Intrinsics, cfg: &PyramidConfig) -> Result<Pyramid> {
    image_pyramid(features, k)?.map(|l, g| zscore_normalize(&g.select_channels(cfg.level(l).channels)))
}

/// Feature pyramids of a target/source pair, both normalized with the
/// target's per-level statistics. Independent z-scoring would give the two
/// views slightly different affine maps and bias the alignment.
pub fn feature_pyramid_pair(target: &Grid, source: &Grid, k: &Intrinsics, cfg: &PyramidConfig) -> Result<(Pyramid, Pyramid)> {
    if !target.same_shape(source) {
        return Err(Error::ShapeMismatch("target and source features differ in shape".into()));
    }
    let t = image_pyramid(target, k)?;
    let s = image_pyramid(source, k)?;
    let mut tl = Vec::with_capacity(LEVELS);
    let mut sl = Vec::with_capacity(LEVELS);
    for l in 1..=LEVELS {
        let c = cfg.level(l).channels;
        let (a, b) = (t.level(l).select_channels(c), s.level(l).select_channels(c));
        let stats = channel_stats(&a)?;
        tl.push(normalize_with(&a, &stats)?);
        sl.push(normalize_with(&b, &stats)?);
    }
    Ok((Pyramid::from_levels(tl, k)?, Pyramid::from_levels(sl, k)?))
}

/// Depth pyramid by plain decimation, so coarse depths are exact samples.
pub fn depth_pyramid(depth: &Grid, k: &Intrinsics) -> Result<Pyramid> {
    let mut levels = Vec::with_capacity(LEVELS);
    levels.push(depth.clone());
    for _ in 1..LEVELS {
        let next = levels.last().expect("non-empty").decimate2();
        levels.push(next);
    }
    Pyramid::from_levels(levels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridKind;

    fn k() -> Intrinsics {
        Intrinsics::new(50.0, 50.0, 20.0, 15.0).unwrap()
    }

    #[test]
    fn level_dimensions_are_ceil_halves() {
        let g = Grid::filled(37, 50, 1, GridKind::Image, 1.0).unwrap();
        let p = image_pyramid(&g, &k()).unwrap();
        for l in 1..=4 {
            let d = 1usize << (l - 1);
            assert_eq!(p.level(l).height(), 37usize.div_ceil(d));
            assert_eq!(p.level(l).width(), 50usize.div_ceil(d));
            assert_eq!(*p.intrinsics(l), rescale_intrinsics(&k(), l).unwrap());
        }
    }

    #[test]
    fn feature_pyramid_selects_channels_and_normalizes() {
        let g = Grid::from_fn(32, 32, 16, GridKind::Feature, |y, x, c| {
            ((x as f64 * 0.3 + c as f64).sin() + (y as f64 * 0.2 - c as f64).cos()) * (1.0 + c as f64)
        })
        .unwrap();
        let p = feature_pyramid(&g, &k(), &PyramidConfig::default()).unwrap();
        let chans: Vec<_> = p.levels().iter().map(|g| g.channels()).collect();
        assert_eq!(chans, [16, 16, 8, 8]);
        for l in p.levels() {
            let ch = l.channels();
            let mean: f64 = l.data().iter().step_by(ch).sum::<f64>() / l.len_pixels() as f64;
            assert!(mean.abs() < 1e-10);
        }
    }

    #[test]
    fn depth_pyramid_keeps_exact_samples() {
        let d = Grid::from_fn(16, 16, 1, GridKind::Depth, |y, x, _| 1.0 + (y * 16 + x) as f64).unwrap();
        let p = depth_pyramid(&d, &k()).unwrap();
        assert_eq!(p.level(3).get(1, 1, 0), d.get(4, 4, 0));
    }

    #[test]
    fn rejects_wrong_level_count() {
        let g = Grid::filled(4, 4, 1, GridKind::Image, 1.0).unwrap();
        assert!(Pyramid::from_levels(alloc::vec![g], &k()).is_err());
    }
}
