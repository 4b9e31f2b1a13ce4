//! Hand-built feature extractors standing in for a learned feature network.
//! Anything that yields a feature-tagged [`Grid`] can feed the solver.

use alloc::vec::Vec;

use crate::error::Result;
use crate::grid::{gaussian_smooth, Grid, GridKind};
use crate::random;

const PROJECTION_RADIUS: isize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    /// Channel-mean intensity, one channel.
    Intensity,
    /// Intensity plus its horizontal and vertical central differences.
    Gradient,
    /// `channels` seeded random 5×5 filters over the intensity.
    RandomProjection { channels: usize, seed: u64 },
}

impl FeatureSource {
    /// Smoothed feature grid for `image`.
    pub fn extract(&self, image: &Grid) -> Result<Grid> {
        let gray = intensity(image)?;
        let raw = match *self {
            FeatureSource::Intensity => gray,
            FeatureSource::Gradient => gradient_stack(&gray)?,
            FeatureSource::RandomProjection { channels, seed } => random_projection(&gray, channels.max(1), seed)?,
        };
        Ok(gaussian_smooth(&raw))
    }
}

fn intensity(image: &Grid) -> Result<Grid> {
    let ch = image.channels();
    let data = image
        .data()
        .chunks_exact(ch)
        .map(|px| px.iter().sum::<f64>() / ch as f64)
        .collect();
    Grid::new(image.height(), image.width(), 1, GridKind::Feature, data)
}

fn clamped(g: &Grid, y: isize, x: isize) -> f64 {
    let y = y.clamp(0, g.height() as isize - 1) as usize;
    let x = x.clamp(0, g.width() as isize - 1) as usize;
    g.get(y, x, 0)
}

fn gradient_stack(gray: &Grid) -> Result<Grid> {
    Grid::from_fn(gray.height(), gray.width(), 3, GridKind::Feature, |y, x, c| {
        let (y, x) = (y as isize, x as isize);
        match c {
            0 => clamped(gray, y, x),
            1 => 0.5 * (clamped(gray, y, x + 1) - clamped(gray, y, x - 1)),
            _ => 0.5 * (clamped(gray, y + 1, x) - clamped(gray, y - 1, x)),
        }
    })
}

fn random_projection(gray: &Grid, channels: usize, seed: u64) -> Result<Grid> {
    let side = (2 * PROJECTION_RADIUS + 1) as usize;
    let mut rng = random::seeded(seed);
    let filters: Vec<Vec<f64>> = (0..channels)
        .map(|_| (0..side * side).map(|_| random::uniform(&mut rng, -1.0, 1.0)).collect())
        .collect();
    Grid::from_fn(gray.height(), gray.width(), channels, GridKind::Feature, |y, x, c| {
        let f = &filters[c];
        let mut acc = 0.0;
        for dy in -PROJECTION_RADIUS..=PROJECTION_RADIUS {
            for dx in -PROJECTION_RADIUS..=PROJECTION_RADIUS {
                let w = f[((dy + PROJECTION_RADIUS) as usize) * side + (dx + PROJECTION_RADIUS) as usize];
                acc += w * clamped(gray, y as isize + dy, x as isize + dx);
            }
        }
        acc
    })
}
