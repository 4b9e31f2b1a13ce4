//! Feature-point selection masks.
//!
//! Each pixel is selected with a Bernoulli probability `p`. The relaxed
//! sample uses the two-class Gumbel-softmax, which reduces to a sigmoid of
//! the logit plus a difference of two Gumbel draws, divided by the
//! temperature.

use alloc::{format, vec::Vec};


#[allow(unused_imports)] // float math without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridKind};
use crate::pyramid::{Pyramid, PyramidConfig, LEVELS};
use crate::random;

const P_MIN: f64 = 1e-6;
const RATE_MIN: f64 = 1e-6;

/// Per-pixel selection probabilities, clamped to `[1e-6, 1 - 1e-6]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMap {
    p: Grid,
}

impl ProbabilityMap {
    pub fn new(p: &Grid) -> Result<Self> {
        if p.channels() != 1 {
            return Err(Error::ShapeMismatch(format!("probability map needs 1 channel, got {}", p.channels())));
        }
        if p.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("probability map holds non-finite values".into()));
        }
        let clamped = p.map(|x| x.clamp(P_MIN, 1.0 - P_MIN)).with_kind(GridKind::Mask)?;
        Ok(Self { p: clamped })
    }

    pub fn uniform(height: usize, width: usize, q: f64) -> Result<Self> {
        Self::new(&Grid::filled(height, width, 1, GridKind::Mask, q)?)
    }

    pub fn grid(&self) -> &Grid {
        &self.p
    }

    pub fn mean(&self) -> f64 {
        self.p.mean()
    }

    /// Decimated copy for the next coarser pyramid level.
    pub fn decimate2(&self) -> Self {
        Self { p: self.p.decimate2() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    Soft,
    Hard,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMask {
    weights: Grid,
    mode: MaskMode,
    temperature: f64,
}

impl SelectionMask {
    /// Every pixel selected.
    pub fn all(height: usize, width: usize) -> Result<Self> {
        Ok(Self {
            weights: Grid::filled(height, width, 1, GridKind::Mask, 1.0)?,
            mode: MaskMode::Hard,
            temperature: 0.0,
        })
    }

    /// Hard mask from arbitrary weights: nonzero means selected.
    pub fn from_weights(weights: &Grid) -> Result<Self> {
        if weights.channels() != 1 {
            return Err(Error::ShapeMismatch(format!("mask needs 1 channel, got {}", weights.channels())));
        }
        Ok(Self {
            weights: weights.map(|w| if w >= 0.5 { 1.0 } else { 0.0 }).with_kind(GridKind::Mask)?,
            mode: MaskMode::Hard,
            temperature: 0.0,
        })
    }

    pub fn weights(&self) -> &Grid {
        &self.weights
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn height(&self) -> usize {
        self.weights.height()
    }

    pub fn width(&self) -> usize {
        self.weights.width()
    }

    /// Whether pixel `(y, x)` takes part in the pose energy. Soft weights
    /// count as selected at or above one half.
    #[inline]
    pub fn is_selected(&self, y: usize, x: usize) -> bool {
        self.weights.get(y, x, 0) >= 0.5
    }

    /// Mean weight, the realized selection rate.
    pub fn rate(&self) -> f64 {
        self.weights.mean()
    }

    pub fn selected_count(&self) -> usize {
        self.weights.data().iter().filter(|&&w| w >= 0.5).count()
    }
}

/// Relaxed Bernoulli sample of `p` at temperature `tau`. Deterministic in `seed`.
///
/// Soft weights are kept strictly inside (0, 1) by clamping to machine epsilon.
pub fn gumbel_sample(p: &ProbabilityMap, tau: f64, seed: u64) -> Result<SelectionMask> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let mut rng = random::seeded(seed);
    let eps = f64::EPSILON;
    let data: Vec<f64> = p
        .p
        .data()
        .iter()
        .map(|&q| {
            let g1 = random::gumbel(&mut rng);
            let g0 = random::gumbel(&mut rng);
            let logit = (q.ln() + g1 - (1.0 - q).ln() - g0) / tau;
            sigmoid(logit).clamp(eps, 1.0 - eps)
        })
        .collect();
    Ok(SelectionMask {
        weights: Grid::new(p.p.height(), p.p.width(), 1, GridKind::Mask, data)?,
        mode: MaskMode::Soft,
        temperature: tau,
    })
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Thresholds soft weights at 0.5; ties go to 1.
pub fn harden(m: &SelectionMask) -> SelectionMask {
    SelectionMask {
        weights: m.weights.map(|w| if w >= 0.5 { 1.0 } else { 0.0 }),
        mode: MaskMode::Hard,
        temperature: m.temperature,
    }
}

/// `KL(ρ ‖ ρ̂)` between the target rate and the mask's mean weight.
pub fn sparsity_kl(m: &SelectionMask, rho: f64) -> f64 {
    kl_bernoulli(rho, m.rate())
}

pub fn kl_bernoulli(rho: f64, rate: f64) -> f64 {
    let r = rate.clamp(RATE_MIN, 1.0 - RATE_MIN);
    rho * (rho / r).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - r)).ln()
}

/// Probability map that ranks pixels by local gradient magnitude.
///
/// Pixels are sorted by gradient; the pixel at normalized rank `q` gets
/// `q^a` with `a = 1/ρ - 1` (so the map averages to ρ), tied pixels share
/// the average of their ranks, and a final rescale makes the mean exact.
pub fn gradient_prior(image: &Grid, rho: f64) -> Result<ProbabilityMap> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("target rate must lie in (0, 1), got {rho}")));
    }
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    let at = |y: isize, x: isize, c: usize| {
        image.get(y.clamp(0, h as isize - 1) as usize, x.clamp(0, w as isize - 1) as usize, c)
    };
    let mut grad = Vec::with_capacity(h * w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for c in 0..ch {
                gx += 0.5 * (at(y, x + 1, c) - at(y, x - 1, c));
                gy += 0.5 * (at(y + 1, x, c) - at(y - 1, x, c));
            }
            grad.push((gx * gx + gy * gy).sqrt() / ch as f64);
        }
    }

    let n = grad.len();
    let exponent = 1.0 / rho - 1.0;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grad[a].total_cmp(&grad[b]));
    let mut p = alloc::vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && grad[order[end]] == grad[order[start]] {
            end += 1;
        }
        let avg = (start..end)
            .map(|j| ((j as f64 + 0.5) / n as f64).powf(exponent))
            .sum::<f64>()
            / (end - start) as f64;
        for &i in &order[start..end] {
            p[i] = avg;
        }
        start = end;
    }
    let mean = p.iter().sum::<f64>() / n as f64;
    let scale = rho / mean;
    p.iter_mut().for_each(|x| *x *= scale);
    ProbabilityMap::new(&Grid::new(h, w, 1, GridKind::Mask, p)?)
}

/// One hard mask per pyramid level, drawn from the gradient prior of each
/// level's image at that level's target rate. Level `l` uses seed `seed + l`.
pub fn sample_masks(images: &Pyramid, cfg: &PyramidConfig, tau: f64, seed: u64) -> Result<Vec<SelectionMask>> {
    (1..=LEVELS)
        .map(|l| {
            let p = gradient_prior(images.level(l), cfg.level(l).sparsity)?;
            Ok(harden(&gumbel_sample(&p, tau, seed.wrapping_add(l as u64))?))
        })
        .collect()
}

/// Like [`sample_masks`] but with caller-supplied full-resolution
/// probabilities, decimated for the coarser levels.
pub fn sample_masks_from(p: &ProbabilityMap, tau: f64, seed: u64) -> Result<Vec<SelectionMask>> {
    let mut out = Vec::with_capacity(LEVELS);
    let mut cur = p.clone();
    for l in 1..=LEVELS {
        out.push(harden(&gumbel_sample(&cur, tau, seed.wrapping_add(l as u64))?));
        cur = cur.decimate2();
    }
    Ok(out)
}
