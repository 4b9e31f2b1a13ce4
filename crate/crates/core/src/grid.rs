//! Dense `H × W × C` grids with smoothing, decimation, normalization and
//! bilinear sampling.
//!
//! Storage is row-major with interleaved channels: element `(y, x, c)` lives
//! at `(y * W + x) * C + c`.

use alloc::{format, vec, vec::Vec};


#[allow(unused_imports)] // float math without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::Pixel;

/// What a grid holds. Depth grids must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GridKind {
    Image,
    Feature,
    Depth,
    Mask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    channels: usize,
    kind: GridKind,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(height: usize, width: usize, channels: usize, kind: GridKind, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "grid dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} grid needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if kind == GridKind::Depth {
            if let Some(&z) = data.iter().find(|z| !(**z > 0.0)) {
                return Err(Error::NonPositiveDepth(z));
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            kind,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, kind: GridKind, value: f64) -> Result<Self> {
        Self::new(height, width, channels, kind, vec![value; height * width * channels])
    }

    /// Builds a grid from `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        kind: GridKind,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, kind, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.height == other.height && self.width == other.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels + c] = value;
    }

    /// All channels at pixel `(y, x)`.
    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let start = (y * self.width + x) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    /// Relabels the grid. Re-validates when switching to depth.
    pub fn with_kind(self, kind: GridKind) -> Result<Self> {
        Self::new(self.height, self.width, self.channels, kind, self.data)
    }

    /// Keeps the first `n` channels (all of them if `n` exceeds the count).
    pub fn select_channels(&self, n: usize) -> Grid {
        let n = n.clamp(1, self.channels);
        if n == self.channels {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.len_pixels() * n);
        for px in self.data.chunks_exact(self.channels) {
            data.extend_from_slice(&px[..n]);
        }
        Grid {
            height: self.height,
            width: self.width,
            channels: n,
            kind: self.kind,
            data,
        }
    }

    /// Mean over every element.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            data: self.data.iter().map(|&x| f(x)).collect(),
            ..self.clone()
        }
    }

    /// Takes every other pixel starting at index 0, without smoothing.
    pub fn decimate2(&self) -> Grid {
        let h = self.height.div_ceil(2);
        let w = self.width.div_ceil(2);
        let mut data = Vec::with_capacity(h * w * self.channels);
        for y in 0..h {
            for x in 0..w {
                data.extend_from_slice(self.pixel(2 * y, 2 * x));
            }
        }
        Grid {
            height: h,
            width: w,
            channels: self.channels,
            kind: self.kind,
            data,
        }
    }
}

/// Odd patch side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    k: usize,
}

impl PatchSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("patch size must be odd and >= 1, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn radius(&self) -> isize {
        (self.k / 2) as isize
    }

    /// Number of values in a patch of a `channels`-channel grid.
    pub fn len(&self, channels: usize) -> usize {
        channels * self.k * self.k
    }
}

const BINOMIAL: [f64; 3] = [0.25, 0.5, 0.25];

/// 3×3 binomial smoothing, `(1/16)[1 2 1; 2 4 2; 1 2 1]`, replicate borders.
pub fn gaussian_smooth(g: &Grid) -> Grid {
    let (h, w, ch) = (g.height, g.width, g.channels);
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut rows = vec![0.0; g.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wt) in BINOMIAL.iter().enumerate() {
                    let xx = clamp(x as isize + k as isize - 1, w);
                    acc += wt * g.get(y, xx, c);
                }
                rows[(y * w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; g.data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, wt) in BINOMIAL.iter().enumerate() {
                    let yy = clamp(y as isize + k as isize - 1, h);
                    acc += wt * rows[(yy * w + x) * ch + c];
                }
                out[(y * w + x) * ch + c] = acc;
            }
        }
    }
    Grid {
        data: out,
        ..g.clone()
    }
}

/// Smooth, then keep every other pixel from index 0. Output is `ceil(H/2) × ceil(W/2)`.
pub fn downsample2(g: &Grid) -> Grid {
    gaussian_smooth(g).decimate2()
}

/// Per-channel zero mean, unit (population) variance.
pub fn zscore_normalize(g: &Grid) -> Result<Grid> {
    normalize_with(g, &channel_stats(g)?)
}

/// Per-channel mean and standard deviation; fails on a flat channel.
pub fn channel_stats(g: &Grid) -> Result<Vec<(f64, f64)>> {
    let n = g.len_pixels() as f64;
    let ch = g.channels;
    (0..ch)
        .map(|c| {
            let mean = g.data.iter().skip(c).step_by(ch).sum::<f64>() / n;
            let var = g.data.iter().skip(c).step_by(ch).map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            if !(var > 1e-12) {
                return Err(Error::DegenerateChannel(c));
            }
            Ok((mean, var.sqrt()))
        })
        .collect()
}

/// `(x - mean) / std` per channel with externally supplied statistics, so
/// two views can share one normalization.
pub fn normalize_with(g: &Grid, stats: &[(f64, f64)]) -> Result<Grid> {
    let ch = g.channels;
    if stats.len() != ch {
        return Err(Error::ShapeMismatch(format!("{} channel statistics for {ch} channels", stats.len())));
    }
    let mut out = g.data.clone();
    for (c, &(mean, std)) in stats.iter().enumerate() {
        let inv = 1.0 / std;
        for x in out.iter_mut().skip(c).step_by(ch) {
            *x = (*x - mean) * inv;
        }
    }
    Ok(Grid {
        data: out,
        kind: GridKind::Feature,
        ..g.clone()
    })
}

/// Bilinear cell containing `p`: top-left pixel and fractional offsets.
///
/// A coordinate exactly on the last row/column uses the cell to its
/// left/above with offset 1, so integer positions anywhere in the grid
/// are valid.
#[inline]
fn support(g: &Grid, p: Pixel) -> Option<(usize, usize, f64, f64)> {
    fn axis(t: f64, n: usize) -> Option<(usize, f64)> {
        if !(t >= 0.0 && t <= (n - 1) as f64) {
            return None;
        }
        if n == 1 {
            return Some((0, 0.0));
        }
        let i = (t.floor() as usize).min(n - 2);
        Some((i, t - i as f64))
    }
    let (x0, ax) = axis(p.u, g.width)?;
    let (y0, ay) = axis(p.v, g.height)?;
    Some((x0, y0, ax, ay))
}

#[inline]
fn corners(g: &Grid, x0: usize, y0: usize) -> (usize, usize, usize, usize) {
    let x1 = (x0 + 1).min(g.width - 1);
    let y1 = (y0 + 1).min(g.height - 1);
    let ch = g.channels;
    (
        (y0 * g.width + x0) * ch,
        (y0 * g.width + x1) * ch,
        (y1 * g.width + x0) * ch,
        (y1 * g.width + x1) * ch,
    )
}

/// Bilinear sample of every channel at `p` into `out`. Returns `false`
/// (and zeros) when any support pixel lies outside the grid.
pub fn bilinear_sample_into(g: &Grid, p: Pixel, out: &mut [f64]) -> bool {
    let Some((x0, y0, ax, ay)) = support(g, p) else {
        out.iter_mut().for_each(|x| *x = 0.0);
        return false;
    };
    let (i00, i01, i10, i11) = corners(g, x0, y0);
    let d = &g.data;
    for (c, o) in out.iter_mut().enumerate().take(g.channels) {
        let top = d[i00 + c] + ax * (d[i01 + c] - d[i00 + c]);
        let bottom = d[i10 + c] + ax * (d[i11 + c] - d[i10 + c]);
        *o = top + ay * (bottom - top);
    }
    true
}

pub fn bilinear_sample(g: &Grid, p: Pixel) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; g.channels];
    let valid = bilinear_sample_into(g, p, &mut out);
    (out, valid)
}

/// Value and `(∂/∂u, ∂/∂v)` of the bilinear surface for every channel.
pub fn bilinear_sample_with_gradient_into(
    g: &Grid,
    p: Pixel,
    value: &mut [f64],
    du: &mut [f64],
    dv: &mut [f64],
) -> bool {
    let Some((x0, y0, ax, ay)) = support(g, p) else {
        for s in [&mut *value, &mut *du, &mut *dv] {
            s.iter_mut().for_each(|x| *x = 0.0);
        }
        return false;
    };
    let (i00, i01, i10, i11) = corners(g, x0, y0);
    let d = &g.data;
    for c in 0..g.channels {
        let (v00, v01, v10, v11) = (d[i00 + c], d[i01 + c], d[i10 + c], d[i11 + c]);
        let top = v00 + ax * (v01 - v00);
        let bottom = v10 + ax * (v11 - v10);
        value[c] = top + ay * (bottom - top);
        du[c] = (v01 - v00) + ay * ((v11 - v10) - (v01 - v00));
        dv[c] = bottom - top;
    }
    true
}

/// Analytic gradient of the bilinear surface: row 0 is `∂/∂u`, row 1 `∂/∂v`.
pub fn bilinear_gradient(g: &Grid, p: Pixel) -> ([Vec<f64>; 2], bool) {
    let ch = g.channels;
    let (mut value, mut du, mut dv) = (vec![0.0; ch], vec![0.0; ch], vec![0.0; ch]);
    let valid = bilinear_sample_with_gradient_into(g, p, &mut value, &mut du, &mut dv);
    ([du, dv], valid)
}

/// `k × k` lattice of unit spacing centered on `p`, channel-major:
/// element `c·k² + (dy·k + dx)`.
pub fn extract_patch(g: &Grid, p: Pixel, spec: PatchSpec) -> (Vec<f64>, bool) {
    let k = spec.size();
    let r = spec.radius();
    let ch = g.channels;
    let mut out = vec![0.0; ch * k * k];
    let mut sample = vec![0.0; ch];
    let mut valid = true;
    for dy in 0..k {
        for dx in 0..k {
            let q = Pixel::new(p.u + (dx as isize - r) as f64, p.v + (dy as isize - r) as f64);
            valid &= bilinear_sample_into(g, q, &mut sample);
            for c in 0..ch {
                out[c * k * k + dy * k + dx] = sample[c];
            }
        }
    }
    if !valid {
        out.iter_mut().for_each(|x| *x = 0.0);
    }
    (out, valid)
}
