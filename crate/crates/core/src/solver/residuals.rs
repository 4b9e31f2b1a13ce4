use alloc::{format, vec, vec::Vec};

use nalgebra::Matrix2x6;

use crate::error::{Error, Result};
use crate::geometry::{backproject, projection_jacobian, Intrinsics, Pixel, RigidTransform};
use crate::grid::{bilinear_sample_with_gradient_into, Grid, PatchSpec};
use crate::selection::SelectionMask;

/// One selected point whose warp landed inside both patches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualPoint {
    pub y: usize,
    pub x: usize,
    /// Target-view depth.
    pub depth: f64,
    /// Location in the source view.
    pub warped: Pixel,
    /// Depth in the source view.
    pub warped_depth: f64,
    pub squared_norm: f64,
}

impl ResidualPoint {
    pub fn index(&self, width: usize) -> usize {
        self.y * width + self.x
    }
}

/// Residuals `patch(Φ_t, u) - patch(Φ_s, ω(u))` of the valid selected points.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    dim: usize,
    points: Vec<ResidualPoint>,
    values: Vec<f64>,
    rejected: usize,
}

impl ResidualSet {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ResidualPoint] {
        &self.points
    }

    pub fn residual(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Selected points dropped because the warp left the image or went behind the camera.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    pub fn squared_norms(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.squared_norm).collect()
    }

    /// `Σ ‖r_i‖²`.
    pub fn energy(&self) -> f64 {
        self.points.iter().map(|p| p.squared_norm).sum()
    }

    /// Keeps the points at `indices` (in order).
    pub fn subset(&self, indices: &[usize]) -> ResidualSet {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.residual(i));
        }
        ResidualSet {
            dim: self.dim,
            points: indices.iter().map(|&i| self.points[i]).collect(),
            values,
            rejected: self.rejected,
        }
    }

    /// Assembles a set from raw parts; `values` holds `dim` entries per point.
    pub fn from_parts(dim: usize, points: Vec<ResidualPoint>, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * points.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points of dimension {dim} need {} values, got {}",
                points.len(),
                dim * points.len(),
                values.len()
            )));
        }
        let mut points = points;
        for (p, r) in points.iter_mut().zip(values.chunks_exact(dim.max(1))) {
            p.squared_norm = r.iter().map(|x| x * x).sum();
        }
        Ok(Self {
            dim,
            points,
            values,
            rejected: 0,
        })
    }
}

/// Per-point `dim × 6` Jacobians of the residual with respect to a left
/// perturbation of the pose, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobians {
    dim: usize,
    pixels: Vec<(usize, usize)>,
    rows: Vec<f64>,
}

impl Jacobians {
    pub fn from_parts(dim: usize, pixels: Vec<(usize, usize)>, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != dim * 6 * pixels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} Jacobians of {dim}x6 need {} values, got {}",
                pixels.len(),
                dim * 6 * pixels.len(),
                rows.len()
            )));
        }
        Ok(Self { dim, pixels, rows })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(y, x)` of point `i`.
    pub fn pixel(&self, i: usize) -> (usize, usize) {
        self.pixels[i]
    }

    /// Row `row` of point `i`'s Jacobian.
    pub fn row(&self, i: usize, row: usize) -> &[f64] {
        let start = (i * self.dim + row) * 6;
        &self.rows[start..start + 6]
    }

    pub fn matrix(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim * 6..(i + 1) * self.dim * 6]
    }
}

/// Gradient data of one point, enough to rebuild its Jacobian and its
/// contribution to the normal equations.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointLinearization {
    /// `Gᵀ G`, with `G` the `dim × 2` matrix of sample gradients: `[uu, uv, vv]`.
    pub gtg: [f64; 3],
    /// `Gᵀ r`.
    pub gtr: [f64; 2],
    /// Projected-pixel derivative, 2×6.
    pub proj: Matrix2x6<f64>,
}

/// Output of one residual/linearization sweep.
pub(crate) struct Evaluation {
    pub set: ResidualSet,
    pub linear: Vec<PointLinearization>,
    /// Full `dim × 2` gradient blocks (`[du, dv]` interleaved), when requested.
    pub gradients: Option<Vec<f64>>,
}

pub(crate) struct Problem<'a> {
    pub target: Option<&'a Grid>,
    pub source: &'a Grid,
    pub depth: &'a Grid,
    pub intrinsics: &'a Intrinsics,
    pub patch: PatchSpec,
}

impl<'a> Problem<'a> {
    pub fn new(
        target: Option<&'a Grid>,
        source: &'a Grid,
        depth: &'a Grid,
        mask: Option<&SelectionMask>,
        intrinsics: &'a Intrinsics,
        patch: PatchSpec,
    ) -> Result<Self> {
        if let Some(t) = target {
            if !t.same_shape(source) || t.channels() != source.channels() {
                return Err(Error::ShapeMismatch(format!(
                    "target features {}x{}x{} vs source {}x{}x{}",
                    t.height(),
                    t.width(),
                    t.channels(),
                    source.height(),
                    source.width(),
                    source.channels()
                )));
            }
        }
        if !depth.same_shape(source) || depth.channels() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "depth {}x{}x{} vs features {}x{}",
                depth.height(),
                depth.width(),
                depth.channels(),
                source.height(),
                source.width()
            )));
        }
        if let Some(m) = mask {
            if m.height() != source.height() || m.width() != source.width() {
                return Err(Error::ShapeMismatch(format!(
                    "mask {}x{} vs features {}x{}",
                    m.height(),
                    m.width(),
                    source.height(),
                    source.width()
                )));
            }
        }
        Ok(Self {
            target,
            source,
            depth,
            intrinsics,
            patch,
        })
    }

    pub fn dim(&self) -> usize {
        self.patch.len(self.source.channels())
    }

    /// Selected pixels in row-major order.
    pub fn selected_pixels(&self, mask: &SelectionMask) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..mask.height() {
            for x in 0..mask.width() {
                if mask.is_selected(y, x) {
                    out.push((y, x));
                }
            }
        }
        out
    }

    /// Residuals (when a target is present) and linearization at `pose` for `pixels`.
    pub fn evaluate(&self, pixels: &[(usize, usize)], pose: &RigidTransform, keep_gradients: bool) -> Evaluation {
        let ch = self.source.channels();
        let k = self.patch.size();
        let r = self.patch.radius();
        let kk = k * k;
        let dim = ch * kk;
        let (h, w) = (self.source.height() as isize, self.source.width() as isize);

        let mut points = Vec::with_capacity(pixels.len());
        let mut values = Vec::with_capacity(pixels.len() * dim);
        let mut linear = Vec::with_capacity(pixels.len());
        let mut gradients = keep_gradients.then(|| Vec::with_capacity(pixels.len() * dim * 2));
        let mut rejected = 0;

        let (mut val, mut du, mut dv) = (vec![0.0; ch], vec![0.0; ch], vec![0.0; ch]);
        let mut res = vec![0.0; dim];
        let mut gu = vec![0.0; dim];
        let mut gv = vec![0.0; dim];

        'points: for &(y, x) in pixels {
            let (yi, xi) = (y as isize, x as isize);
            if xi - r < 0 || xi + r >= w || yi - r < 0 || yi + r >= h {
                rejected += 1;
                continue;
            }
            let z = self.depth.get(y, x, 0);
            let Ok(xt) = backproject(Pixel::new(x as f64, y as f64), z, self.intrinsics) else {
                rejected += 1;
                continue;
            };
            let xs = pose.transform_point(&xt);
            if !(xs.z > 1e-9) {
                rejected += 1;
                continue;
            }
            let warped = Pixel::new(
                self.intrinsics.fx * xs.x / xs.z + self.intrinsics.cx,
                self.intrinsics.fy * xs.y / xs.z + self.intrinsics.cy,
            );

            for dy in 0..k {
                for dx in 0..k {
                    let q = Pixel::new(warped.u + (dx as isize - r) as f64, warped.v + (dy as isize - r) as f64);
                    if !bilinear_sample_with_gradient_into(self.source, q, &mut val, &mut du, &mut dv) {
                        rejected += 1;
                        continue 'points;
                    }
                    let j = dy * k + dx;
                    for c in 0..ch {
                        let idx = c * kk + j;
                        let t = match self.target {
                            Some(t) => t.get((yi + dy as isize - r) as usize, (xi + dx as isize - r) as usize, c),
                            None => 0.0,
                        };
                        res[idx] = t - val[c];
                        gu[idx] = du[c];
                        gv[idx] = dv[c];
                    }
                }
            }

            let mut lin = PointLinearization {
                gtg: [0.0; 3],
                gtr: [0.0; 2],
                proj: projection_jacobian(&xs, self.intrinsics),
            };
            let mut sq = 0.0;
            for i in 0..dim {
                sq += res[i] * res[i];
                lin.gtg[0] += gu[i] * gu[i];
                lin.gtg[1] += gu[i] * gv[i];
                lin.gtg[2] += gv[i] * gv[i];
                lin.gtr[0] += gu[i] * res[i];
                lin.gtr[1] += gv[i] * res[i];
            }
            points.push(ResidualPoint {
                y,
                x,
                depth: z,
                warped,
                warped_depth: xs.z,
                squared_norm: sq,
            });
            values.extend_from_slice(&res);
            linear.push(lin);
            if let Some(g) = gradients.as_mut() {
                for i in 0..dim {
                    g.push(gu[i]);
                    g.push(gv[i]);
                }
            }
        }

        Evaluation {
            set: ResidualSet {
                dim,
                points,
                values,
                rejected,
            },
            linear,
            gradients,
        }
    }
}

/// Feature-metric residuals of the selected target pixels under pose `t`
/// (target-to-source). Points whose patches leave either image, or whose
/// warp lands behind the camera, are excluded.
pub fn compute_residuals(
    target: &Grid,
    source: &Grid,
    depth: &Grid,
    mask: &SelectionMask,
    t: &RigidTransform,
    k: &Intrinsics,
    patch: PatchSpec,
) -> Result<ResidualSet> {
    let problem = Problem::new(Some(target), source, depth, Some(mask), k, patch)?;
    let pixels = problem.selected_pixels(mask);
    Ok(problem.evaluate(&pixels, t, false).set)
}

/// `½ (median(‖r‖²) + max(‖r‖²))`; points at or above it count as outliers.
pub fn outlier_threshold(rs: &ResidualSet) -> Result<f64> {
    threshold_of(&rs.squared_norms())
}

pub(crate) fn threshold_of(norms: &[f64]) -> Result<f64> {
    if norms.is_empty() {
        return Err(Error::EmptyResidualSet);
    }
    let (median, max) = median_and_max(norms);
    Ok(0.5 * (median + max))
}

pub(crate) fn median_and_max(norms: &[f64]) -> (f64, f64) {
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    (median, sorted[n - 1])
}

/// Indices of the points kept after outlier removal, and the threshold used.
/// When every norm equals the median the removal is skipped.
pub fn inlier_indices(rs: &ResidualSet) -> Result<(Vec<usize>, Option<f64>)> {
    let norms = rs.squared_norms();
    if norms.is_empty() {
        return Err(Error::EmptyResidualSet);
    }
    let (median, max) = median_and_max(&norms);
    if median >= max {
        return Ok(((0..norms.len()).collect(), None));
    }
    let threshold = 0.5 * (median + max);
    let kept = norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n < threshold)
        .map(|(i, _)| i)
        .collect();
    Ok((kept, Some(threshold)))
}

/// Per-point Jacobians `∂r_i/∂δξ` for `r_i = target − source(ω(u_i, exp(δξ) ∘ T₀))`,
/// for the same points `compute_residuals` keeps.
pub fn jacobian_ic(
    source: &Grid,
    depth: &Grid,
    mask: &SelectionMask,
    t0: &RigidTransform,
    k: &Intrinsics,
    patch: PatchSpec,
) -> Result<Jacobians> {
    let problem = Problem::new(None, source, depth, Some(mask), k, patch)?;
    let pixels = problem.selected_pixels(mask);
    let eval = problem.evaluate(&pixels, t0, true);
    let dim = problem.dim();
    let grads = eval.gradients.expect("requested");
    let mut rows = Vec::with_capacity(eval.set.len() * dim * 6);
    for (i, lin) in eval.linear.iter().enumerate() {
        for e in 0..dim {
            let gu = grads[(i * dim + e) * 2];
            let gv = grads[(i * dim + e) * 2 + 1];
            for col in 0..6 {
                rows.push(-(gu * lin.proj[(0, col)] + gv * lin.proj[(1, col)]));
            }
        }
    }
    Ok(Jacobians {
        dim,
        pixels: eval.set.points.iter().map(|p| (p.y, p.x)).collect(),
        rows,
    })
}
