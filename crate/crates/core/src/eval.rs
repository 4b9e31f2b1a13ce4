//! Trajectory integration, snippet ATE, depth metrics and the KITTI pose
//! text format.

use alloc::{format, string::String, vec::Vec};
use core::fmt::Write;


#[allow(unused_imports)] // float math without std
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::grid::Grid;

/// Camera-to-world poses, one per frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub poses: Vec<RigidTransform>,
}

impl Trajectory {
    pub fn new(poses: Vec<RigidTransform>) -> Self {
        Self { poses }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Pose of frame `k + 1` in the camera of frame `k`, for every `k`.
    pub fn relatives(&self) -> Vec<RigidTransform> {
        self.poses.windows(2).map(|w| w[0].inverse().compose(&w[1])).collect()
    }
}

/// Chains relative poses from the identity: `P₀ = I`, `Pₖ₊₁ = Pₖ ∘ relₖ`,
/// where `relₖ` is the pose of camera `k + 1` expressed in camera `k`.
pub fn integrate(relatives: &[RigidTransform]) -> Trajectory {
    let mut poses = Vec::with_capacity(relatives.len() + 1);
    let mut cur = RigidTransform::identity();
    poses.push(cur);
    for r in relatives {
        cur = cur.compose(r);
        poses.push(cur);
    }
    Trajectory { poses }
}

/// RMS translation error of each `n`-frame window after expressing both
/// sub-trajectories relative to the window's first frame and scaling the
/// prediction by the least-squares factor.
pub fn ate_windows(pred: &Trajectory, gt: &Trajectory, n: usize) -> Result<Vec<f64>> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if n == 0 || pred.len() < n {
        return Err(Error::LengthMismatch(pred.len(), n));
    }
    let mut out = Vec::with_capacity(pred.len() + 1 - n);
    for k in 0..=pred.len() - n {
        let (p0, g0) = (pred.poses[k].inverse(), gt.poses[k].inverse());
        let p: Vec<_> = (0..n).map(|j| p0.compose(&pred.poses[k + j]).translation).collect();
        let g: Vec<_> = (0..n).map(|j| g0.compose(&gt.poses[k + j]).translation).collect();
        let pp: f64 = p.iter().map(|v| v.norm_squared()).sum();
        let gp: f64 = p.iter().zip(&g).map(|(a, b)| a.dot(b)).sum();
        let s = if pp > 0.0 { gp / pp } else { 1.0 };
        let sq: f64 = p.iter().zip(&g).map(|(a, b)| (a * s - b).norm_squared()).sum();
        out.push((sq / n as f64).sqrt());
    }
    Ok(out)
}

/// Mean and population standard deviation of the per-window ATE.
pub fn ate_snippets(pred: &Trajectory, gt: &Trajectory, n: usize) -> Result<(f64, f64)> {
    let e = ate_windows(pred, gt, n)?;
    let m = e.iter().sum::<f64>() / e.len() as f64;
    let var = e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / e.len() as f64;
    Ok((m, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl DepthMetrics {
    pub fn key_values(&self) -> [(&'static str, f64); 7] {
        [
            ("abs_rel", self.abs_rel),
            ("sq_rel", self.sq_rel),
            ("rmse", self.rmse),
            ("rmse_log", self.rmse_log),
            ("a1", self.a1),
            ("a2", self.a2),
            ("a3", self.a3),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthEvalConfig {
    pub median_scale: bool,
    pub min_depth: f64,
    /// Ground truth at or beyond this is ignored; predictions are capped to it.
    pub max_depth: f64,
}

impl Default for DepthEvalConfig {
    fn default() -> Self {
        Self {
            median_scale: false,
            min_depth: 1e-3,
            max_depth: 80.0,
        }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

// Neumaier-compensated sum: a constant per-pixel error averages back to
// itself instead of drifting with the pixel count.
#[derive(Default)]
struct Sum {
    sum: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.carry += if self.sum.abs() >= v.abs() { (self.sum - t) + v } else { (v - t) + self.sum };
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Standard monocular depth metrics over pixels where the mask (if any) is
/// set and the ground truth lies in `(min_depth, max_depth)`.
pub fn depth_metrics(pred: &Grid, gt: &Grid, mask: Option<&Grid>, cfg: &DepthEvalConfig) -> Result<DepthMetrics> {
    if !pred.same_shape(gt) || pred.channels() != 1 {
        return Err(Error::ShapeMismatch("prediction and ground truth must be matching single-channel grids".into()));
    }
    if let Some(m) = mask {
        if m.height() != gt.height() || m.width() != gt.width() {
            return Err(Error::ShapeMismatch("mask does not match the depth grids".into()));
        }
    }
    let mut p = Vec::new();
    let mut g = Vec::new();
    for (i, (&pv, &gv)) in pred.data().iter().zip(gt.data()).enumerate() {
        let on = mask.is_none_or(|m| m.data()[i] >= 0.5);
        if on && gv > cfg.min_depth && gv < cfg.max_depth {
            p.push(pv);
            g.push(gv);
        }
    }
    if p.is_empty() {
        return Err(Error::EmptyMask);
    }
    if cfg.median_scale {
        let s = median(&mut g.clone()) / median(&mut p.clone());
        p.iter_mut().for_each(|v| *v *= s);
    }
    p.iter_mut().for_each(|v| *v = v.clamp(cfg.min_depth, cfg.max_depth));

    let n = p.len() as f64;
    let (mut abs_rel, mut sq_rel, mut se, mut sle) = (Sum::default(), Sum::default(), Sum::default(), Sum::default());
    let mut hits = [0usize; 3];
    for (&pv, &gv) in p.iter().zip(&g) {
        let d = pv - gv;
        abs_rel.add(d.abs() / gv);
        sq_rel.add(d * d / gv);
        se.add(d * d);
        let dl = pv.ln() - gv.ln();
        sle.add(dl * dl);
        let ratio = (pv / gv).max(gv / pv);
        for (k, h) in hits.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *h += 1;
            }
        }
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel.value() / n,
        sq_rel: sq_rel.value() / n,
        rmse: (se.value() / n).sqrt(),
        rmse_log: (sle.value() / n).sqrt(),
        a1: hits[0] as f64 / n,
        a2: hits[1] as f64 / n,
        a3: hits[2] as f64 / n,
    })
}

/// Parses KITTI odometry poses: one row-major `[R|t]` (12 reals) per
/// line. Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_kitti_poses(text: &str) -> Result<Trajectory> {
    let mut poses = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedLine { line: i + 1, reason };
        let vals = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| malformed(format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        let m: [f64; 12] = vals
            .as_slice()
            .try_into()
            .map_err(|_| malformed(format!("expected 12 values, found {}", vals.len())))?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(malformed("non-finite value".into()));
        }
        poses.push(RigidTransform::from_row_major_3x4(&m));
    }
    Ok(Trajectory { poses })
}

pub fn format_kitti_poses(traj: &Trajectory) -> String {
    let mut out = String::new();
    for p in &traj.poses {
        let m = p.to_row_major_3x4();
        for (i, v) in m.iter().enumerate() {
            let sep = if i == 11 { "\n" } else { " " };
            let _ = write!(out, "{v:.12e}{sep}");
        }
    }
    out
}
