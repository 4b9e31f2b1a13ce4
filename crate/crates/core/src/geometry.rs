//! Rigid motion on SE(3), its se(3) tangent space, and the pinhole camera.
//!
//! Transforms act on column vectors: `T * x = R x + t`. Composition
//! `a.compose(&b)` is the transform that applies `b` first and then `a`.

use core::ops::{Mul, Neg};

use nalgebra::{Matrix2x6, Matrix3, Vector3, Vector6};

#[allow(unused_imports)] // float math without std
use num_traits::Float;

use crate::error::{Error, Result};

const SERIES_THRESHOLD: f64 = 1e-8;
const NEAR_PI: f64 = 1e-6;
const DRIFT_TOLERANCE: f64 = 1e-12;

/// An element of se(3): translational part `v` followed by rotational part `w`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub v: Vector3<f64>,
    pub w: Vector3<f64>,
}

impl Twist {
    pub fn new(v: Vector3<f64>, w: Vector3<f64>) -> Self {
        Self { v, w }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a twist from `[vx, vy, vz, wx, wy, wz]`.
    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            v: Vector3::new(x[0], x[1], x[2]),
            w: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(self.v.x, self.v.y, self.v.z, self.w.x, self.w.y, self.w.z)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.w.iter()).all(|x| x.is_finite())
    }

    pub fn exp(&self) -> RigidTransform {
        exp_map(self)
    }
}

impl Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.v, -self.w)
    }
}

impl Mul<f64> for Twist {
    type Output = Twist;
    fn mul(self, s: f64) -> Twist {
        Twist::new(self.v * s, self.w * s)
    }
}

/// A rigid transform `x -> R x + t` with `R` in SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates orthonormality (`RᵀR = I`, `det R = 1`, both within 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let t = Self {
            rotation,
            translation,
        };
        if !t.is_valid(1e-9) {
            return Err(Error::InvalidArgument(alloc::format!(
                "rotation is not orthonormal: {rotation}"
            )));
        }
        Ok(t)
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn is_valid(&self, tol: f64) -> bool {
        let r = &self.rotation;
        let ortho = (r.transpose() * r - Matrix3::identity()).amax();
        ortho <= tol
            && (r.determinant() - 1.0).abs() <= tol
            && self.translation.iter().all(|x| x.is_finite())
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other`, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        compose(self, other)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let (sin, cos) = angle_sin_cos(&self.rotation);
        sin.atan2(cos)
    }

    pub fn log(&self) -> Result<Twist> {
        log_map(self)
    }

    /// Row-major `[R | t]`, the layout used by KITTI pose files.
    #[rustfmt::skip]
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_row_major_3x4(m: &[f64; 12]) -> Self {
        Self {
            rotation: Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
            translation: Vector3::new(m[3], m[7], m[11]),
        }
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        compose(&self, &rhs)
    }
}

/// Skew-symmetric matrix with `hat(a) * b = a × b`.
pub fn hat(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Returns `(sin θ, cos θ)` of the rotation angle without going through `acos`.
fn angle_sin_cos(r: &Matrix3<f64>) -> (f64, f64) {
    let skew = vee(&(r - r.transpose())) * 0.5;
    (skew.norm(), 0.5 * (r.trace() - 1.0))
}

/// Coefficients `(sin θ/θ, (1-cos θ)/θ², (θ-sin θ)/θ³)` of the Rodrigues formulas.
fn rodrigues_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SERIES_THRESHOLD {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let half_sin = (0.5 * theta).sin();
        let t2 = theta * theta;
        (
            theta.sin() / theta,
            2.0 * half_sin * half_sin / t2,
            (theta - theta.sin()) / (t2 * theta),
        )
    }
}

/// Exponential map se(3) → SE(3).
pub fn exp_map(xi: &Twist) -> RigidTransform {
    let theta = xi.w.norm();
    let (a, b, c) = rodrigues_coefficients(theta);
    let w = hat(&xi.w);
    let w2 = w * w;
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let left_jacobian = Matrix3::identity() + w * b + w2 * c;
    RigidTransform {
        rotation,
        translation: left_jacobian * xi.v,
    }
}

/// Logarithm SE(3) → se(3). Fails within 1e-6 of a half turn.
pub fn log_map(t: &RigidTransform) -> Result<Twist> {
    let r = &t.rotation;
    let (sin, cos) = angle_sin_cos(r);
    let theta = sin.atan2(cos);
    if core::f64::consts::PI - theta < NEAR_PI {
        return Err(Error::AngleNearPi);
    }

    let w = if theta < SERIES_THRESHOLD {
        vee(&(r - r.transpose())) * 0.5
    } else if theta < 3.0 {
        vee(&(r - r.transpose())) * (0.5 * theta / sin)
    } else {
        // sin θ is small here; recover the axis from the symmetric part.
        let s = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
        let s = s / (1.0 - cos);
        let mut best = 0;
        for i in 1..3 {
            if s[(i, i)] > s[(best, best)] {
                best = i;
            }
        }
        let mut axis: Vector3<f64> = s.column(best).into_owned();
        axis /= axis.norm();
        if axis.dot(&vee(&(r - r.transpose()))) < 0.0 {
            axis = -axis;
        }
        axis * theta
    };

    let wh = hat(&w);
    // (1 - (θ/2) cot(θ/2)) / θ²; the closed form cancels badly for small θ.
    let t2 = theta * theta;
    let k = if theta < 1e-2 {
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / t2
    };
    let inv_left_jacobian = Matrix3::identity() - wh * 0.5 + wh * wh * k;
    Ok(Twist {
        v: inv_left_jacobian * t.translation,
        w,
    })
}

/// `a ∘ b`, re-orthonormalizing the rotation if it has drifted off SO(3).
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    let mut rotation = a.rotation * b.rotation;
    let drift = (rotation.transpose() * rotation - Matrix3::identity()).amax();
    if drift > DRIFT_TOLERANCE {
        rotation = orthonormalize(&rotation);
    }
    RigidTransform {
        rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

/// Newton iteration for the orthogonal polar factor.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let mut q = *r;
    for _ in 0..8 {
        let e = q.transpose() * q - Matrix3::identity();
        if e.amax() <= 1e-15 {
            break;
        }
        q = q * (Matrix3::identity() * 1.5 - (q.transpose() * q) * 0.5);
    }
    q
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && cx.is_finite() && cy.is_finite()) || !fx.is_finite() || !fy.is_finite() {
            return Err(Error::InvalidArgument(alloc::format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Continuous image coordinates; `(0, 0)` is the center of the top-left pixel.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

pub fn backproject(p: Pixel, z: f64, k: &Intrinsics) -> Result<Vector3<f64>> {
    if !(z > 0.0) {
        return Err(Error::NonPositiveDepth(z));
    }
    Ok(Vector3::new(
        z * (p.u - k.cx) / k.fx,
        z * (p.v - k.cy) / k.fy,
        z,
    ))
}

pub fn project(x: &Vector3<f64>, k: &Intrinsics) -> Result<Pixel> {
    if !(x.z > 1e-9) {
        return Err(Error::PointBehindCamera(x.z));
    }
    Ok(Pixel::new(
        k.fx * x.x / x.z + k.cx,
        k.fy * x.y / x.z + k.cy,
    ))
}

/// Moves pixel `p` with depth `z` through `t`; returns the new pixel and its depth.
pub fn warp_point(p: Pixel, z: f64, t: &RigidTransform, k: &Intrinsics) -> Result<(Pixel, f64)> {
    let x = t.transform_point(&backproject(p, z, k)?);
    Ok((project(&x, k)?, x.z))
}

/// Derivative of the projected pixel of `x` under a left perturbation
/// `exp(δξ) ∘ T`, evaluated at `δξ = 0`, where `x` is already `T` applied.
pub fn projection_jacobian(x: &Vector3<f64>, k: &Intrinsics) -> Matrix2x6<f64> {
    let iz = 1.0 / x.z;
    let iz2 = iz * iz;
    let (fx, fy) = (k.fx, k.fy);
    let (px, py, pz) = (x.x, x.y, x.z);
    // dπ/dX · [I | -[X]x]
    let a = [fx * iz, 0.0, -fx * px * iz2];
    let b = [0.0, fy * iz, -fy * py * iz2];
    let row = |d: [f64; 3]| -> [f64; 6] {
        [
            d[0],
            d[1],
            d[2],
            d[1] * -pz + d[2] * py,
            d[0] * pz - d[2] * px,
            -d[0] * py + d[1] * px,
        ]
    };
    let ra = row(a);
    let rb = row(b);
    Matrix2x6::new(
        ra[0], ra[1], ra[2], ra[3], ra[4], ra[5], rb[0], rb[1], rb[2], rb[3], rb[4], rb[5],
    )
}

/// Intrinsics of pyramid level `level` (1 = full resolution).
///
/// Coarse pixel `i` is fine pixel `2i` (smooth-then-decimate from index 0),
/// so all four parameters scale by `2^(1-level)`.
pub fn rescale_intrinsics(k: &Intrinsics, level: usize) -> Result<Intrinsics> {
    if !(1..=4).contains(&level) {
        return Err(Error::InvalidLevel(level));
    }
    let s = 1.0 / (1u32 << (level - 1)) as f64;
    Ok(Intrinsics {
        fx: k.fx * s,
        fy: k.fy * s,
        cx: k.cx * s,
        cy: k.cy * s,
    })
}
