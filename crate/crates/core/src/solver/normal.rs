use alloc::format;

use nalgebra::{Matrix2, Matrix6, Vector2, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{compose, exp_map, RigidTransform, Twist};
use crate::solver::residuals::{Jacobians, PointLinearization, ResidualSet};

const MAX_CONDITION: f64 = 1e12;
const MIN_POINTS: usize = 6;

/// Accumulated `Σ JᵢᵀJᵢ` and `-Σ Jᵢᵀrᵢ`, summed in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    pub hessian: Matrix6<f64>,
    pub rhs: Vector6<f64>,
    pub count: usize,
}

impl Default for NormalEquations {
    fn default() -> Self {
        Self {
            hessian: Matrix6::zeros(),
            rhs: Vector6::zeros(),
            count: 0,
        }
    }
}

impl NormalEquations {
    /// Adds a point given its row-major `dim × 6` Jacobian and residual.
    pub fn add(&mut self, jacobian: &[f64], residual: &[f64]) {
        for (row, &r) in jacobian.chunks_exact(6).zip(residual) {
            let j = Vector6::from_column_slice(row);
            self.hessian += j * j.transpose();
            self.rhs -= j * r;
        }
        self.count += 1;
    }

    /// Adds a point from its factored form `J = -G P`.
    pub(crate) fn add_linearization(&mut self, lin: &PointLinearization, gtr: [f64; 2]) {
        let m = Matrix2::new(lin.gtg[0], lin.gtg[1], lin.gtg[1], lin.gtg[2]);
        self.hessian += lin.proj.transpose() * m * lin.proj;
        self.rhs += lin.proj.transpose() * Vector2::new(gtr[0], gtr[1]);
        self.count += 1;
    }

    /// Solves `(D H D + λI) δₙ = D b` and returns `δ = D δₙ`, where `D`
    /// scales the translational components by `translation_scale`.
    pub fn solve(&self, damping: f64, translation_scale: f64) -> Result<Twist> {
        if self.count < MIN_POINTS {
            return Err(Error::SingularSystem(f64::INFINITY));
        }
        let d = Vector6::new(translation_scale, translation_scale, translation_scale, 1.0, 1.0, 1.0);
        let scale = Matrix6::from_diagonal(&d);
        let a = scale * self.hessian * scale + Matrix6::identity() * damping;
        let b = scale * self.rhs;

        let eig = a.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 0.0) || !(hi / lo <= MAX_CONDITION) {
            let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            return Err(Error::SingularSystem(cond));
        }
        let chol = a
            .cholesky()
            .ok_or_else(|| Error::SingularSystem(hi / lo))?;
        let step = chol.solve(&b);
        Ok(Twist::from_vector(&d.component_mul(&step)))
    }
}

/// Damped Gauss-Newton increment `(Σ JᵀJ + λI)⁻¹ (−Σ Jᵀr)`.
pub fn gauss_newton_step(rs: &ResidualSet, j: &Jacobians, damping: f64) -> Result<Twist> {
    if rs.len() != j.len() || (!rs.is_empty() && rs.dim() != j.dim()) {
        return Err(Error::ShapeMismatch(format!(
            "{} residuals of dim {} vs {} Jacobians of dim {}",
            rs.len(),
            rs.dim(),
            j.len(),
            j.dim()
        )));
    }
    let mut ne = NormalEquations::default();
    for i in 0..rs.len() {
        ne.add(j.matrix(i), rs.residual(i));
    }
    ne.solve(damping, 1.0)
}

/// `exp(δξ) ∘ T`.
pub fn update_pose(t: &RigidTransform, delta: &Twist) -> RigidTransform {
    compose(&exp_map(delta), t)
}
