//! Direct feature-metric pose estimation.
//!
//! The pose `T` maps target-camera coordinates into source-camera
//! coordinates. Each iteration evaluates the patch residuals of the selected
//! target pixels, drops outliers above `½(median + max)` of the squared
//! norms, solves the damped normal equations and updates `T ← exp(δξ) ∘ T`.
//! Levels run coarse to fine; between levels the translation is rescaled by
//! the ratio of mean depths.
//!
//! Internally the translational part of the twist is measured in units of
//! the level's mean depth. That makes damping, convergence tests and the
//! whole iterate sequence invariant to a uniform rescaling of depth.

mod normal;
mod residuals;

use alloc::{collections::BTreeMap, format, string::String, vec::Vec};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Twist};
use crate::grid::{Grid, PatchSpec};
use crate::pyramid::{Pyramid, PyramidConfig, LEVELS};
use crate::selection::SelectionMask;

pub use normal::{gauss_newton_step, update_pose, NormalEquations};
pub use residuals::{
    compute_residuals, inlier_indices, jacobian_ic, outlier_threshold, Jacobians, ResidualPoint, ResidualSet,
};

use residuals::{Problem, PointLinearization};

/// Where the Jacobian is linearized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    /// Re-linearize at the current pose every iteration.
    PerIteration,
    /// Linearize once at the level's initial pose and reuse it (strict
    /// inverse-compositional style).
    FrozenPerLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once `‖δξ‖` (translation in mean-depth units) drops below this.
    pub convergence: f64,
    pub damping_floor: f64,
    pub damping_ceiling: f64,
    /// Fewer valid points than this skips the level.
    pub min_inliers: usize,
    pub jacobian_mode: JacobianMode,
    /// Index 0 is level 1.
    pub enabled_levels: [bool; LEVELS],
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 15,
            convergence: 1e-7,
            damping_floor: 1e-6,
            damping_ceiling: 1e2,
            min_inliers: 24,
            jacobian_mode: JacobianMode::PerIteration,
            enabled_levels: [true; LEVELS],
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be >= 1".into()));
        }
        for (name, v) in [
            ("convergence", self.convergence),
            ("damping_floor", self.damping_floor),
            ("damping_ceiling", self.damping_ceiling),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.damping_ceiling < self.damping_floor {
            return Err(Error::InvalidArgument("damping_ceiling must be >= damping_floor".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    /// Valid selected points before outlier removal.
    pub valid_points: usize,
    pub inliers: usize,
    /// `None` when every norm equalled the median and removal was skipped.
    pub threshold: Option<f64>,
    /// Linear pixel indices (`y * W + x`) removed as outliers.
    pub removed: Vec<usize>,
    /// Inlier energy at the pose entering the iteration.
    pub energy: f64,
    /// Same inliers' energy at the accepted pose; `None` if no step was accepted.
    pub energy_after: Option<f64>,
    pub damping: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LevelStatus {
    Converged,
    MaxIterations,
    /// No damped step lowered the energy.
    Stalled,
    Disabled,
    /// The level could not run; its initialization passed through.
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelLog {
    pub level: usize,
    pub mean_depth: f64,
    pub selected: usize,
    pub initial: RigidTransform,
    pub result: RigidTransform,
    pub status: LevelStatus,
    pub iterations: Vec<IterationLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub pose: RigidTransform,
    /// Coarsest level first.
    pub levels: Vec<LevelLog>,
}

impl SolveReport {
    pub fn level(&self, level: usize) -> Option<&LevelLog> {
        self.levels.iter().find(|l| l.level == level)
    }

    pub fn converged(&self) -> bool {
        self.level(1).is_some_and(|l| l.status == LevelStatus::Converged)
    }
}

/// Inputs of one pyramid level.
#[derive(Debug, Clone, Copy)]
pub struct LevelProblem<'a> {
    pub target: &'a Grid,
    pub source: &'a Grid,
    pub depth: &'a Grid,
    pub mask: &'a SelectionMask,
    pub intrinsics: &'a crate::geometry::Intrinsics,
    pub patch: PatchSpec,
}

/// Runs the damped Gauss-Newton loop on one level starting from `init`.
pub fn solve_level(problem: &LevelProblem<'_>, init: &RigidTransform, cfg: &SolverConfig) -> Result<(RigidTransform, LevelLog)> {
    solve_level_numbered(problem, init, cfg, 1)
}

fn solve_level_numbered(
    lp: &LevelProblem<'_>,
    init: &RigidTransform,
    cfg: &SolverConfig,
    level: usize,
) -> Result<(RigidTransform, LevelLog)> {
    cfg.validate()?;
    let problem = Problem::new(Some(lp.target), lp.source, lp.depth, Some(lp.mask), lp.intrinsics, lp.patch)?;
    let width = lp.source.width();
    let mean_depth = lp.depth.mean();
    let selected = problem.selected_pixels(lp.mask);

    let mut log = LevelLog {
        level,
        mean_depth,
        selected: selected.len(),
        initial: *init,
        result: *init,
        status: LevelStatus::MaxIterations,
        iterations: Vec::new(),
    };

    let frozen = match cfg.jacobian_mode {
        JacobianMode::PerIteration => None,
        JacobianMode::FrozenPerLevel => {
            let eval = problem.evaluate(&selected, init, true);
            let dim = problem.dim();
            let grads = eval.gradients.expect("requested");
            let map: BTreeMap<(usize, usize), (PointLinearization, Vec<f64>)> = eval
                .set
                .points()
                .iter()
                .zip(eval.linear)
                .enumerate()
                .map(|(i, (p, lin))| ((p.y, p.x), (lin, grads[i * dim * 2..(i + 1) * dim * 2].to_vec())))
                .collect();
            Some(map)
        }
    };

    let mut pose = *init;
    let mut damping = cfg.damping_floor;
    for iteration in 1..=cfg.max_iterations {
        let eval = problem.evaluate(&selected, &pose, false);
        let set = &eval.set;
        if set.len() < cfg.min_inliers {
            if iteration == 1 {
                return Err(Error::InvalidArgument(format!(
                    "level {level}: {} valid points, need {}",
                    set.len(),
                    cfg.min_inliers
                )));
            }
            log.status = LevelStatus::Stalled;
            break;
        }
        let (kept, threshold) = inlier_indices(set)?;
        let removed = if threshold.is_some() {
            let mut is_kept = alloc::vec![false; set.len()];
            kept.iter().for_each(|&i| is_kept[i] = true);
            set.points()
                .iter()
                .zip(is_kept)
                .filter(|(_, k)| !k)
                .map(|(p, _)| p.index(width))
                .collect()
        } else {
            Vec::new()
        };

        let mut ne = NormalEquations::default();
        match &frozen {
            None => {
                for &i in &kept {
                    ne.add_linearization(&eval.linear[i], eval.linear[i].gtr);
                }
            }
            Some(map) => {
                for &i in &kept {
                    let p = &set.points()[i];
                    if let Some((lin, grads)) = map.get(&(p.y, p.x)) {
                        let r = set.residual(i);
                        let mut gtr = [0.0; 2];
                        for (e, &re) in r.iter().enumerate() {
                            gtr[0] += grads[2 * e] * re;
                            gtr[1] += grads[2 * e + 1] * re;
                        }
                        ne.add_linearization(lin, gtr);
                    }
                }
            }
        }

        let inlier_pixels: Vec<(usize, usize)> = kept.iter().map(|&i| (set.points()[i].y, set.points()[i].x)).collect();
        let mut entry = IterationLog {
            iteration,
            valid_points: set.len(),
            inliers: kept.len(),
            threshold,
            removed,
            energy: kept.iter().map(|&i| set.points()[i].squared_norm).sum(),
            energy_after: None,
            damping,
            step_norm: 0.0,
            accepted: false,
        };

        if ne.count < cfg.min_inliers {
            log.iterations.push(entry);
            if iteration == 1 {
                return Err(Error::InvalidArgument(format!(
                    "level {level}: {} inliers, need {}",
                    ne.count, cfg.min_inliers
                )));
            }
            log.status = LevelStatus::Stalled;
            break;
        }

        let mut finished = false;
        loop {
            let step = match ne.solve(damping, mean_depth) {
                Ok(s) => s,
                Err(Error::SingularSystem(c)) => {
                    damping *= 10.0;
                    if damping > cfg.damping_ceiling {
                        log.iterations.push(entry);
                        return Err(Error::SingularSystem(c));
                    }
                    continue;
                }
                Err(e) => return Err(e),
            };
            let normalized = Twist::new(step.v / mean_depth, step.w);
            let step_norm = normalized.norm();
            entry.damping = damping;
            entry.step_norm = step_norm;
            // Below the threshold the level has converged; the step itself
            // is under the solver's resolution and is not applied, so
            // identical views stay exactly at their initialization.
            if step_norm < cfg.convergence {
                log.status = LevelStatus::Converged;
                finished = true;
                break;
            }
            let candidate = update_pose(&pose, &step);

            // Compare energies over the inliers valid at both poses.
            let after = problem.evaluate(&inlier_pixels, &candidate, false).set;
            let after_pixels: BTreeMap<(usize, usize), f64> =
                after.points().iter().map(|p| ((p.y, p.x), p.squared_norm)).collect();
            let before_common: f64 = kept
                .iter()
                .map(|&i| &set.points()[i])
                .filter(|p| after_pixels.contains_key(&(p.y, p.x)))
                .map(|p| p.squared_norm)
                .sum();
            let after_energy = after.energy();

            let descends = after.len() >= cfg.min_inliers && after_energy <= before_common + 1e-12;
            if descends {
                pose = candidate;
                entry.accepted = true;
                entry.energy = before_common;
                entry.energy_after = Some(after_energy);
                damping = (damping / 10.0).max(cfg.damping_floor);
                break;
            }
            damping *= 10.0;
            if damping > cfg.damping_ceiling {
                log.status = LevelStatus::Stalled;
                finished = true;
                break;
            }
        }
        log.iterations.push(entry);
        if finished {
            break;
        }
    }
    log.result = pose;
    Ok((pose, log))
}

/// Coarse-to-fine solve over four levels, starting at level 4 from the
/// identity. A level that cannot run passes its initialization through.
pub fn solve_pyramid(
    target: &Pyramid,
    source: &Pyramid,
    depth: &Pyramid,
    masks: &[SelectionMask],
    levels: &PyramidConfig,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    if masks.len() != LEVELS {
        return Err(Error::ShapeMismatch(format!("need {LEVELS} masks, got {}", masks.len())));
    }
    for l in 1..=LEVELS {
        Problem::new(
            Some(target.level(l)),
            source.level(l),
            depth.level(l),
            Some(&masks[l - 1]),
            target.intrinsics(l),
            levels.level(l).patch,
        )?;
    }

    let mut pose = RigidTransform::identity();
    let mut logs = Vec::with_capacity(LEVELS);
    for l in (1..=LEVELS).rev() {
        if l < LEVELS {
            let ratio = depth.level(l).mean() / depth.level(l + 1).mean();
            pose.translation *= ratio;
        }
        let lp = LevelProblem {
            target: target.level(l),
            source: source.level(l),
            depth: depth.level(l),
            mask: &masks[l - 1],
            intrinsics: target.intrinsics(l),
            patch: levels.level(l).patch,
        };
        if !cfg.enabled_levels[l - 1] {
            logs.push(LevelLog {
                level: l,
                mean_depth: lp.depth.mean(),
                selected: lp.mask.selected_count(),
                initial: pose,
                result: pose,
                status: LevelStatus::Disabled,
                iterations: Vec::new(),
            });
            continue;
        }
        match solve_level_numbered(&lp, &pose, cfg, l) {
            Ok((next, log)) => {
                pose = next;
                logs.push(log);
            }
            Err(e) => logs.push(LevelLog {
                level: l,
                mean_depth: lp.depth.mean(),
                selected: lp.mask.selected_count(),
                initial: pose,
                result: pose,
                status: LevelStatus::Failed(format!("{e}")),
                iterations: Vec::new(),
            }),
        }
    }
    Ok(SolveReport { pose, levels: logs })
}
