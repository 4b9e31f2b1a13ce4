//! Run configuration, read from TOML. Every key is optional; see the
//! README for the full schema with defaults.

use std::path::Path;

use dfvo_core::features::FeatureSource;
use dfvo_core::losses::LossWeights;
use dfvo_core::solver::JacobianMode;
use dfvo_core::{LevelConfig, PyramidConfig, SolverConfig, LEVELS};
use serde::{Deserialize, Serialize};

use crate::{io, CliError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Gumbel temperature for point selection.
    pub tau: f64,
    pub feature_source: FeatureChoice,
    /// Channels of the random-projection feature source.
    pub projection_channels: usize,
    pub snippet_len: usize,
    /// Finest level first; exactly four entries.
    pub levels: Vec<LevelEntry>,
    pub solver: SolverSection,
    pub loss: LossSection,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureChoice {
    /// Feature files when every frame has one, otherwise `gradient`.
    Auto,
    /// `frame_XXXXXX.features.dfog`, e.g. exported from a trained network.
    Dfog,
    Intensity,
    Gradient,
    RandomProjection,
}

impl std::str::FromStr for FeatureChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "auto" => Self::Auto,
            "dfog" => Self::Dfog,
            "intensity" => Self::Intensity,
            "gradient" => Self::Gradient,
            "random-projection" => Self::RandomProjection,
            _ => return Err(format!("unknown feature source {s:?} (auto, dfog, intensity, gradient, random-projection)")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelEntry {
    pub channels: usize,
    pub patch: usize,
    pub sparsity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub convergence: f64,
    pub damping_floor: f64,
    pub damping_ceiling: f64,
    pub min_inliers: usize,
    /// "per-iteration" or "frozen".
    pub jacobian: String,
    /// Pyramid levels to run, 1 = finest.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossSection {
    pub smoothness: f64,
    pub sparsity: f64,
    pub reconstruction: f64,
    pub alpha: f64,
    pub dssim_knee: f64,
    pub l1_knee: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub depth: f64,
    pub slanted: bool,
    /// "waves" or "affine".
    pub image: String,
    /// Per-frame translation as a fraction of the mean scene depth.
    pub translation: f64,
    pub max_rotation_deg: f64,
    /// Pass/fail tolerances on every recovered relative pose.
    pub rotation_tolerance_deg: f64,
    pub translation_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub min_depth: f64,
    pub max_depth: f64,
    pub median_scale: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let levels = PyramidConfig::default()
            .levels
            .iter()
            .map(|l| LevelEntry {
                channels: l.channels,
                patch: l.patch.size(),
                sparsity: l.sparsity,
            })
            .collect();
        Self {
            seed: 42,
            tau: 0.1,
            feature_source: FeatureChoice::Auto,
            projection_channels: 16,
            snippet_len: 3,
            levels,
            solver: SolverSection::default(),
            loss: LossSection::default(),
            synth: SynthSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverConfig::default();
        Self {
            max_iterations: s.max_iterations,
            convergence: s.convergence,
            damping_floor: s.damping_floor,
            damping_ceiling: s.damping_ceiling,
            min_inliers: s.min_inliers,
            jacobian: "per-iteration".into(),
            levels: (1..=LEVELS).collect(),
        }
    }
}

impl Default for LossSection {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            smoothness: w.smoothness,
            sparsity: w.sparsity,
            reconstruction: w.reconstruction,
            alpha: w.alpha,
            dssim_knee: w.dssim_knee,
            l1_knee: w.l1_knee,
        }
    }
}

impl Default for SynthSection {
    fn default() -> Self {
        let (height, width) = dfvo_core::synthetic::BENCHMARK_SIZE;
        Self {
            height,
            width,
            channels: 16,
            depth: 6.0,
            slanted: true,
            image: "waves".into(),
            translation: 0.05,
            max_rotation_deg: 2.0,
            rotation_tolerance_deg: 0.01,
            translation_tolerance: 1e-3,
        }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = dfvo_core::eval::DepthEvalConfig::default();
        Self {
            min_depth: d.min_depth,
            max_depth: d.max_depth,
            median_scale: d.median_scale,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::from_toml(&io::read_text(p).map_err(|e| CliError::Config(e.to_string()))?),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.pyramid()?;
        self.solver()?;
        self.loss()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !matches!(self.snippet_len, 3 | 5) {
            return bad(format!("snippet_len must be 3 or 5, got {}", self.snippet_len));
        }
        if self.projection_channels == 0 {
            return bad("projection_channels must be >= 1".into());
        }
        let s = &self.synth;
        if s.height < 16 || s.width < 16 || s.channels == 0 {
            return bad(format!("synthetic scene {}x{}x{} is too small", s.height, s.width, s.channels));
        }
        if !(s.depth > 0.0) || !(s.translation >= 0.0) || !(s.max_rotation_deg >= 0.0) {
            return bad("synth depth must be positive and motion sizes non-negative".into());
        }
        if !matches!(s.image.as_str(), "waves" | "affine") {
            return bad(format!("synth.image must be \"waves\" or \"affine\", got {:?}", s.image));
        }
        let e = &self.eval;
        if !(e.min_depth > 0.0 && e.max_depth > e.min_depth) {
            return bad(format!("eval depth range [{}, {}] is empty", e.min_depth, e.max_depth));
        }
        Ok(())
    }

    pub fn pyramid(&self) -> Result<PyramidConfig, CliError> {
        if self.levels.len() != LEVELS {
            return Err(CliError::Config(format!("need exactly {LEVELS} [[levels]] entries, got {}", self.levels.len())));
        }
        let mut out = PyramidConfig::default();
        for (i, l) in self.levels.iter().enumerate() {
            out.levels[i] = LevelConfig::new(l.channels, l.patch, l.sparsity)
                .map_err(|e| CliError::Config(format!("level {}: {e}", i + 1)))?;
        }
        Ok(out)
    }

    pub fn solver(&self) -> Result<SolverConfig, CliError> {
        let s = &self.solver;
        let jacobian_mode = match s.jacobian.as_str() {
            "per-iteration" => JacobianMode::PerIteration,
            "frozen" => JacobianMode::FrozenPerLevel,
            j => return Err(CliError::Config(format!("solver.jacobian must be \"per-iteration\" or \"frozen\", got {j:?}"))),
        };
        let mut enabled = [false; LEVELS];
        for &l in &s.levels {
            if !(1..=LEVELS).contains(&l) {
                return Err(CliError::Config(format!("solver level {l} is outside 1..={LEVELS}")));
            }
            enabled[l - 1] = true;
        }
        let cfg = SolverConfig {
            max_iterations: s.max_iterations,
            convergence: s.convergence,
            damping_floor: s.damping_floor,
            damping_ceiling: s.damping_ceiling,
            min_inliers: s.min_inliers,
            jacobian_mode,
            enabled_levels: enabled,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn loss(&self) -> Result<LossWeights, CliError> {
        let l = &self.loss;
        let w = LossWeights {
            smoothness: l.smoothness,
            sparsity: l.sparsity,
            reconstruction: l.reconstruction,
            alpha: l.alpha,
            dssim_knee: l.dssim_knee,
            l1_knee: l.l1_knee,
        };
        w.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(w)
    }

    pub fn depth_eval(&self) -> dfvo_core::eval::DepthEvalConfig {
        dfvo_core::eval::DepthEvalConfig {
            median_scale: self.eval.median_scale,
            min_depth: self.eval.min_depth,
            max_depth: self.eval.max_depth,
        }
    }

    /// The feature extractor for images, or `None` when features come from files.
    pub fn feature_extractor(&self, choice: FeatureChoice) -> Option<FeatureSource> {
        match choice {
            FeatureChoice::Auto | FeatureChoice::Dfog => None,
            FeatureChoice::Intensity => Some(FeatureSource::Intensity),
            FeatureChoice::Gradient => Some(FeatureSource::Gradient),
            FeatureChoice::RandomProjection => Some(FeatureSource::RandomProjection {
                channels: self.projection_channels,
                seed: self.seed,
            }),
        }
    }
}
