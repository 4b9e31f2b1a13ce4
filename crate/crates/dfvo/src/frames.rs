//! Frame directories.
//!
//! ```text
//! calib.txt                      fx fy cx cy (full resolution)
//! poses.txt                      camera-to-world poses, KITTI format (optional for solve)
//! frame_000000.image.dfog        intensity image; or frame_000000.pgm / .ppm
//! frame_000000.depth.dfog        depth, required
//! frame_000000.features.dfog     optional feature grid (any channel count)
//! frame_000000.prob.dfog         optional selection probabilities (1 channel)
//! frame_000000.recon.dfog        optional autoencoder output paired with the features
//! ```
//!
//! Frames are numbered contiguously from 0.

use std::path::{Path, PathBuf};

use dfvo_core::eval::Trajectory;
use dfvo_core::{Grid, GridKind, Intrinsics};

use crate::{io, CliError};

#[derive(Debug, Clone)]
pub struct Frame {
    pub image: Grid,
    pub depth: Grid,
    pub features: Option<Grid>,
    pub prob: Option<Grid>,
    pub recon: Option<Grid>,
}

#[derive(Debug, Clone)]
pub struct FrameSet {
    pub intrinsics: Intrinsics,
    pub frames: Vec<Frame>,
    pub poses: Option<Trajectory>,
}

pub fn frame_path(dir: &Path, index: usize, suffix: &str) -> PathBuf {
    dir.join(format!("frame_{index:06}.{suffix}"))
}

fn optional(dir: &Path, i: usize, suffix: &str, kind: GridKind) -> Result<Option<Grid>, CliError> {
    let p = frame_path(dir, i, suffix);
    if p.exists() {
        io::read_dfog(&p, kind).map(Some)
    } else {
        Ok(None)
    }
}

fn image_at(dir: &Path, i: usize) -> Result<Option<Grid>, CliError> {
    if let Some(g) = optional(dir, i, "image.dfog", GridKind::Image)? {
        return Ok(Some(g));
    }
    for ext in ["pgm", "ppm"] {
        let p = frame_path(dir, i, ext);
        if p.exists() {
            return io::read_pnm(&p).map(Some);
        }
    }
    Ok(None)
}

pub fn load(dir: &Path) -> Result<FrameSet, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Input(format!("{} is not a directory", dir.display())));
    }
    let intrinsics = io::read_calib(&dir.join("calib.txt"))?;
    let mut frames = Vec::new();
    while let Some(image) = image_at(dir, frames.len())? {
        let i = frames.len();
        let depth_path = frame_path(dir, i, "depth.dfog");
        if !depth_path.exists() {
            return Err(CliError::Input(format!("frame {i} has no depth file {}", depth_path.display())));
        }
        let depth = io::read_dfog(&depth_path, GridKind::Depth)?;
        let f = Frame {
            image,
            depth,
            features: optional(dir, i, "features.dfog", GridKind::Feature)?,
            prob: optional(dir, i, "prob.dfog", GridKind::Mask)?,
            recon: optional(dir, i, "recon.dfog", GridKind::Feature)?,
        };
        let (h, w) = (f.image.height(), f.image.width());
        let grids = [Some(&f.depth), f.features.as_ref(), f.prob.as_ref(), f.recon.as_ref()];
        if grids.iter().flatten().any(|g| g.height() != h || g.width() != w) {
            return Err(CliError::Input(format!("frame {i}: grids differ in size from the {h}x{w} image")));
        }
        if f.depth.channels() != 1 || f.prob.as_ref().is_some_and(|p| p.channels() != 1) {
            return Err(CliError::Input(format!("frame {i}: depth and probability grids need one channel")));
        }
        frames.push(f);
    }
    if frames.len() < 2 {
        return Err(CliError::Input(format!("{} holds {} frame(s); need at least 2", dir.display(), frames.len())));
    }
    let (h, w) = (frames[0].image.height(), frames[0].image.width());
    if frames.iter().any(|f| f.image.height() != h || f.image.width() != w) {
        return Err(CliError::Input("frames differ in size".into()));
    }
    let poses_path = dir.join("poses.txt");
    let poses = if poses_path.exists() {
        let t = io::read_poses(&poses_path)?;
        if t.len() != frames.len() {
            return Err(CliError::Input(format!("poses.txt has {} poses for {} frames", t.len(), frames.len())));
        }
        Some(t)
    } else {
        None
    };
    Ok(FrameSet { intrinsics, frames, poses })
}

/// Writes a frame set in the layout above, plus a PGM preview per frame.
pub fn export(dir: &Path, set: &FrameSet) -> Result<(), CliError> {
    io::write_calib(&dir.join("calib.txt"), &set.intrinsics)?;
    if let Some(p) = &set.poses {
        io::write_poses(&dir.join("poses.txt"), p)?;
    }
    for (i, f) in set.frames.iter().enumerate() {
        io::write_dfog(&frame_path(dir, i, "image.dfog"), &f.image)?;
        if matches!(f.image.channels(), 1 | 3) {
            let ext = if f.image.channels() == 1 { "preview.pgm" } else { "preview.ppm" };
            io::write_pnm(&frame_path(dir, i, ext), &f.image)?;
        }
        io::write_dfog(&frame_path(dir, i, "depth.dfog"), &f.depth)?;
        for (suffix, g) in [("features.dfog", &f.features), ("prob.dfog", &f.prob), ("recon.dfog", &f.recon)] {
            if let Some(g) = g {
                io::write_dfog(&frame_path(dir, i, suffix), g)?;
            }
        }
    }
    Ok(())
}
