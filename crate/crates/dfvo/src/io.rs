//! On-disk formats: DFOG float grids, binary PGM/PPM images, KITTI pose
//! text and the one-line calibration file.
//!
//! DFOG layout: the 4 bytes `DFOG`, then `H`, `W`, `C` as little-endian
//! u32, then `H·W·C` little-endian f32 values in row-major, channel-last
//! order.

use std::fs;
use std::path::Path;

use dfvo_core::eval::{format_kitti_poses, parse_kitti_poses, Trajectory};
use dfvo_core::{Grid, GridKind, Intrinsics};

use crate::CliError;

const MAGIC: &[u8; 4] = b"DFOG";
const HEADER: usize = 16;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn encode_dfog(g: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * g.data().len());
    out.extend_from_slice(MAGIC);
    for d in [g.height(), g.width(), g.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in g.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_dfog(bytes: &[u8], kind: GridKind) -> Result<Grid, String> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err("not a DFOG grid (bad magic or short header)".into());
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    let n = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .ok_or_else(|| format!("grid size {h}x{w}x{c} overflows"))?;
    if bytes.len() != HEADER + 4 * n {
        return Err(format!("{h}x{w}x{c} grid needs {} data bytes, file has {}", 4 * n, bytes.len() - HEADER));
    }
    let data = bytes[HEADER..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    Grid::new(h, w, c, kind, data).map_err(|e| e.to_string())
}

pub fn read_dfog(path: &Path, kind: GridKind) -> Result<Grid, CliError> {
    decode_dfog(&read_bytes(path)?, kind).map_err(|r| CliError::format(path, r))
}

pub fn write_dfog(path: &Path, g: &Grid) -> Result<(), CliError> {
    write_bytes(path, &encode_dfog(g))
}

/// P5 for one channel, P6 for three; values in `[0, 1]` map to `0..=255`.
pub fn encode_pnm(g: &Grid) -> Result<Vec<u8>, String> {
    let magic = match g.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(format!("PGM/PPM needs 1 or 3 channels, got {c}")),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", g.width(), g.height()).into_bytes();
    out.extend(g.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Grid, String> {
    // Header: magic, width, height, maxval, separated by whitespace and
    // optional `#` comments, then exactly one whitespace byte.
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM/PPM header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(format!("unsupported image magic {m:?}; expected binary P5 or P6")),
    };
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header number {s:?}"));
    let (w, h, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(format!("only maxval 255 is supported, got {maxval}"));
    }
    let n = w * h * channels;
    let data = bytes.get(pos..pos + n).ok_or("truncated pixel data")?;
    Grid::new(h, w, channels, GridKind::Image, data.iter().map(|&b| b as f64 / 255.0).collect()).map_err(|e| e.to_string())
}

pub fn read_pnm(path: &Path) -> Result<Grid, CliError> {
    decode_pnm(&read_bytes(path)?).map_err(|r| CliError::format(path, r))
}

pub fn write_pnm(path: &Path, g: &Grid) -> Result<(), CliError> {
    let bytes = encode_pnm(g).map_err(|r| CliError::format(path, r))?;
    write_bytes(path, &bytes)
}

pub fn read_poses(path: &Path) -> Result<Trajectory, CliError> {
    parse_kitti_poses(&read_text(path)?).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_poses(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    write_bytes(path, format_kitti_poses(traj).as_bytes())
}

/// `fx fy cx cy` on one line.
pub fn read_calib(path: &Path) -> Result<Intrinsics, CliError> {
    let text = read_text(path)?;
    let vals: Vec<f64> = text
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::format(path, format!("calibration: {e}")))?;
    let [fx, fy, cx, cy] = vals[..] else {
        return Err(CliError::format(path, format!("calibration needs 4 numbers (fx fy cx cy), got {}", vals.len())));
    };
    Intrinsics::new(fx, fy, cx, cy).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_calib(path: &Path, k: &Intrinsics) -> Result<(), CliError> {
    write_bytes(path, format!("{:.17e} {:.17e} {:.17e} {:.17e}\n", k.fx, k.fy, k.cx, k.cy).as_bytes())
}
