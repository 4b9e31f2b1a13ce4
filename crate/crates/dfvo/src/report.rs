//! Text renderings: the line-oriented solve log and the `key = value` dump.
//!
//! Dump schema: one `key = value` per line, keys dot-separated, stable
//! order. Numbers use Rust's shortest round-trip `{:e}` form so dumps are
//! byte-identical across runs. Solve keys:
//!
//! ```text
//! pair.<i>.pose                          12 reals, row-major [R|t] (target → source)
//! pair.<i>.relative                      12 reals, pose of frame i+1 in frame i
//! pair.<i>.level.<l>.status              converged | max-iterations | stalled | disabled | failed
//! pair.<i>.level.<l>.{mean_depth,selected,iterations}
//! pair.<i>.level.<l>.iter.<n>.{valid,inliers,removed,threshold,energy,energy_after,damping,step,accepted}
//! ```

use std::fmt::Write;

use dfvo_core::solver::{LevelStatus, SolveReport};
use dfvo_core::RigidTransform;

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn pose_values(t: &RigidTransform) -> String {
    t.to_row_major_3x4().iter().map(|v| num(*v)).collect::<Vec<_>>().join(" ")
}

fn status(s: &LevelStatus) -> (&'static str, Option<&str>) {
    match s {
        LevelStatus::Converged => ("converged", None),
        LevelStatus::MaxIterations => ("max-iterations", None),
        LevelStatus::Stalled => ("stalled", None),
        LevelStatus::Disabled => ("disabled", None),
        LevelStatus::Failed(why) => ("failed", Some(why.as_str())),
    }
}

/// Human-readable log of one pair's solve.
pub fn solve_log(pair: usize, r: &SolveReport, out: &mut String) {
    let _ = writeln!(out, "pair {pair}: frame {pair} -> frame {}", pair + 1);
    for l in &r.levels {
        let (s, why) = status(&l.status);
        let _ = write!(
            out,
            "  level {}: {s} after {} iterations, {} selected, mean depth {:.6}",
            l.level,
            l.iterations.len(),
            l.selected,
            l.mean_depth
        );
        match why {
            Some(w) => {
                let _ = writeln!(out, " ({w})");
            }
            None => out.push('\n'),
        }
        let last = l.iterations.len();
        for (n, it) in l.iterations.iter().enumerate() {
            let note = match (it.accepted, n + 1 == last && l.status == LevelStatus::Converged) {
                (true, _) => "",
                (false, true) => " below tolerance",
                (false, false) => " rejected",
            };
            let after = it.energy_after.map_or("-".to_string(), |e| format!("{e:.6e}"));
            let threshold = it.threshold.map_or("-".to_string(), |t| format!("{t:.6e}"));
            let _ = writeln!(
                out,
                "    iter {:2}: valid {:6} inliers {:6} threshold {threshold} energy {:.6e} -> {after} damping {:.0e} step {:.3e}{}",
                it.iteration,
                it.valid_points,
                it.inliers,
                it.energy,
                it.damping,
                it.step_norm,
                note
            );
        }
    }
    let _ = writeln!(out, "  pose {}", pose_values(&r.pose));
}

/// Key-value lines for one pair's solve.
pub fn solve_dump(pair: usize, r: &SolveReport, out: &mut Vec<(String, String)>) {
    let p = format!("pair.{pair}");
    out.push((format!("{p}.pose"), pose_values(&r.pose)));
    out.push((format!("{p}.relative"), pose_values(&r.pose.inverse())));
    out.push((format!("{p}.converged"), r.converged().to_string()));
    for l in &r.levels {
        let k = format!("{p}.level.{}", l.level);
        let (s, why) = status(&l.status);
        out.push((format!("{k}.status"), s.into()));
        if let Some(w) = why {
            out.push((format!("{k}.reason"), w.into()));
        }
        out.push((format!("{k}.mean_depth"), num(l.mean_depth)));
        out.push((format!("{k}.selected"), l.selected.to_string()));
        out.push((format!("{k}.iterations"), l.iterations.len().to_string()));
        for it in &l.iterations {
            let i = format!("{k}.iter.{}", it.iteration);
            out.push((format!("{i}.valid"), it.valid_points.to_string()));
            out.push((format!("{i}.inliers"), it.inliers.to_string()));
            out.push((format!("{i}.removed"), it.removed.len().to_string()));
            out.push((format!("{i}.threshold"), it.threshold.map_or("none".into(), num)));
            out.push((format!("{i}.energy"), num(it.energy)));
            out.push((format!("{i}.energy_after"), it.energy_after.map_or("none".into(), num)));
            out.push((format!("{i}.damping"), num(it.damping)));
            out.push((format!("{i}.step"), num(it.step_norm)));
            out.push((format!("{i}.accepted"), it.accepted.to_string()));
        }
    }
}

pub fn render_dump(kv: &[(String, String)]) -> String {
    let mut s = String::new();
    for (k, v) in kv {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Two-column table, keys left-aligned to the longest key.
pub fn table(rows: &[(String, String)]) -> String {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        let _ = writeln!(s, "{k:<w$}  {v}");
    }
    s
}
