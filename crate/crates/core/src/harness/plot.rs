use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{target_paths, Engagement, TruthConfig};
use crate::assignment::Assignment;
use crate::dynamics::{VehicleParams, Vec3};
use crate::error::{Error, Result};
use crate::trajopt::{solve_min_time, ScpConfig, TrajOptProblem};

/// Positions to draw for one assigned engagement, in the x-z plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngagementPaths {
    /// Per target, flown until its assigned pursuer intercepts it (or it
    /// reaches the asset).
    pub targets: Vec<Vec<Vec3>>,
    /// Per pursuer; only the start point when its pair is infeasible.
    pub pursuers: Vec<Vec<Vec3>>,
    pub intercepts: Vec<Option<Vec3>>,
    pub asset: Vec3,
}

/// Solves each assigned pair and samples the resulting paths.
pub fn engagement_paths(
    e: &Engagement,
    assignment: &Assignment,
    params: &VehicleParams,
    scp: &ScpConfig,
    truth: &TruthConfig,
) -> Result<EngagementPaths> {
    if assignment.len() != e.n {
        return Err(Error::DimensionMismatch {
            expected: e.n,
            actual: assignment.len(),
        });
    }
    let paths = target_paths(e, params, truth.pn_gain)?;
    let mut targets = vec![Vec::new(); e.n];
    let mut pursuers = Vec::with_capacity(e.n);
    let mut intercepts = Vec::with_capacity(e.n);
    for (i, &j) in assignment.perm.iter().enumerate() {
        let p = &e.pursuers[i];
        let solution = paths[j].as_ref().and_then(|path| {
            let problem = TrajOptProblem {
                pursuer_r0: p.r,
                pursuer_v0: p.v,
                target: path.trajectory.clone(),
                target_t_hit: path.t_hit,
                params: *params,
            };
            solve_min_time(&problem, scp).ok().filter(|s| s.status.is_feasible())
        });
        let t_end = match (&solution, &paths[j]) {
            (Some(s), _) => s.t_f,
            (None, Some(path)) => path.trajectory.duration(),
            (None, None) => 0.0,
        };
        targets[j] = match &paths[j] {
            Some(path) => {
                let tr = &path.trajectory;
                let steps = (t_end / tr.dt).ceil() as usize;
                (0..=steps).map(|k| tr.position_at((k as f64 * tr.dt).min(t_end))).collect()
            }
            None => vec![e.targets[j].r],
        };
        match solution {
            Some(s) => {
                intercepts.push(s.states.last().map(|x| x.r));
                pursuers.push(s.states.iter().map(|x| x.r).collect());
            }
            None => {
                intercepts.push(None);
                pursuers.push(vec![p.r]);
            }
        }
    }
    Ok(EngagementPaths {
        targets,
        pursuers,
        intercepts,
        asset: e.asset,
    })
}

/// Standalone SVG: x horizontal, altitude up. Pursuers are dashed blue,
/// targets solid red, intercepts black circles, the asset a green square.
pub fn render_svg(paths: &EngagementPaths) -> String {
    const W: f64 = 800.0;
    const H: f64 = 600.0;
    const PAD: f64 = 40.0;
    let all = paths
        .targets
        .iter()
        .chain(&paths.pursuers)
        .flatten()
        .chain(std::iter::once(&paths.asset));
    let (mut x0, mut x1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        z0 = z0.min(p.z);
        z1 = z1.max(p.z);
    }
    let span = (x1 - x0).max(z1 - z0).max(1.0);
    let scale = ((W - 2.0 * PAD) / span).min((H - 2.0 * PAD) / span);
    let px = |p: &Vec3| (PAD + (p.x - x0) * scale, H - PAD - (p.z - z0) * scale);
    let polyline = |pts: &[Vec3]| {
        pts.iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.1},{y:.1}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    for (j, t) in paths.targets.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<polyline class="target" data-index="{j}" points="{}" fill="none" stroke="red" stroke-width="2"/>"#,
            polyline(t)
        );
    }
    for (i, p) in paths.pursuers.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<polyline class="pursuer" data-index="{i}" points="{}" fill="none" stroke="blue" stroke-width="2" stroke-dasharray="6 4"/>"#,
            polyline(p)
        );
    }
    for p in paths.intercepts.iter().flatten() {
        let (x, y) = px(p);
        let _ = writeln!(svg, r#"<circle class="intercept" cx="{x:.1}" cy="{y:.1}" r="5" fill="black"/>"#);
    }
    let (ax, ay) = px(&paths.asset);
    let _ = writeln!(
        svg,
        r#"<rect class="asset" x="{:.1}" y="{:.1}" width="12" height="12" fill="green"/>"#,
        ax - 6.0,
        ay - 6.0
    );
    svg.push_str("</svg>\n");
    svg
}

pub fn emit_trajectory_plot(paths: &EngagementPaths, path: &Path) -> Result<()> {
    std::fs::write(path, render_svg(paths)).map_err(|e| Error::io(path, e))
}
