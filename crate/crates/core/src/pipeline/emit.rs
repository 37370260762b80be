//! Result files: `<scenario>.<artifact>.<ext>`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::json;

use super::PlanResult;
use crate::geometry::{approx_curvature, frenet_to_cartesian, FrenetState};
use crate::pjpath::cartesian_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Svg,
    JsonSummary,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            "json-summary" => Ok(Format::JsonSummary),
            other => Err(format!(
                "unknown format {other:?} (expected csv, svg or json-summary)"
            )),
        }
    }
}

/// The four CSV artifacts as (file suffix, contents).
pub fn csv_artifacts(r: &PlanResult) -> Vec<(&'static str, String)> {
    vec![
        ("guide.csv", r.guide_line.to_csv()),
        ("boundary.csv", r.path_boundary.to_csv()),
        ("path_frenet.csv", r.path.path.to_csv()),
        ("path_cartesian.csv", cartesian_csv(&r.cartesian)),
    ]
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn emit(r: &PlanResult, dir: &Path, formats: &[Format]) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<(String, String)> = Vec::new();
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    for f in formats {
        match f {
            Format::Csv => {
                files.extend(
                    csv_artifacts(r)
                        .into_iter()
                        .map(|(suffix, body)| (suffix.to_string(), body)),
                );
            }
            Format::Svg => files.push(("plot.svg".into(), render_svg(r))),
            Format::JsonSummary => {
                let body = serde_json::to_string_pretty(&summary(r)).expect("summary serializes");
                files.push(("summary.json".into(), body + "\n"));
            }
        }
    }
    if files.is_empty() {
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for (suffix, body) in files {
        let path = dir.join(format!("{}.{suffix}", r.scenario));
        std::fs::write(&path, body)?;
        out.push(path);
    }
    Ok(out)
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest κ_r / (1 − κ_r·l) over the path stations.
pub fn max_approx_kappa(r: &PlanResult) -> f64 {
    let p = &r.path.path;
    (0..p.len())
        .filter_map(|i| {
            let k = r.guide_line.interpolate(p.station(i)).ok()?.kappa;
            approx_curvature(p.l[i], k).ok()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn summary(r: &PlanResult) -> serde_json::Value {
    let p = &r.path.path;
    let residual = r
        .path
        .path
        .continuity_residuals()
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(*v));
    json!({
        "scenario": r.scenario,
        "guide_line": {
            "points": r.guide_line.points.len(),
            "length_m": r.guide_line.length(),
            "max_abs_kappa_per_m": r.guide_line.max_abs_kappa(),
        },
        "ego_frenet": r.ego,
        "static_obstacles": r.obstacles.iter().map(|(_, o)| o).collect::<Vec<_>>(),
        "stations": p.len(),
        "ds_m": p.ds,
        "kappa_max_per_m": r.vehicle.kappa_max(),
        "path": {
            "max_abs_l_m": max_abs(p.l.iter().copied()),
            "max_abs_dl": max_abs(p.dl.iter().copied()),
            "max_abs_ddl_per_m": max_abs(p.ddl.iter().copied()),
            "max_approx_kappa_per_m": max_approx_kappa(r),
            "max_abs_exact_kappa_per_m": max_abs(r.cartesian.iter().map(|c| c.pose.kappa)),
            "max_continuity_residual": residual,
            "objective": r.path.objective,
        },
        "solver": {
            "smoothing": r.smoothing,
            "path": r.path.stats,
        },
        "timings_ms": r.timings,
    })
}

/// Maps data coordinates into a pixel box with y pointing down.
struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
    left: f64,
    bottom: f64,
}

impl Frame {
    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.left + (x - self.x0) * self.sx,
            self.bottom - (y - self.y0) * self.sy,
        )
    }

    fn points(&self, pts: impl IntoIterator<Item = (f64, f64)>) -> String {
        pts.into_iter()
            .map(|(x, y)| {
                let (a, b) = self.px(x, y);
                format!("{a:.2},{b:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

const WIDTH: f64 = 960.0;
const MAP_TOP: f64 = 40.0;
const MAP_H: f64 = 460.0;
const K_TOP: f64 = 560.0;
const K_H: f64 = 240.0;
const MARGIN: f64 = 50.0;

/// Map view (guide line, boundary band, obstacles, path) above a κ(s) chart
/// with the ±κ_max limits.
pub fn render_svg(r: &PlanResult) -> String {
    let line = &r.guide_line;
    let pb = &r.path_boundary;
    let edge = |i: usize, l: f64| {
        let s = pb.station(i);
        line.interpolate(s)
            .ok()
            .and_then(|g| {
                frenet_to_cartesian(
                    &FrenetState {
                        s,
                        l,
                        dl: 0.0,
                        ddl: 0.0,
                    },
                    &g,
                )
                .ok()
            })
            .map(|p| (p.x, p.y))
    };
    let mut band: Vec<(f64, f64)> = (0..pb.len())
        .filter_map(|i| edge(i, pb.entries[i].l_max))
        .collect();
    band.extend(
        (0..pb.len())
            .rev()
            .filter_map(|i| edge(i, pb.entries[i].l_min)),
    );

    let mut all: Vec<(f64, f64)> = line.points.iter().map(|p| (p.x, p.y)).collect();
    all.extend(band.iter().copied());
    all.extend(
        r.obstacles
            .iter()
            .flat_map(|(poly, _)| poly.iter().map(|p| (p[0], p[1]))),
    );
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for &(x, y) in &all {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    let span_x = (xmax - xmin).max(1.0);
    let span_y = (ymax - ymin).max(1.0);
    let scale = ((WIDTH - 2.0 * MARGIN) / span_x).min(MAP_H / span_y);
    let map = Frame {
        x0: xmin,
        y0: ymin,
        sx: scale,
        sy: scale,
        left: MARGIN,
        bottom: MAP_TOP + MAP_H,
    };

    let kmax = r.vehicle.kappa_max();
    let s0 = r.path.path.s0;
    let s1 = r.path.path.end_s().max(s0 + 1.0);
    let kpeak = r
        .cartesian
        .iter()
        .map(|c| c.pose.kappa.abs())
        .chain(
            line.points
                .iter()
                .filter(|p| p.s >= s0 && p.s <= s1)
                .map(|p| p.kappa.abs()),
        )
        .fold(kmax, f64::max)
        * 1.1;
    let kf = Frame {
        x0: s0,
        y0: -kpeak,
        sx: (WIDTH - 2.0 * MARGIN) / (s1 - s0),
        sy: K_H / (2.0 * kpeak),
        left: MARGIN,
        bottom: K_TOP + K_H,
    };

    let mut svg = String::new();
    let w = &mut svg;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{}" viewBox="0 0 {WIDTH} {}">"#,
        K_TOP + K_H + 40.0,
        K_TOP + K_H + 40.0
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="16">{} (map frame, m)</text>"#,
        r.scenario
    );
    if !band.is_empty() {
        let _ = writeln!(
            w,
            r##"<polygon id="boundary" points="{}" fill="#9ecae1" fill-opacity="0.4" stroke="#3182bd" stroke-width="0.5"/>"##,
            map.points(band)
        );
    }
    for (poly, o) in &r.obstacles {
        let _ = writeln!(
            w,
            r##"<polygon class="obstacle" data-id="{}" points="{}" fill="#de2d26" fill-opacity="0.6"/>"##,
            o.id,
            map.points(poly.iter().map(|p| (p[0], p[1])))
        );
    }
    let _ = writeln!(
        w,
        r##"<polyline id="guide" points="{}" fill="none" stroke="#636363" stroke-width="1" stroke-dasharray="4 3"/>"##,
        map.points(line.points.iter().map(|p| (p.x, p.y)))
    );
    let _ = writeln!(
        w,
        r##"<polyline id="path" points="{}" fill="none" stroke="#31a354" stroke-width="1.5"/>"##,
        map.points(r.cartesian.iter().map(|c| (c.pose.x, c.pose.y)))
    );

    let _ = writeln!(
        w,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">curvature (1/m) over s (m)</text>"#,
        K_TOP - 12.0
    );
    let (zx0, zy) = kf.px(s0, 0.0);
    let (zx1, _) = kf.px(s1, 0.0);
    let _ = writeln!(
        w,
        r##"<line id="kappa-zero" x1="{zx0:.2}" y1="{zy:.2}" x2="{zx1:.2}" y2="{zy:.2}" stroke="#bdbdbd" stroke-width="0.5"/>"##
    );
    for (id, k) in [("kappa-max", kmax), ("kappa-min", -kmax)] {
        let (x0, y) = kf.px(s0, k);
        let (x1, _) = kf.px(s1, k);
        let _ = writeln!(
            w,
            r##"<line id="{id}" x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#de2d26" stroke-width="1" stroke-dasharray="6 3"/>"##
        );
    }
    let _ = writeln!(
        w,
        r##"<polyline id="guide-kappa" points="{}" fill="none" stroke="#636363" stroke-width="1"/>"##,
        kf.points(
            line.points
                .iter()
                .filter(|p| p.s >= s0 && p.s <= s1)
                .map(|p| (p.s, p.kappa))
        )
    );
    let _ = writeln!(
        w,
        r##"<polyline id="kappa" points="{}" fill="none" stroke="#31a354" stroke-width="1.5"/>"##,
        kf.points(r.cartesian.iter().map(|c| (c.s, c.pose.kappa)))
    );
    let _ = writeln!(
        w,
        r#"<text x="{}" y="{:.2}" font-family="sans-serif" font-size="11">kappa_max = {kmax:.4}</text>"#,
        WIDTH - MARGIN - 110.0,
        kf.px(s1, kmax).1 - 4.0
    );
    let _ = writeln!(w, "</svg>");
    svg
}
