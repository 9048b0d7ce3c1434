//! CSV and SVG output for scalar fields.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::ScalarField;
use crate::fsio::write_atomic;

pub const FIELD_CSV_HEADER: &str = "alpha1,alpha2,value";

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 110.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;
const LEGEND_STEPS: usize = 64;
const NEGATIVE: (f64, f64, f64) = (33.0, 102.0, 172.0);
const POSITIVE: (f64, f64, f64) = (178.0, 24.0, 43.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvgStyle {
    pub width: u32,
    pub height: u32,
    /// Quantile of `|value|` mapped to full colour saturation.
    pub color_quantile: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        Self { width: 640, height: 580, color_quantile: 0.99 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub svg: PathBuf,
    pub meta: PathBuf,
}

impl ExportPaths {
    /// `<dir>/<stem>.csv`, `<dir>/<stem>.svg` and `<dir>/<stem>.meta.json`.
    pub fn with_stem(dir: &Path, stem: &str) -> Self {
        Self {
            csv: dir.join(format!("{stem}.csv")),
            svg: dir.join(format!("{stem}.svg")),
            meta: dir.join(format!("{stem}.meta.json")),
        }
    }
}

/// Sidecar written next to the exported data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub component: String,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub resolution: usize,
    pub rows: usize,
    pub missing: usize,
    pub color_limit: f64,
    pub contour_paths: usize,
}

pub fn field_csv(field: &ScalarField) -> String {
    let g = &field.grid;
    let mut out = String::with_capacity(48 * field.values.len() + 32);
    out.push_str(FIELD_CSV_HEADER);
    out.push('\n');
    for j in 0..g.resolution {
        for i in 0..g.resolution {
            if let Some(v) = field.get(i, j) {
                let _ = writeln!(out, "{},{},{}", g.coord(i), g.coord(j), v);
            }
        }
    }
    out
}

/// Symmetric colour limit: the given quantile of `|value|`, or 1 for an all-zero field.
pub fn color_limit(field: &ScalarField, quantile: f64) -> f64 {
    let mut mags: Vec<f64> = field.values.iter().flatten().map(|v| v.abs()).collect();
    if mags.is_empty() {
        return 1.0;
    }
    mags.sort_by(f64::total_cmp);
    let q = quantile.clamp(0.0, 1.0);
    let k = ((mags.len() - 1) as f64 * q).round() as usize;
    let lim = mags[k];
    if lim > 0.0 {
        lim
    } else if mags[mags.len() - 1] > 0.0 {
        mags[mags.len() - 1]
    } else {
        1.0
    }
}

fn rgb(value: f64, limit: f64) -> String {
    let t = (value / limit).clamp(-1.0, 1.0);
    let end = if t < 0.0 { NEGATIVE } else { POSITIVE };
    let s = t.abs();
    let mix = |c: f64| (255.0 + (c - 255.0) * s).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

/// Grid edge carrying a contour crossing: `(horizontal?, i, j)` names the edge
/// from node `(i, j)` to `(i + 1, j)` or to `(i, j + 1)`.
type EdgeKey = (bool, usize, usize);

/// Zero level set by marching squares, chained into polylines of `(alpha1, alpha2)`.
///
/// Cells touching a missing sample are skipped. Closed contours repeat their
/// first point at the end.
pub fn zero_contours(field: &ScalarField) -> Vec<Vec<(f64, f64)>> {
    let g = &field.grid;
    let n = g.resolution;
    let mut crossing: BTreeMap<EdgeKey, (f64, f64)> = BTreeMap::new();
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();

    let mut edge_point = |key: EdgeKey, a: f64, b: f64| {
        crossing.entry(key).or_insert_with(|| {
            let t = a / (a - b);
            let (h, i, j) = key;
            let (x0, y0) = (g.coord(i), g.coord(j));
            if h {
                (x0 + t * (g.coord(i + 1) - x0), y0)
            } else {
                (x0, y0 + t * (g.coord(j + 1) - y0))
            }
        });
    };

    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (Some(v00), Some(v10), Some(v11), Some(v01)) =
                (field.get(i, j), field.get(i + 1, j), field.get(i + 1, j + 1), field.get(i, j + 1))
            else {
                continue;
            };
            let above = |v: f64| v >= 0.0;
            let case = (above(v00) as u8) | (above(v10) as u8) << 1 | (above(v11) as u8) << 2 | (above(v01) as u8) << 3;
            if case == 0 || case == 15 {
                continue;
            }
            let bottom = (true, i, j);
            let right = (false, i + 1, j);
            let top = (true, i, j + 1);
            let left = (false, i, j);
            let mut cut = Vec::with_capacity(4);
            if above(v00) != above(v10) {
                edge_point(bottom, v00, v10);
                cut.push(bottom);
            }
            if above(v10) != above(v11) {
                edge_point(right, v10, v11);
                cut.push(right);
            }
            if above(v01) != above(v11) {
                edge_point(top, v01, v11);
                cut.push(top);
            }
            if above(v00) != above(v01) {
                edge_point(left, v00, v01);
                cut.push(left);
            }
            if cut.len() == 2 {
                segments.push((cut[0], cut[1]));
            } else {
                // saddle: the centre value decides which corners connect
                let centre_above = above(0.25 * (v00 + v10 + v11 + v01));
                if centre_above == above(v00) {
                    segments.push((bottom, right));
                    segments.push((top, left));
                } else {
                    segments.push((bottom, left));
                    segments.push((right, top));
                }
            }
        }
    }

    let mut by_edge: BTreeMap<EdgeKey, Vec<usize>> = BTreeMap::new();
    for (k, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(k);
        by_edge.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let next_from = |edge: EdgeKey, used: &[bool]| -> Option<usize> {
        by_edge.get(&edge)?.iter().copied().find(|&k| !used[k])
    };

    let mut lines = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let mut chain = std::collections::VecDeque::from([a, b]);
        // extend forwards, then backwards
        for forward in [true, false] {
            loop {
                let end = if forward { *chain.back().unwrap() } else { *chain.front().unwrap() };
                let Some(k) = next_from(end, &used) else { break };
                used[k] = true;
                let (p, q) = segments[k];
                let other = if p == end { q } else { p };
                if forward {
                    chain.push_back(other);
                } else {
                    chain.push_front(other);
                }
            }
        }
        lines.push(chain.into_iter().map(|e| crossing[&e]).collect());
    }
    lines
}

fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    // avoid "-0.00"
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn field_svg(field: &ScalarField, style: &SvgStyle) -> String {
    let g = &field.grid;
    let n = g.resolution;
    let (w, h) = (style.width as f64, style.height as f64);
    let side = (w - MARGIN_LEFT - MARGIN_RIGHT).min(h - MARGIN_TOP - MARGIN_BOTTOM).max(10.0);
    let (x0, y0) = (MARGIN_LEFT, MARGIN_TOP);
    let spacing = g.spacing();
    // the plot extends half a cell past the outermost nodes
    let lo = g.alpha_min - 0.5 * spacing;
    let span = g.alpha_max - g.alpha_min + spacing;
    let px = |a: f64| x0 + (a - lo) / span * side;
    let py = |a: f64| y0 + side - (a - lo) / span * side;
    let cell = side / n as f64;
    let limit = color_limit(field, style.color_quantile);
    let label = field.component.label();

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif" font-size="12">"#,
        style.width, style.height, style.width, style.height
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{}" height="{}" style="fill:#ffffff"/>"##, style.width, style.height);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" style="font-size:14px">exterior derivative of the {label} connection row</text>"#,
        fmt2(x0 + 0.5 * side),
        fmt2(y0 - 15.0)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" style="fill:#bdbdbd"/>"##,
        fmt2(x0),
        fmt2(y0),
        fmt2(side),
        fmt2(side)
    );
    s.push_str("<g shape-rendering=\"crispEdges\">\n");
    for j in 0..n {
        for i in 0..n {
            if let Some(v) = field.get(i, j) {
                let _ = writeln!(
                    s,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" style="fill:{}"/>"#,
                    fmt2(x0 + i as f64 * cell),
                    fmt2(y0 + side - (j + 1) as f64 * cell),
                    fmt2(cell + 0.01),
                    fmt2(cell + 0.01),
                    rgb(v, limit)
                );
            }
        }
    }
    s.push_str("</g>\n");

    s.push_str("<g class=\"zero-contour\" style=\"fill:none;stroke:#000000;stroke-width:1.2\">\n");
    for line in zero_contours(field) {
        let mut d = String::new();
        for (k, &(a1, a2)) in line.iter().enumerate() {
            let _ = write!(d, "{}{} {}", if k == 0 { "M" } else { " L" }, fmt2(px(a1)), fmt2(py(a2)));
        }
        let _ = writeln!(s, r#"<path d="{d}"/>"#);
    }
    s.push_str("</g>\n");

    // frame and ticks
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" style="fill:none;stroke:#000000"/>"##,
        fmt2(x0),
        fmt2(y0),
        fmt2(side),
        fmt2(side)
    );
    for k in 0..5 {
        let a = g.alpha_min + (g.alpha_max - g.alpha_min) * k as f64 / 4.0;
        let (tx, ty) = (px(a), py(a));
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" style="stroke:#000000"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"##,
            fmt2(tx),
            fmt2(y0 + side),
            fmt2(y0 + side + 5.0),
            fmt2(y0 + side + 18.0),
            fmt2(a)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{2}" x2="{1}" y2="{2}" style="stroke:#000000"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"##,
            fmt2(x0 - 5.0),
            fmt2(x0),
            fmt2(ty),
            fmt2(x0 - 8.0),
            fmt2(ty + 4.0),
            fmt2(a)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" style="font-size:14px">α₁ (rad)</text>"#,
        fmt2(x0 + 0.5 * side),
        fmt2(y0 + side + 40.0)
    );
    let _ = writeln!(
        s,
        r#"<text x="{0}" y="{1}" text-anchor="middle" transform="rotate(-90 {0} {1})" style="font-size:14px">α₂ (rad)</text>"#,
        fmt2(x0 - 45.0),
        fmt2(y0 + 0.5 * side)
    );

    // colour legend, top = +limit
    let lx = x0 + side + 25.0;
    let lw = 18.0;
    let step = side / LEGEND_STEPS as f64;
    s.push_str("<g class=\"legend\" shape-rendering=\"crispEdges\">\n");
    for k in 0..LEGEND_STEPS {
        let v = limit * (1.0 - 2.0 * (k as f64 + 0.5) / LEGEND_STEPS as f64);
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="{}" height="{}" style="fill:{}"/>"#,
            fmt2(lx),
            fmt2(y0 + k as f64 * step),
            fmt2(lw),
            fmt2(step + 0.01),
            rgb(v, limit)
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="{}" width="{}" height="{}" style="fill:none;stroke:#000000"/>"##,
        fmt2(lx),
        fmt2(y0),
        fmt2(lw),
        fmt2(side)
    );
    for (frac, v) in [(0.0, limit), (0.5, 0.0), (1.0, -limit)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            fmt2(lx + lw + 5.0),
            fmt2(y0 + frac * side + 4.0),
            format_legend(v)
        );
    }
    s.push_str("</g>\n</svg>\n");
    s
}

fn format_legend(v: f64) -> String {
    if v != 0.0 && (v.abs() < 0.01 || v.abs() >= 1000.0) {
        format!("{v:.2e}")
    } else {
        fmt2(v)
    }
}

/// Writes the CSV, the SVG heatmap and the sidecar JSON, each atomically.
pub fn export_field(field: &ScalarField, paths: &ExportPaths, style: &SvgStyle) -> Result<FieldMeta> {
    let csv = field_csv(field);
    let svg = field_svg(field, style);
    let meta = FieldMeta {
        component: field.component.label().to_string(),
        alpha_min: field.grid.alpha_min,
        alpha_max: field.grid.alpha_max,
        resolution: field.grid.resolution,
        rows: field.values.len() - field.missing(),
        missing: field.missing(),
        color_limit: color_limit(field, style.color_quantile),
        contour_paths: zero_contours(field).len(),
    };
    write_atomic(&paths.csv, csv.as_bytes())?;
    write_atomic(&paths.svg, svg.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&meta).expect("meta serialises");
    json.push('\n');
    write_atomic(&paths.meta, json.as_bytes())?;
    Ok(meta)
}
