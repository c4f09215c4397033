//! Marching-squares contour plots as deterministic SVG.

use std::fmt::Write;

use crate::grid::RectGrid;

pub const CANVAS: f64 = 800.0;
pub const LEVELS: usize = 15;
const MARGIN: f64 = 70.0;

/// A contour segment in data coordinates.
pub type Segment = [[f64; 2]; 2];

/// Level-set segments of `values` at `level`, one cell at a time. Saddle
/// cells are split by the value at the cell centre.
pub fn marching_squares(grid: &RectGrid, values: &[f64], level: f64) -> Vec<Segment> {
    let (n0, n1) = grid.shape();
    let mut out = Vec::new();
    for i in 0..n0 - 1 {
        for j in 0..n1 - 1 {
            // corners counter-clockwise from (i, j)
            let idx = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let v = idx.map(|(a, b)| values[grid.idx(a, b)]);
            let p = idx.map(|(a, b)| grid.point(a, b));
            let above = v.map(|x| x > level);
            // edges: 0 bottom (c0-c1), 1 right (c1-c2), 2 top (c2-c3), 3 left (c3-c0)
            let cross = |e: usize| -> Option<[f64; 2]> {
                let (a, b) = (e, (e + 1) % 4);
                (above[a] != above[b]).then(|| {
                    let t = (level - v[a]) / (v[b] - v[a]);
                    [p[a][0] + t * (p[b][0] - p[a][0]), p[a][1] + t * (p[b][1] - p[a][1])]
                })
            };
            let hits: Vec<(usize, [f64; 2])> = (0..4).filter_map(|e| cross(e).map(|q| (e, q))).collect();
            match hits.len() {
                2 => out.push([hits[0].1, hits[1].1]),
                4 => {
                    let q = |e: usize| hits[e].1;
                    let centre_above = v.iter().sum::<f64>() / 4.0 > level;
                    if centre_above == above[0] {
                        // corners 1 and 3 are cut off
                        out.push([q(0), q(1)]);
                        out.push([q(2), q(3)]);
                    } else {
                        out.push([q(3), q(0)]);
                        out.push([q(1), q(2)]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

fn colour(k: usize) -> String {
    // blue to red through the hue circle
    let hue = 240.0 - 240.0 * k as f64 / (LEVELS - 1) as f64;
    format!("hsl({hue:.0},70%,40%)")
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG with `LEVELS` evenly spaced interior level sets of `values` over
/// `grid`, axes labelled with the data ranges.
pub fn contour_svg(grid: &RectGrid, values: &[f64], title: &str, axis_names: [&str; 2]) -> String {
    let [(x0, x1), (y0, y1)] = [0, 1].map(|a| (grid.axes[a].lo, grid.axes[a].hi));
    let span = CANVAS - 2.0 * MARGIN;
    let px = |p: [f64; 2]| {
        (
            MARGIN + (p[0] - x0) / (x1 - x0) * span,
            CANVAS - MARGIN - (p[1] - y0) / (y1 - y0) * span,
        )
    };
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{CANVAS}" viewBox="0 0 {CANVAS} {CANVAS}">"#
    );
    let _ = writeln!(s, r#"<rect width="{CANVAS}" height="{CANVAS}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="18" text-anchor="middle">{}</text>"#,
        CANVAS / 2.0,
        MARGIN / 2.0,
        xml_escape(title)
    );
    let bottom = CANVAS - MARGIN;
    for (x, anchor, label) in [
        (MARGIN, "start", format!("{x0:.4}")),
        (CANVAS - MARGIN, "end", format!("{x1:.4}")),
    ] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="14" text-anchor="{anchor}">{label}</text>"#,
            bottom + 20.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="16" text-anchor="middle">{}</text>"#,
        CANVAS / 2.0,
        bottom + 45.0,
        xml_escape(axis_names[0])
    );
    for (y, label) in [(bottom, format!("{y0:.4}")), (MARGIN + 12.0, format!("{y1:.4}"))] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" font-size="14" text-anchor="end">{label}</text>"#,
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="16" text-anchor="middle" transform="rotate(-90 {} {})">{}</text>"#,
        MARGIN / 3.0,
        CANVAS / 2.0,
        MARGIN / 3.0,
        CANVAS / 2.0,
        xml_escape(axis_names[1])
    );
    if !(hi > lo) {
        let value = if finite.is_empty() {
            "none".to_string()
        } else {
            format!("{lo:.6e}")
        };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="16" text-anchor="middle">constant field, single level {value}</text>"#,
            CANVAS / 2.0,
            CANVAS / 2.0
        );
    } else {
        for k in 0..LEVELS {
            let level = lo + (hi - lo) * (k + 1) as f64 / (LEVELS + 1) as f64;
            let segs = marching_squares(grid, values, level);
            let mut d = String::new();
            for [a, b] in segs {
                let (ax, ay) = px(a);
                let (bx, by) = px(b);
                let _ = write!(d, "M{ax:.2} {ay:.2}L{bx:.2} {by:.2}");
            }
            let _ = writeln!(
                s,
                r#"<path data-level="{level:.6e}" d="{d}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
                colour(k)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">levels {lo:.4e} .. {hi:.4e}</text>"#,
            CANVAS - MARGIN,
            MARGIN - 8.0
        );
    }
    s.push_str("</svg>\n");
    s
}
