//! Plain SVG heatmap of a phase-diagram grid.
//!
//! Prevalence `p` runs along the horizontal axis, corruption fraction
//! `p_e` up the vertical axis. Cells are colored by recovery probability
//! with a three-stop linear map:
//!
//! | prob | color     |
//! |------|-----------|
//! | 0.0  | `#2166ac` |
//! | 0.5  | `#f7f7f7` |
//! | 1.0  | `#b2182b` |

use crate::formats::GridRow;
use std::fmt::Write;

const STOPS: [(f64, [u8; 3]); 3] = [(0.0, [0x21, 0x66, 0xac]), (0.5, [0xf7, 0xf7, 0xf7]), (1.0, [0xb2, 0x18, 0x2b])];

const CELL: f64 = 24.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 60.0;
const LEGEND: f64 = 90.0;

/// Hex color of a probability; values outside [0, 1] are clamped.
pub fn color(prob: f64) -> String {
    let t = prob.clamp(0.0, 1.0);
    let (lo, hi) = if t <= STOPS[1].0 { (STOPS[0], STOPS[1]) } else { (STOPS[1], STOPS[2]) };
    let f = (t - lo.0) / (hi.0 - lo.0);
    let c: Vec<u8> = (0..3).map(|k| (lo.1[k] as f64 + f * (hi.1[k] as f64 - lo.1[k] as f64)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn unique_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn label_every(count: usize) -> usize {
    count.div_ceil(13).max(1)
}

pub fn render_svg(rows: &[GridRow]) -> String {
    let ps = unique_sorted(rows.iter().map(|r| r.p));
    let pes = unique_sorted(rows.iter().map(|r| r.pe));
    let width = LEFT + CELL * ps.len() as f64 + LEGEND;
    let plot_h = CELL * pes.len() as f64;
    let height = TOP + plot_h + BOTTOM;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    for r in rows {
        let (Some(i), Some(j)) = (ps.iter().position(|&p| p == r.p), pes.iter().position(|&e| e == r.pe)) else {
            continue;
        };
        let x = LEFT + CELL * i as f64;
        let y = TOP + plot_h - CELL * (j + 1) as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"><title>p={} pe={} prob={}</title></rect>"#,
            color(r.prob),
            r.p,
            r.pe,
            r.prob
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{plot_h}" fill="none" stroke="black"/>"#,
        CELL * ps.len() as f64
    );
    let every = label_every(ps.len());
    for (i, p) in ps.iter().enumerate().filter(|(i, _)| i % every == 0) {
        let x = LEFT + CELL * (i as f64 + 0.5);
        let y = TOP + plot_h + 14.0;
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="middle">{p}</text>"#);
    }
    let every = label_every(pes.len());
    for (j, pe) in pes.iter().enumerate().filter(|(j, _)| j % every == 0) {
        let y = TOP + plot_h - CELL * (j as f64 + 0.5) + 3.0;
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{pe}</text>"#, LEFT - 4.0);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">p</text>"#,
        LEFT + CELL * ps.len() as f64 / 2.0,
        TOP + plot_h + 36.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{y}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {y})">p_e</text>"#,
        y = TOP + plot_h / 2.0
    );
    // Legend: 11 swatches from 0 to 1, bottom to top.
    let lx = LEFT + CELL * ps.len() as f64 + 20.0;
    let sw = (plot_h / 11.0).max(6.0);
    for k in 0..=10 {
        let prob = k as f64 / 10.0;
        let y = TOP + sw * (10 - k) as f64;
        let _ = writeln!(svg, r#"<rect x="{lx}" y="{y}" width="14" height="{sw}" fill="{}"/>"#, color(prob));
        if k % 5 == 0 {
            let _ = writeln!(svg, r#"<text x="{}" y="{}">{prob}</text>"#, lx + 18.0, y + sw / 2.0 + 3.0);
        }
    }
    svg.push_str("</svg>\n");
    svg
}
