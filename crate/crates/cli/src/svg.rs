//! Static SVG scatter plots.

use std::fmt::Write as _;

use otm_core::PointCloud;

pub const SIZE: f64 = 800.0;
const MARGIN: f64 = 0.05;
const RADIUS: f64 = 2.0;

/// Colors for input, pushforward and target samples.
pub const INPUT: &str = "green";
pub const PUSHFORWARD: &str = "blue";
pub const TARGET: &str = "peru";

/// Plots the first two coordinates of each cloud (a 1-d cloud is drawn on
/// the horizontal axis). Axes cover the union bounding box plus a 5% margin.
pub fn scatter(series: &[(&str, &str, &PointCloud)]) -> String {
    let coords = |p: &[f64]| (p[0], p.get(1).copied().unwrap_or(0.0));
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (_, _, cloud) in series {
        for p in cloud.iter() {
            let (x, y) = coords(p);
            lo_x = lo_x.min(x);
            hi_x = hi_x.max(x);
            lo_y = lo_y.min(y);
            hi_y = hi_y.max(y);
        }
    }
    if !lo_x.is_finite() {
        (lo_x, hi_x, lo_y, hi_y) = (-1.0, 1.0, -1.0, 1.0);
    }
    let widen = |lo: f64, hi: f64| {
        let span = if hi > lo { hi - lo } else { 1.0 };
        (lo - MARGIN * span, span * (1.0 + 2.0 * MARGIN))
    };
    let (x0, w) = widen(lo_x, hi_x);
    let (y0, h) = widen(lo_y, hi_y);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (label, color, cloud) in series {
        let _ = writeln!(out, r#"<g id="{label}" fill="{color}">"#);
        for p in cloud.iter() {
            let (x, y) = coords(p);
            let px = (x - x0) / w * SIZE;
            let py = SIZE - (y - y0) / h * SIZE;
            let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="{RADIUS}"/>"#);
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}
