//! Minimal SVG writers for world rasters, trajectories and bar charts.

use std::fmt::Write as _;

use crate::sim::{class_color, WorldMap, CANOPY_COLOR, GRASS_COLOR};
use crate::terrain::TerrainClass;

pub const SMOOTH_STROKE: &str = "#1a9c2a";
pub const ROUGH_STROKE: &str = "#d42020";

/// Pixels per world metre in trajectory overlays.
const SCALE: f64 = 8.0;

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn cell_color(world: &WorldMap, col: usize, row: usize) -> [u8; 3] {
    let i = world.index(col, row);
    if world.obstacle[i] {
        class_color(world.obstacle_class(), world.num_classes())
    } else if world.canopy[i] {
        CANOPY_COLOR
    } else if world.grass[i] {
        GRASS_COLOR
    } else {
        class_color(TerrainClass(world.classes[i]), world.num_classes())
    }
}

/// Opens an SVG document with the world drawn underneath; y points up.
pub fn world_svg_open(world: &WorldMap) -> String {
    let (w, h) = (world.width_m() * SCALE, world.height_m() * SCALE);
    let cs = world.cell_size * SCALE;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<g shape-rendering="crispEdges">"#);
    for row in 0..world.rows {
        let y = h - (row + 1) as f64 * cs;
        let mut col = 0;
        while col < world.cols {
            let c = cell_color(world, col, row);
            let mut end = col + 1;
            while end < world.cols && cell_color(world, end, row) == c {
                end += 1;
            }
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{y}" width="{}" height="{cs}" fill="{}"/>"#,
                col as f64 * cs,
                (end - col) as f64 * cs,
                hex(c)
            );
            col = end;
        }
    }
    s.push_str("</g>\n");
    s
}

/// Path segments between consecutive points, green where the class
/// reached is smooth (class 0) and red otherwise.
pub fn trajectory_svg(world: &WorldMap, points: &[(f64, f64, TerrainClass)]) -> String {
    let h = world.height_m() * SCALE;
    let mut s = String::from("<g stroke-width=\"2\" stroke-linecap=\"round\">\n");
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let color = if b.2.index() == 0 { SMOOTH_STROKE } else { ROUGH_STROKE };
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}"/>"#,
            a.0 * SCALE,
            h - a.1 * SCALE,
            b.0 * SCALE,
            h - b.1 * SCALE
        );
    }
    if let Some(p) = points.first() {
        let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#ffffff" stroke="#000000"/>"##, p.0 * SCALE, h - p.1 * SCALE);
    }
    s.push_str("</g>\n");
    s
}

/// Grouped bar chart: one group per label, one bar per series, values in
/// percent.
pub fn bar_chart_svg(title: &str, groups: &[String], series: &[String], values: &[Vec<f64>]) -> String {
    let palette = ["#d2c38c", "#8c6e3c", "#464682", "#c878aa", "#5aaabe", "#141414"];
    let (bar, gap, left, top, plot_h) = (18.0, 24.0, 50.0, 40.0, 240.0);
    let group_w = bar * series.len() as f64 + gap;
    let width = left + group_w * groups.len() as f64 + 160.0;
    let height = top + plot_h + 60.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{left}" y="20" font-size="14">{title}</text>"#);
    for t in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let y = top + plot_h * (1.0 - t / 100.0);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#cccccc"/>"##, width - 160.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{t}%</text>"#, left - 4.0, y + 4.0);
    }
    for (g, name) in groups.iter().enumerate() {
        let x0 = left + g as f64 * group_w + gap / 2.0;
        for (k, v) in values[g].iter().enumerate() {
            let bh = plot_h * v.clamp(0.0, 100.0) / 100.0;
            let _ = writeln!(
                s,
                r#"<rect x="{:.1}" y="{:.1}" width="{bar}" height="{:.1}" fill="{}"/>"#,
                x0 + k as f64 * bar,
                top + plot_h - bh,
                bh,
                palette[k % palette.len()]
            );
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{name}</text>"#, x0 + bar * series.len() as f64 / 2.0, top + plot_h + 16.0);
    }
    for (k, name) in series.iter().enumerate() {
        let y = top + 14.0 * k as f64;
        let x = width - 150.0;
        let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y, palette[k % palette.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{name}</text>"#, x + 14.0, y + 9.0);
    }
    s.push_str("</svg>\n");
    s
}
