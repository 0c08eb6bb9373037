//! SVG 1.1 scatter rendering for latent-space projections.

use std::path::Path;

use crate::error::{Error, Result};

/// Fixed 12-color palette, cycled by class index.
const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#aec7e8", "#ffbb78",
];

/// Write a scatter plot: one circle per point, fill color cycling the
/// palette by class index, a legend box with one entry per class, and a
/// viewBox fitted to the data with a 5% margin.
pub fn emit_scatter_svg(
    points: &[[f64; 2]],
    class_ids: &[usize],
    class_names: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    if points.is_empty() {
        return Err(Error::stats("no points to plot"));
    }
    if points.len() != class_ids.len() {
        return Err(Error::usage(format!(
            "{} points with {} class ids",
            points.len(),
            class_ids.len()
        )));
    }
    if let Some(&bad) = class_ids.iter().find(|&&c| c >= class_names.len()) {
        return Err(Error::usage(format!(
            "class id {bad} outside {} class names",
            class_names.len()
        )));
    }

    // flip y so larger values render upward
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| -p[1]).collect();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1) = (min(&xs), max(&xs));
    let (y0, y1) = (min(&ys), max(&ys));
    let span_x = (x1 - x0).max(1e-9);
    let span_y = (y1 - y0).max(1e-9);
    let margin_x = span_x * 0.05;
    let margin_y = span_y * 0.05;
    // extra room on the right for the legend box
    let legend_w = span_x * 0.3;
    let view_x = x0 - margin_x;
    let view_y = y0 - margin_y;
    let view_w = span_x + 2.0 * margin_x + legend_w;
    let view_h = span_y + 2.0 * margin_y;
    let r = (span_x.max(span_y)) * 0.012;
    let font = span_y * 0.04;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" viewBox=\"{view_x} {view_y} {view_w} {view_h}\">\n"
    ));
    for (p, &cid) in points.iter().zip(class_ids) {
        let color = PALETTE[cid % PALETTE.len()];
        svg.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"{r}\" fill=\"{color}\" fill-opacity=\"0.8\"/>\n",
            p[0], -p[1]
        ));
    }
    // legend box
    let lx = x1 + margin_x + legend_w * 0.08;
    let mut ly = y0 + margin_y;
    let swatch = font * 0.9;
    svg.push_str(&format!(
        "  <rect x=\"{lx}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#333\" stroke-width=\"{}\"/>\n",
        ly - font,
        legend_w * 0.85,
        (class_names.len() as f64 + 0.8) * font * 1.4,
        font * 0.05,
    ));
    for (i, name) in class_names.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&format!(
            "  <g class=\"legend-entry\"><rect x=\"{}\" y=\"{}\" width=\"{swatch}\" height=\"{swatch}\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\" font-size=\"{font}\" font-family=\"sans-serif\">{name}</text></g>\n",
            lx + font * 0.4,
            ly,
            lx + font * 0.4 + swatch * 1.3,
            ly + swatch * 0.9,
        ));
        ly += font * 1.4;
    }
    svg.push_str("</svg>\n");
    crate::engine::checkpoint::write_atomic(path, svg.as_bytes())
}
