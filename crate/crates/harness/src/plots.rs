//! Static SVG charts.

use std::collections::BTreeMap;
use std::path::Path;

use plotters::prelude::*;

use crate::bounds_study::BoundsStudyRow;
use crate::{HarnessError, Result};

const SIZE: (u32, u32) = (720, 480);
const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn plot_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

fn span(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.into_iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-6);
    (lo - pad, hi + pad)
}

/// Bounds on `−Ĥ` against the step, one band per particle count, with the full estimate on top.
pub fn bounds_vs_step(rows: &[BoundsStudyRow], path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let ys = rows.iter().flat_map(|r| r.bounds.iter().flat_map(|b| [b.lower, b.upper]).chain([-r.boers_entropy]));
    let (y0, y1) = span(ys);
    let mut chart = ChartBuilder::on(&root)
        .caption("Entropy bounds per step", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(55)
        .build_cartesian_2d(0.5..rows.len() as f64 + 0.5, y0..y1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("step").y_desc("−Ĥ").draw().map_err(plot_err)?;
    let n_levels = rows.first().map_or(0, |r| r.bounds.len());
    for l in 0..n_levels {
        let color = PALETTE[l % PALETTE.len()];
        let particles = rows[0].bounds[l].particles;
        let lower = rows.iter().map(|r| (r.step as f64, r.bounds[l].lower));
        chart
            .draw_series(LineSeries::new(lower, color.stroke_width(1)))
            .map_err(plot_err)?
            .label(format!("n^s = {particles}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color));
        let upper = rows.iter().map(|r| (r.step as f64, r.bounds[l].upper));
        chart.draw_series(LineSeries::new(upper, color.stroke_width(1))).map_err(plot_err)?;
    }
    chart
        .draw_series(LineSeries::new(rows.iter().map(|r| (r.step as f64, -r.boers_entropy)), BLACK.stroke_width(2)))
        .map_err(plot_err)?
        .label("full estimate")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], BLACK));
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_err)?;
    root.present().map_err(plot_err)
}

/// Planar trajectories as scatter plots, with the beacons marked.
pub fn trajectory_scatter(trajectories: &[(String, Vec<Vec<f64>>)], beacons: &[[f64; 2]], path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let points = || trajectories.iter().flat_map(|(_, t)| t.iter().filter(|p| p.len() >= 2));
    let (x0, x1) = span(points().map(|p| p[0]).chain(beacons.iter().map(|b| b[0])));
    let (y0, y1) = span(points().map(|p| p[1]).chain(beacons.iter().map(|b| b[1])));
    let mut chart = ChartBuilder::on(&root)
        .caption("Trajectories", ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("x").y_desc("y").draw().map_err(plot_err)?;
    chart
        .draw_series(beacons.iter().map(|b| TriangleMarker::new((b[0], b[1]), 8, BLACK.filled())))
        .map_err(plot_err)?;
    for (i, (label, traj)) in trajectories.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = traj.iter().filter(|p| p.len() >= 2).map(|p| (p[0], p[1])).collect();
        chart.draw_series(LineSeries::new(pts.iter().copied(), color.mix(0.5))).map_err(plot_err)?;
        chart
            .draw_series(pts.iter().map(|&p| Circle::new(p, 3, color.filled())))
            .map_err(plot_err)?
            .label(label.clone())
            .legend(move |(x, y)| Circle::new((x + 9, y), 3, color.filled()));
    }
    if !trajectories.is_empty() {
        chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_err)?;
    }
    root.present().map_err(plot_err)
}

/// Bubble chart of final particle counts per depth; bubble area grows with the node count.
pub fn level_bubbles(title: &str, histogram: &BTreeMap<(usize, usize), u64>, path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let max_depth = histogram.keys().map(|k| k.0).max().unwrap_or(1);
    let max_particles = histogram.keys().map(|k| k.1).max().unwrap_or(1);
    let max_count = histogram.values().copied().max().unwrap_or(1) as f64;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(35)
        .y_label_area_size(45)
        .build_cartesian_2d(-0.5..max_depth as f64 + 0.5, 0.0..max_particles as f64 * 1.1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc("depth").y_desc("particles used").draw().map_err(plot_err)?;
    chart
        .draw_series(histogram.iter().map(|(&(d, p), &c)| {
            let r = (4.0 + 20.0 * (c as f64 / max_count).sqrt()) as i32;
            Circle::new((d as f64, p as f64), r, PALETTE[0].mix(0.4).filled())
        }))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)
}
