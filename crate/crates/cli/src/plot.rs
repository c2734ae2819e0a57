//! Static SVG figures.

use std::path::Path;

use anyhow::{anyhow, Result};
use linflow::flowmatch::LossPoint;
use linflow::regularity::LipschitzTRow;
use ndarray::ArrayView2;
use plotters::prelude::*;

const SIZE: (u32, u32) = (720, 540);
const GENERATED: RGBColor = RGBColor(31, 119, 180);
const TARGET: RGBColor = RGBColor(214, 39, 40);

fn err<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow!("plotting: {e}")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

fn log_range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| *v > 0.0 && v.is_finite()).fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        (lo / 1.5, hi * 1.5)
    } else {
        (0.1, 10.0)
    }
}

/// Plane coordinates of each point: the first two coordinates, or for
/// `d = 1` the value against its empirical quantile level.
fn plane(points: ArrayView2<f64>) -> Vec<(f64, f64)> {
    if points.ncols() >= 2 {
        return points.rows().into_iter().map(|r| (r[0], r[1])).collect();
    }
    let mut xs: Vec<f64> = points.column(0).to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.into_iter().enumerate().map(|(i, x)| (x, (i as f64 + 0.5) / n)).collect()
}

pub fn scatter(path: &Path, generated: ArrayView2<f64>, reference: ArrayView2<f64>) -> Result<()> {
    let gen = plane(generated);
    let refs = plane(reference);
    let all = gen.iter().chain(&refs);
    let (x0, x1, y0, y1) = all.fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |b, p| {
        (b.0.min(p.0), b.1.max(p.0), b.2.min(p.1), b.3.max(p.1))
    });
    if !(x0.is_finite() && y0.is_finite()) {
        return Err(anyhow!("plotting: no finite points"));
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let y_desc = if generated.ncols() >= 2 { "x1" } else { "quantile level" };

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("generated vs target", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(err)?;
    chart.configure_mesh().x_desc("x0").y_desc(y_desc).draw().map_err(err)?;
    chart
        .draw_series(refs.iter().map(|&p| Circle::new(p, 2, TARGET.mix(0.4).filled())))
        .map_err(err)?
        .label("target sample")
        .legend(|(x, y)| Circle::new((x, y), 3, TARGET.filled()));
    chart
        .draw_series(gen.iter().map(|&p| Circle::new(p, 2, GENERATED.mix(0.4).filled())))
        .map_err(err)?
        .label("generated")
        .legend(|(x, y)| Circle::new((x, y), 3, GENERATED.filled()));
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE.mix(0.8)).draw().map_err(err)?;
    root.present().map_err(err)
}

pub fn loss_curve(path: &Path, trace: &[LossPoint]) -> Result<()> {
    let last = trace.last().map_or(1, |p| p.step.max(1)) as f64;
    let (y0, y1) = log_range(trace.iter().map(|p| p.loss));

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("empirical flow-matching risk", ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..last, (y0..y1).log_scale())
        .map_err(err)?;
    chart.configure_mesh().x_desc("step").y_desc("loss").draw().map_err(err)?;
    chart
        .draw_series(LineSeries::new(
            trace.iter().filter(|p| p.loss > 0.0 && p.loss.is_finite()).map(|p| (p.step as f64, p.loss)),
            &GENERATED,
        ))
        .map_err(err)?;
    root.present().map_err(err)
}

/// `L_t` against `1/t̲` on log-log axes.
pub fn lipschitz_t(path: &Path, rows: &[LipschitzTRow], slope: Option<f64>) -> Result<()> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.l_t > 0.0).map(|r| (1.0 / r.t_floor, r.l_t)).collect();
    let (x0, x1) = log_range(pts.iter().map(|p| p.0));
    let (y0, y1) = log_range(pts.iter().map(|p| p.1));
    let caption = match slope {
        Some(s) => format!("time Lipschitz constant (slope {s:.3})"),
        None => "time Lipschitz constant".to_string(),
    };

    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
        .map_err(err)?;
    chart.configure_mesh().x_desc("1 / t_floor").y_desc("L_t").draw().map_err(err)?;
    chart.draw_series(LineSeries::new(pts.iter().copied(), &GENERATED)).map_err(err)?;
    chart.draw_series(pts.iter().map(|&p| Circle::new(p, 4, GENERATED.filled()))).map_err(err)?;
    root.present().map_err(err)
}
