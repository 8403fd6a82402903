//! CSV tables and SVG line plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::necessity::NecessityReport;
use super::profile::ProfileRow;
use super::rollout::{QuartileRow, RolloutReport};
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    k: usize,
    tracking_err: f64,
    dist_train: f64,
    perception_err: f64,
    rollout_id: usize,
    controller: &'a str,
}

/// `k, tracking_err, dist_train, perception_err, rollout_id, controller`.
pub fn write_rollout_csv(path: &Path, reports: &[RolloutReport]) -> Result<()> {
    write_rows(
        path,
        reports.iter().flat_map(|rep| {
            rep.series.iter().flat_map(move |s| {
                (0..s.tracking_err.len()).map(move |k| SeriesRow {
                    k,
                    tracking_err: s.tracking_err[k],
                    dist_train: s.dist_train[k],
                    perception_err: s.perception_err[k],
                    rollout_id: s.id,
                    controller: &rep.summary.controller,
                })
            })
        }),
    )
}

#[derive(Serialize)]
struct AggregateRow<'a> {
    k: usize,
    q1: f64,
    median: f64,
    q3: f64,
    controller: &'a str,
}

/// `k, q1, median, q3, controller`.
pub fn write_aggregate_csv(path: &Path, reports: &[RolloutReport]) -> Result<()> {
    write_rows(
        path,
        reports.iter().flat_map(|rep| {
            rep.aggregate.iter().map(move |q| AggregateRow {
                k: q.k,
                q1: q.q1,
                median: q.median,
                q3: q.q3,
                controller: &rep.summary.controller,
            })
        }),
    )
}

#[derive(Serialize)]
struct NecessityCsvRow {
    alpha: f64,
    spectral_radius: Option<f64>,
    verdict: &'static str,
}

/// `alpha, spectral_radius, verdict`.
pub fn write_necessity_csv(path: &Path, rep: &NecessityReport) -> Result<()> {
    write_rows(
        path,
        rep.rows.iter().map(|r| NecessityCsvRow { alpha: r.alpha, spectral_radius: r.spectral_radius, verdict: r.verdict.label() }),
    )
}

/// `dist_to_nearest_train, error_inf, train_index`.
pub fn write_profile_csv(path: &Path, rows: &[ProfileRow]) -> Result<()> {
    write_rows(path, rows.iter())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        MARGIN + (W - 2.0 * MARGIN) * v / self.x_max
    }

    fn y(&self, v: f64) -> f64 {
        H - MARGIN - (H - 2.0 * MARGIN) * v.min(self.y_max) / self.y_max
    }
}

fn nice_ceiling(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * p).find(|c| *c >= v).unwrap_or(10.0 * p)
}

fn axes(svg: &mut String, f: &Frame, title: &str, x_label: &str, y_label: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
    let (x0, y0, x1, y1) = (MARGIN, H - MARGIN, W - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    for i in 0..=4 {
        let fx = f.x_max * i as f64 / 4.0;
        let fy = f.y_max * i as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, f.x(fx), y0 + 18.0, fmt_tick(fx));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 6.0, f.y(fy) + 4.0, fmt_tick(fy));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, W / 2.0, H - 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{y_label}</text>"#,
        H / 2.0,
        H / 2.0
    );
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-2..1e4).contains(&v.abs()) {
        format!("{}", (v * 1000.0).round() / 1000.0)
    } else {
        format!("{v:.1e}")
    }
}

/// Median line with a shaded quartile band per labelled series, and an
/// optional dashed horizontal reference line.
pub fn quartile_plot_svg(
    title: &str,
    y_label: &str,
    series: &[(&str, &[QuartileRow])],
    reference: Option<(&str, f64)>,
) -> String {
    let x_max = series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.k as f64)).fold(1.0, f64::max);
    let y_top = series.iter().flat_map(|(_, rows)| rows.iter().map(|r| r.q3)).filter(|v| v.is_finite()).fold(0.0, f64::max);
    let y_top = reference.map_or(y_top, |(_, v)| y_top.max(v));
    let f = Frame { x_max, y_max: nice_ceiling(y_top) };
    let mut svg = String::new();
    axes(&mut svg, &f, title, "step k", y_label);
    if let Some((label, v)) = reference {
        let y = f.y(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.1}" y2="{y:.2}" stroke="black" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.2}">{label}</text>"#,
            W - MARGIN,
            MARGIN + 4.0,
            y - 4.0
        );
    }
    for (i, (label, rows)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if rows.is_empty() {
            continue;
        }
        let mut band = String::new();
        for (j, r) in rows.iter().enumerate() {
            let _ = write!(band, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, f.x(r.k as f64), f.y(r.q3));
        }
        for r in rows.iter().rev() {
            let _ = write!(band, "L{:.2},{:.2} ", f.x(r.k as f64), f.y(r.q1));
        }
        let _ = writeln!(svg, r#"<path d="{band}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#);
        let mut line = String::new();
        for (j, r) in rows.iter().enumerate() {
            let _ = write!(line, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, f.x(r.k as f64), f.y(r.median));
        }
        let _ = writeln!(svg, r#"<path d="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{label}</text>"#,
            W - MARGIN - 150.0,
            W - MARGIN - 130.0,
            W - MARGIN - 124.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Scatter of perception error against distance to the training data.
pub fn profile_plot_svg(title: &str, rows: &[ProfileRow]) -> String {
    let x_max = nice_ceiling(rows.iter().map(|r| r.dist_to_nearest_train).fold(0.0, f64::max));
    let y_max = nice_ceiling(rows.iter().map(|r| r.error_inf).filter(|v| v.is_finite()).fold(0.0, f64::max));
    let f = Frame { x_max, y_max };
    let mut svg = String::new();
    axes(&mut svg, &f, title, "distance to nearest training point", "perception error (l_inf)");
    for r in rows {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="#1f77b4" fill-opacity="0.5"/>"##,
            f.x(r.dist_to_nearest_train),
            f.y(r.error_inf)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
