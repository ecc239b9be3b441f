//! Minimal deterministic SVG line charts for experiment tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiments::SweepVariable;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Renders `data` as an SVG document. Series with a single point are drawn as
/// a marker only. Output depends only on the input, byte for byte.
pub fn emit_plot(data: &PlotData) -> Result<String> {
    let points = data.series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut any = false;
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invariant("points", format!("non-finite point ({x}, {y})")));
        }
        any = true;
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !any {
        return Err(Error::EmptyTable);
    }
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.05 };
        y0 -= pad;
        y1 += pad;
    }
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(&data.title)
    );
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0,
        escape(&data.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&data.y_label)
    );

    for (k, s) in data.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        if s.points.len() > 1 {
            let coords: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            );
        }
        for &(x, y) in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0
        );
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 26.0, escape(&s.name));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        let s = format!("{v:.3}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        if s == "-0" { "0".into() } else { s.into() }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Reads a table written by the sweep or case-study runners back into plot
/// form. Sweep tables plot `mean_min_voi` per policy; case-study tables plot
/// `mean_voi` per policy.
pub fn plot_data_from_csv(text: &str) -> Result<PlotData> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                path: name.into(),
                message: "missing column".into(),
            })
    };
    let sweep = headers.iter().any(|h| h == "sweep_variable");
    let (x_col, y_col) = if sweep {
        (col("value")?, col("mean_min_voi")?)
    } else {
        (col("t")?, col("mean_voi")?)
    };
    let policy_col = col("policy")?;
    let var_col = if sweep { Some(col("sweep_variable")?) } else { None };

    let mut series: Vec<Series> = Vec::new();
    let mut variable: Option<String> = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Schema {
                    path: format!("row {}.{}", i + 1, &headers[c]),
                    message: "expected a number".into(),
                })
        };
        let (x, y) = (num(x_col)?, num(y_col)?);
        if let Some(c) = var_col {
            variable.get_or_insert_with(|| rec[c].to_string());
        }
        let name = &rec[policy_col];
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x, y)),
            None => series.push(Series {
                name: name.into(),
                points: vec![(x, y)],
            }),
        }
    }
    if series.is_empty() {
        return Err(Error::EmptyTable);
    }
    Ok(if sweep {
        let var = variable.unwrap_or_default();
        let x_label = match var.as_str() {
            "tx_power" => SweepVariable::TxPower.axis_label().to_string(),
            "rho_halfwidth" => SweepVariable::RhoHalfwidth.axis_label().to_string(),
            "node_count" => SweepVariable::NodeCount.axis_label().to_string(),
            other => other.to_string(),
        };
        PlotData {
            title: format!("Time-average minimum VoI vs {var}"),
            x_label,
            y_label: "Time-average minimum VoI (bits/s)".into(),
            series,
        }
    } else {
        PlotData {
            title: "Average VoI over time".into(),
            x_label: "Time slot".into(),
            y_label: "Average VoI among nodes (bits/s)".into(),
            series,
        }
    })
}
