//! Plot data (`cells error` columns with reference slopes) and a minimal
//! log-log SVG renderer.

use std::fmt::Write as _;
use std::path::Path;

use stokes_qopr::ErrorReport;

use crate::{CliError, Result};

/// Reference decay rates in the number of cells.
pub const SLOPES: [f64; 2] = [0.5, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub cells: Vec<f64>,
    pub errors: Vec<f64>,
}

impl Curve {
    /// Velocity `H^1` and pressure `L^2` curves of a report.
    pub fn from_report(report: &ErrorReport) -> Vec<Curve> {
        let cells: Vec<f64> = report.rows.iter().map(|r| r.cells as f64).collect();
        vec![
            Curve { label: "h1_u".into(), cells: cells.clone(), errors: report.h1() },
            Curve { label: "l2_p".into(), cells, errors: report.l2() },
        ]
    }

    /// `C cells^{-rate}` anchored at the first point.
    pub fn slope(&self, rate: f64) -> Vec<f64> {
        let c = self.errors[0] * self.cells[0].powf(rate);
        self.cells.iter().map(|n| c * n.powf(-rate)).collect()
    }
}

/// Writes one curve as whitespace-delimited columns with reference slopes.
pub fn emit_plotdata(curve: &Curve, path: &Path) -> Result<()> {
    if curve.cells.is_empty() {
        return Err(CliError::EmptySeries(curve.label.clone()));
    }
    let slopes: Vec<Vec<f64>> = SLOPES.iter().map(|r| curve.slope(*r)).collect();
    let mut s = format!("# cells {} slope_0.5 slope_1\n", curve.label);
    for (i, (cells, error)) in curve.cells.iter().zip(&curve.errors).enumerate() {
        writeln!(s, "{cells} {error:.6e} {:.6e} {:.6e}", slopes[0][i], slopes[1][i]).unwrap();
    }
    std::fs::write(path, s).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Renders curves on log-log axes with decade grid lines.
pub fn emit_svg(curves: &[Curve], title: &str, path: &Path) -> Result<()> {
    let points = curves.iter().flat_map(|c| c.cells.iter().zip(&c.errors));
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points.filter(|(x, y)| **x > 0.0 && **y > 0.0) {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        return Err(CliError::EmptySeries(title.to_string()));
    }
    let (x0, x1, y0, y1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0), y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(d));
        writeln!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{MARGIN}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>",
            HEIGHT - MARGIN
        )
        .unwrap();
        writeln!(s, "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{d}</text>", HEIGHT - MARGIN + 16.0)
            .unwrap();
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(d));
        writeln!(s, "<line x1=\"{MARGIN}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>", WIDTH - MARGIN)
            .unwrap();
        writeln!(s, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{d}</text>", MARGIN - 6.0, y + 4.0).unwrap();
    }
    writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">cells</text>", WIDTH / 2.0, HEIGHT - 16.0).unwrap();
    for (k, curve) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let line = |ys: &[f64]| {
            curve
                .cells
                .iter()
                .zip(ys)
                .map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y)))
                .collect::<Vec<_>>()
                .join(" ")
        };
        writeln!(
            s,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            line(&curve.errors)
        )
        .unwrap();
        for rate in SLOPES {
            writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-dasharray=\"4 3\" stroke-width=\"0.8\" points=\"{}\"/>",
                line(&curve.slope(rate))
            )
            .unwrap();
        }
        for (x, y) in curve.cells.iter().zip(&curve.errors) {
            writeln!(s, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>", px(*x), py(*y)).unwrap();
        }
        writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>",
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * k as f64,
            curve.label
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    std::fs::write(path, s).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
