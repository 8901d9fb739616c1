//! Fixed-layout SVG charts of report tables.

use std::fmt::Write as _;

use crate::error::{LabError, Result};
use crate::harness::report::{ExperimentReport, Table};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 78.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 44.0;
const BOTTOM: f64 = 58.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Attenuation,
    Weights,
    CalibrationScatter,
    CalibrationCurve,
    Frontier,
    AlignmentSharpe,
    AssetScatter,
}

impl PlotKind {
    pub const ALL: [PlotKind; 7] = [
        PlotKind::Attenuation,
        PlotKind::Weights,
        PlotKind::CalibrationScatter,
        PlotKind::CalibrationCurve,
        PlotKind::Frontier,
        PlotKind::AlignmentSharpe,
        PlotKind::AssetScatter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::Attenuation => "attenuation",
            PlotKind::Weights => "weights",
            PlotKind::CalibrationScatter => "calibration-scatter",
            PlotKind::CalibrationCurve => "calibration-curve",
            PlotKind::Frontier => "frontier",
            PlotKind::AlignmentSharpe => "alignment-sharpe",
            PlotKind::AssetScatter => "asset-scatter",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| LabError::Config(format!("unknown plot kind {name:?}")))
    }

    pub fn for_experiment(experiment: &str) -> &'static [PlotKind] {
        match experiment {
            "attenuation" => &[PlotKind::Attenuation],
            "cancellation" => &[PlotKind::Weights],
            "calibration" => &[PlotKind::CalibrationScatter, PlotKind::CalibrationCurve],
            "nonlinear-frontier" => &[PlotKind::Weights, PlotKind::Frontier],
            "alignment" => &[PlotKind::AlignmentSharpe, PlotKind::Frontier],
            "real-data-frontier" => &[PlotKind::AssetScatter, PlotKind::Frontier],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Dots,
    Line,
    Dashed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub mark: Mark,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn column_pairs(table: &Table, x: &str, y: &str) -> Result<Vec<(f64, f64)>> {
    let (Some(i), Some(j)) = (table.column_index(x), table.column_index(y)) else {
        return Err(LabError::NoData(format!("table lacks columns {x:?} and {y:?}")));
    };
    Ok(table
        .rows
        .iter()
        .filter_map(|r| Some((r[i].as_f64()?, r[j].as_f64()?)))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect())
}

/// Splits rows by the text of `key`, keeping first-appearance order.
fn grouped(table: &Table, key: &str, x: &str, y: &str, mark: Mark) -> Result<Vec<Series>> {
    let Some(k) = table.column_index(key) else {
        return Ok(vec![Series { name: y.into(), mark, points: column_pairs(table, x, y)? }]);
    };
    let skip = table.column_index("skipped");
    let mut out: Vec<Series> = Vec::new();
    for row in &table.rows {
        if skip.is_some_and(|s| matches!(&row[s], crate::harness::report::Cell::Text(t) if t == "true")) {
            continue;
        }
        let label = match &row[k] {
            crate::harness::report::Cell::Num(v) => format!("{key}={v:.4}"),
            crate::harness::report::Cell::Text(t) => t.clone(),
        };
        let (Some(xi), Some(yi)) = (table.column_index(x), table.column_index(y)) else {
            return Err(LabError::NoData(format!("table lacks columns {x:?} and {y:?}")));
        };
        let (Some(px), Some(py)) = (row[xi].as_f64(), row[yi].as_f64()) else { continue };
        if !(px.is_finite() && py.is_finite()) {
            continue;
        }
        match out.iter_mut().find(|s| s.name == label) {
            Some(s) => s.points.push((px, py)),
            None => out.push(Series { name: label, mark, points: vec![(px, py)] }),
        }
    }
    Ok(out)
}

pub fn chart_for(report: &ExperimentReport, kind: PlotKind) -> Result<Chart> {
    let chart = |title: &str, x: &str, y: &str, series: Vec<Series>| Chart {
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        series,
    };
    Ok(match kind {
        PlotKind::Attenuation => {
            let t = report.table("attenuation")?;
            chart(
                "Attenuation of the omitted-variable slope",
                "sigma_zeta",
                "slope",
                vec![
                    Series { name: "Monte Carlo".into(), mark: Mark::Dots, points: column_pairs(t, "sigma_zeta", "mc_slope")? },
                    Series { name: "theory".into(), mark: Mark::Dashed, points: column_pairs(t, "sigma_zeta", "theory_slope")? },
                ],
            )
        }
        PlotKind::Weights => {
            let t = report.table("weights")?;
            chart(
                "True vs. predicted weights",
                "omega_true",
                "omega_pred",
                vec![Series { name: "weights".into(), mark: Mark::Dots, points: column_pairs(t, "omega_true", "omega_pred")? }],
            )
        }
        PlotKind::CalibrationScatter => {
            let t = report.table("scatter")?;
            chart("Ranking under monotone transforms", "mu", "mu_tilde", grouped(t, "power", "mu", "mu_tilde", Mark::Dots)?)
        }
        PlotKind::CalibrationCurve => {
            let t = report.table("curve")?;
            chart(
                "Sharpe efficiency vs. exponent",
                "p",
                "relative Sharpe",
                vec![Series { name: "relative Sharpe".into(), mark: Mark::Line, points: column_pairs(t, "power", "relative_sharpe")? }],
            )
        }
        PlotKind::Frontier => {
            let t = report.table("frontier")?;
            chart("Efficient frontier", "volatility", "realized return", grouped(t, "series", "volatility", "realized_return", Mark::Line)?)
        }
        PlotKind::AlignmentSharpe => {
            let t = report.table("sharpe")?;
            chart(
                "Sharpe ratio vs. alignment",
                "cos theta",
                "Sharpe / Sharpe(0)",
                vec![Series { name: "ratio".into(), mark: Mark::Dots, points: column_pairs(t, "cos_theta", "ratio")? }],
            )
        }
        PlotKind::AssetScatter => {
            let t = report.table("assets")?;
            chart(
                "Asset mean vs. volatility",
                "volatility",
                "mean return",
                vec![Series { name: "assets".into(), mark: Mark::Dots, points: column_pairs(t, "volatility", "mean")? }],
            )
        }
    })
}

pub fn render_plot(report: &ExperimentReport, kind: PlotKind) -> Result<String> {
    let chart = chart_for(report, kind)?;
    render_chart(&chart, &report.config_hash)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    if span > 0.0 {
        (lo - 0.05 * span, hi + 0.05 * span)
    } else {
        let pad = if lo != 0.0 { 0.05 * lo.abs() } else { 1.0 };
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-2..1e4).contains(&v.abs()) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_chart(chart: &Chart, config_hash: &str) -> Result<String> {
    let points = || chart.series.iter().flat_map(|s| s.points.iter());
    if points().next().is_none() {
        return Err(LabError::NoData(format!("nothing to plot for {:?}", chart.title)));
    }
    let (x0, x1) = padded_range(points().map(|p| p.0));
    let (y0, y1) = padded_range(points().map(|p| p.1));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let w = &mut out;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(w, "<!-- config_hash={config_hash} -->").unwrap();
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, r##"<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(&chart.title)).unwrap();

    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let (px, py) = (sx(fx), sy(fy));
        writeln!(w, r##"<line x1="{px:.2}" y1="{TOP:.2}" x2="{px:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, TOP + ph).unwrap();
        writeln!(w, r##"<line x1="{LEFT:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#e0e0e0"/>"##, LEFT + pw).unwrap();
        writeln!(w, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, TOP + ph + 16.0, tick_label(fx)).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, py + 4.0, tick_label(fy)).unwrap();
    }
    writeln!(w, r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333333"/>"##).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 14.0, escape(&chart.x_label)).unwrap();
    writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    )
    .unwrap();

    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        match s.mark {
            Mark::Dots => {
                writeln!(w, r#"<g fill="{color}" fill-opacity="0.6">"#).unwrap();
                for &(x, y) in &s.points {
                    writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, sx(x), sy(y)).unwrap();
                }
                writeln!(w, "</g>").unwrap();
            }
            Mark::Line | Mark::Dashed => {
                let dash = if s.mark == Mark::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let coords: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                if coords.len() == 1 {
                    writeln!(w, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(s.points[0].0), sy(s.points[0].1)).unwrap();
                } else {
                    writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, coords.join(" ")).unwrap();
                }
            }
        }
    }

    if chart.series.len() > 1 && chart.series.len() <= PALETTE.len() {
        for (i, s) in chart.series.iter().enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let x = LEFT + pw - 150.0;
            writeln!(w, r#"<rect x="{x:.2}" y="{:.2}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]).unwrap();
            writeln!(w, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, x + 16.0, escape(&s.name)).unwrap();
        }
    }
    writeln!(w, "</svg>").unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(points: Vec<(f64, f64)>) -> Chart {
        Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series { name: "s".into(), mark: Mark::Dots, points }],
        }
    }

    #[test]
    fn single_point_is_valid() {
        let svg = render_chart(&chart(vec![(0.0, 0.0)]), "h").unwrap();
        assert!(svg.starts_with("<?xml"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("config_hash=h"));
    }

    #[test]
    fn empty_chart_is_an_error() {
        assert!(matches!(render_chart(&chart(vec![]), "h"), Err(LabError::NoData(_))));
    }

    #[test]
    fn rendering_is_deterministic_and_padded() {
        let c = chart(vec![(0.0, 1.0), (10.0, 2.0)]);
        assert_eq!(render_chart(&c, "h").unwrap(), render_chart(&c, "h").unwrap());
        assert_eq!(padded_range([0.0, 10.0].into_iter()), (-0.5, 10.5));
    }

    #[test]
    fn kinds_round_trip_by_name() {
        for k in PlotKind::ALL {
            assert_eq!(PlotKind::parse(k.name()).unwrap(), k);
        }
        assert!(PlotKind::parse("pie").is_err());
    }
}
