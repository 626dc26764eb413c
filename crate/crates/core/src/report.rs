//! Report files: JSON, CSV series and SVG line plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::AreaSample;
use crate::registration::RegistrationCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const PAD_LEFT: f64 = 70.0;
const PAD_RIGHT: f64 = 20.0;
const PAD_TOP: f64 = 40.0;
const PAD_BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HLine {
    pub label: String,
    pub y: f64,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    pub hlines: Vec<HLine>,
}

/// Data range padded by 5% on each side; a flat range is widened by one unit.
pub fn padded_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return (0.0, 1.0);
    }
    if hi == lo {
        return (lo - 1.0, hi + 1.0);
    }
    let m = 0.05 * (hi - lo);
    (lo - m, hi + m)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    pub fn x_range(&self) -> (f64, f64) {
        padded_range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)))
    }

    pub fn y_range(&self) -> (f64, f64) {
        padded_range(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1))
                .chain(self.hlines.iter().map(|h| h.y)),
        )
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let pw = WIDTH - PAD_LEFT - PAD_RIGHT;
        let ph = HEIGHT - PAD_TOP - PAD_BOTTOM;
        let sx = |x: f64| PAD_LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| PAD_TOP + (y1 - y) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{PAD_LEFT}" y="{PAD_TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                sx(fx),
                HEIGHT - PAD_BOTTOM + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
                PAD_LEFT - 6.0,
                sy(fy) + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            PAD_LEFT + pw / 2.0,
            HEIGHT - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})">{}</text>"#,
            PAD_TOP + ph / 2.0,
            PAD_TOP + ph / 2.0,
            esc(&self.y_label)
        );
        for h in &self.hlines {
            let _ = writeln!(
                s,
                r#"<line x1="{PAD_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{}" stroke-dasharray="6 3"><title>{}</title></line>"#,
                PAD_LEFT + pw,
                h.color,
                esc(&h.label),
                y = sy(h.y)
            );
        }
        for (k, series) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let pts: Vec<String> = series
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
                pts.join(" "),
                esc(&series.name)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                PAD_LEFT + 8.0,
                PAD_TOP + 14.0 + 14.0 * k as f64,
                esc(&series.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let t = format!("{v:.3}");
    let t = t.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" {
        "0".into()
    } else {
        t.to_string()
    }
}

pub fn area_series_csv(series: &[AreaSample]) -> String {
    let mut s = String::from("cycle,area_mm2\n");
    for a in series {
        let _ = writeln!(s, "{},{}", a.cycle, a.area);
    }
    s
}

pub fn area_plot(series: &[AreaSample], target_area: Option<f64>) -> LinePlot {
    LinePlot {
        title: "Surface area evolution".into(),
        x_label: "cycle".into(),
        y_label: "area (mm^2)".into(),
        series: vec![Series {
            name: "simulated".into(),
            points: series.iter().map(|a| (a.cycle as f64, a.area)).collect(),
        }],
        hlines: target_area
            .map(|y| HLine {
                label: "target".into(),
                y,
                color: "red".into(),
            })
            .into_iter()
            .collect(),
    }
}

/// RMSE against threshold, one line per named curve.
pub fn rmse_plot(curves: &[(&str, &RegistrationCurve)]) -> LinePlot {
    LinePlot {
        title: "RMSE vs threshold".into(),
        x_label: "threshold (mm)".into(),
        y_label: "RMSE (mm)".into(),
        series: curves
            .iter()
            .map(|(name, c)| Series {
                name: name.to_string(),
                points: c.samples.iter().map(|s| (s.threshold, s.rmse)).collect(),
            })
            .collect(),
        hlines: Vec::new(),
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricsReport;

    #[test]
    fn empty_report_is_valid_json() {
        let s = to_json(&MetricsReport::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(v["areaSeries"].as_array().unwrap().is_empty());
        assert!(v["surfaceArea"].is_null());
    }

    #[test]
    fn five_percent_margin() {
        assert_eq!(padded_range([0.0, 10.0]), (-0.5, 10.5));
        assert_eq!(padded_range([3.0]), (2.0, 4.0));
        assert_eq!(padded_range([]), (0.0, 1.0));
    }

    #[test]
    fn svg_is_deterministic() {
        let series = vec![
            AreaSample { cycle: 0, area: 9000.0 },
            AreaSample { cycle: 1, area: 8000.5 },
            AreaSample { cycle: 2, area: 7600.25 },
        ];
        let a = area_plot(&series, Some(7539.8)).to_svg();
        let b = area_plot(&series, Some(7539.8)).to_svg();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("stroke=\"red\""));
        assert_eq!(area_series_csv(&series).lines().next(), Some("cycle,area_mm2"));
    }
}
