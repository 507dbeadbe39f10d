//! Minimal SVG charts for traces, accuracy curves and reliability diagrams.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::decision::{PredictionTrace, ReliabilityBin};
use crate::error::{IoContext, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 40.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub series: Vec<Series>,
    /// Diagonal reference line from the lower-left to the upper-right corner.
    pub diagonal: bool,
    /// Bars drawn behind the lines: `(x0, x1, height)`.
    pub bars: Vec<(f64, f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LineChart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            x_range,
            y_range,
            series: Vec::new(),
            diagonal: false,
            bars: Vec::new(),
        }
    }

    fn sx(&self, x: f64) -> f64 {
        let (x0, x1) = self.x_range;
        let span = if x1 > x0 { x1 - x0 } else { 1.0 };
        MARGIN.0 + (x - x0) / span * (WIDTH - MARGIN.0 - MARGIN.1)
    }

    fn sy(&self, y: f64) -> f64 {
        let (y0, y1) = self.y_range;
        let span = if y1 > y0 { y1 - y0 } else { 1.0 };
        HEIGHT - MARGIN.3 - (y - y0) / span * (HEIGHT - MARGIN.2 - MARGIN.3)
    }

    pub fn to_svg(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (left, right) = (self.sx(self.x_range.0), self.sx(self.x_range.1));
        let (bottom, top) = (self.sy(self.y_range.0), self.sy(self.y_range.1));
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let y = self.y_range.0 + f * (self.y_range.1 - self.y_range.0);
            let x = self.x_range.0 + f * (self.x_range.1 - self.x_range.0);
            let (py, px) = (self.sy(y), self.sx(x));
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{py}" x2="{right}" y2="{py}" stroke="#e0e0e0"/><text x="{}" y="{}" text-anchor="end">{y:.2}</text>"##,
                left - 6.0,
                py + 4.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{px}" y="{}" text-anchor="middle">{}</text>"#,
                bottom + 16.0,
                format_tick(x)
            );
        }
        for &(x0, x1, h) in &self.bars {
            let (a, b, y) = (self.sx(x0), self.sx(x1), self.sy(h));
            let _ = writeln!(
                s,
                r##"<rect x="{a}" y="{y}" width="{}" height="{}" fill="#9ecae1" stroke="#6baed6"/>"##,
                (b - a).max(0.0),
                (bottom - y).max(0.0)
            );
        }
        if self.diagonal {
            let _ = writeln!(
                s,
                r##"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{top}" stroke="#555" stroke-dasharray="4 4"/>"##
            );
        }
        let _ = writeln!(
            s,
            r##"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            right - left,
            bottom - top
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                path.join(" ")
            );
            let ly = top + 14.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
                right - 150.0,
                right - 130.0,
                right - 125.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            (top + bottom) / 2.0,
            (top + bottom) / 2.0,
            escape(&self.y_label)
        );
        s.push_str("</svg>\n");
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_svg()).at(path)
    }
}

fn format_tick(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.2}")
    }
}

fn last_index(n: usize) -> f64 {
    n.saturating_sub(1).max(1) as f64
}

/// Probability of class 1 over time for up to `limit` traces.
pub fn probability_traces(traces: &[PredictionTrace], limit: usize, smoothed: bool) -> LineChart {
    let n = traces.first().map_or(1, |t| t.len());
    let mut chart = LineChart::new(
        if smoothed { "Smoothed predictions" } else { "Raw predictions" },
        "time step",
        "p(class 1)",
        (0.0, last_index(n)),
        (0.0, 1.0),
    );
    for trace in traces.iter().take(limit) {
        let values = if smoothed { &trace.smoothed } else { &trace.raw };
        let col = values.ncols() - 1;
        chart.series.push(Series {
            name: match trace.label {
                Some(l) => format!("{} (class {l})", trace.id),
                None => trace.id.clone(),
            },
            points: values.column(col).iter().enumerate().map(|(t, &p)| (t as f64, p)).collect(),
        });
    }
    chart
}

pub fn accuracy_curve(accuracy: &[f64]) -> LineChart {
    let mut chart = LineChart::new(
        "Sequence accuracy over time",
        "time step",
        "accuracy",
        (0.0, last_index(accuracy.len())),
        (0.0, 1.0),
    );
    chart.series.push(Series {
        name: "accuracy".into(),
        points: accuracy.iter().enumerate().map(|(t, &a)| (t as f64, a)).collect(),
    });
    chart
}

pub fn reliability_diagram(bins: &[ReliabilityBin], ece: f64) -> LineChart {
    let mut chart = LineChart::new(
        &format!("Reliability (ECE {ece:.4})"),
        "predicted probability of class 1",
        "observed frequency",
        (0.0, 1.0),
        (0.0, 1.0),
    );
    chart.diagonal = true;
    chart.bars = bins
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.lower, b.upper, b.positive_rate))
        .collect();
    chart.series.push(Series {
        name: "mean prediction".into(),
        points: bins
            .iter()
            .filter(|b| b.count > 0)
            .map(|b| (b.mean_predicted, b.positive_rate))
            .collect(),
    });
    chart
}

/// Mean confidence over time, one line per sequence class.
pub fn confidence_by_class(traces: &[PredictionTrace], class_names: &[&str]) -> LineChart {
    let n = traces.first().map_or(1, |t| t.len());
    let mut chart = LineChart::new(
        "Confidence over time",
        "time step",
        "mean confidence",
        (0.0, last_index(n)),
        (0.0, 1.0),
    );
    for (class, name) in class_names.iter().enumerate() {
        let members: Vec<&PredictionTrace> = traces
            .iter()
            .filter(|t| t.label == Some(class as u8) && t.len() == n)
            .collect();
        if members.is_empty() {
            continue;
        }
        chart.series.push(Series {
            name: format!("{name} ({})", members.len()),
            points: (0..n)
                .map(|t| {
                    let mean = members.iter().map(|m| m.confidence[t]).sum::<f64>() / members.len() as f64;
                    (t as f64, mean)
                })
                .collect(),
        });
    }
    chart
}
