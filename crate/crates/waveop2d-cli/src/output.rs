//! Summaries, CSV tables and SVG plots written by every subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use waveop2d::theorem_lab::VerificationReport;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Table {
    /// File stem of the CSV.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            // +0.0 folds away the sign of zero
            let cells: Vec<String> = r.iter().map(|x| format!("{:.17e}", x + 0.0)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub logx: bool,
    pub logy: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, xlabel: &str, ylabel: &str, logx: bool, logy: bool) -> Self {
        Self {
            title: title.into(),
            xlabel: xlabel.into(),
            ylabel: ylabel.into(),
            logx,
            logy,
            series: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        self.series.push(Series {
            name: name.into(),
            x,
            y,
        });
        self
    }
}

/// What a subcommand leaves behind: verdicts with their thresholds, raw data, tables, plots.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub subcommand: String,
    pub version: String,
    pub report: VerificationReport,
    pub data: serde_json::Value,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
}

impl Summary {
    /// `<subcommand>.json`, one CSV per table and `<subcommand>.svg`.
    pub fn emit(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        fs::write(
            out.join(format!("{}.json", self.subcommand)),
            serde_json::to_vec_pretty(self)?,
        )?;
        for t in &self.tables {
            fs::write(out.join(format!("{}.csv", t.name)), t.to_csv())?;
        }
        if !self.plots.is_empty() {
            fs::write(
                out.join(format!("{}.svg", self.subcommand)),
                render(&self.plots),
            )?;
        }
        Ok(())
    }
}

const W: f64 = 640.0;
const H: f64 = 320.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 45.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn axis_value(v: f64, log: bool) -> Option<f64> {
    let t = if log { v.log10() } else { v };
    t.is_finite().then_some(t)
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{}", v.round() as i64)
    } else {
        format!("{v:.3}")
    }
}

fn panel(p: &Plot, y0: f64, out: &mut String) {
    let pts: Vec<Vec<(f64, f64)>> = p
        .series
        .iter()
        .map(|s| {
            s.x.iter()
                .zip(&s.y)
                .filter_map(|(x, y)| Some((axis_value(*x, p.logx)?, axis_value(*y, p.logy)?)))
                .collect()
        })
        .collect();
    let (x0, x1) = bounds(pts.iter().flatten().map(|q| q.0));
    let (ya, yb) = bounds(pts.iter().flatten().map(|q| q.1));
    let (pw, ph) = (W - PAD_L - PAD_R, H - PAD_T - PAD_B);
    let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| y0 + PAD_T + (1.0 - (y - ya) / (yb - ya)) * ph;

    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        y0 + 18.0,
        esc(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{PAD_L}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##,
        y0 + PAD_T
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), ya + f * (yb - ya));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
            sx(xv),
            y0 + H - PAD_B + 14.0,
            tick(xv, p.logx)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{}</text>"#,
            PAD_L - 4.0,
            sy(yv) + 3.0,
            tick(yv, p.logy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
        PAD_L + pw / 2.0,
        y0 + H - 8.0,
        esc(&p.xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" font-size="11" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        y0 + PAD_T + ph / 2.0,
        y0 + PAD_T + ph / 2.0,
        esc(&p.ylabel)
    );
    for (i, (s, line)) in p.series.iter().zip(&pts).enumerate() {
        let c = COLORS[i % COLORS.len()];
        let path: Vec<String> = line
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        if path.len() > 1 {
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        for (x, y) in line {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{c}"/>"#,
                sx(*x),
                sy(*y)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{c}">{}</text>"#,
            PAD_L + 8.0,
            y0 + PAD_T + 14.0 + 12.0 * i as f64,
            esc(&s.name)
        );
    }
}

/// Panels stacked vertically in one self-contained document.
pub fn render(plots: &[Plot]) -> String {
    let mut s = String::new();
    let total = H * plots.len() as f64;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total}" viewBox="0 0 {W} {total}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, p) in plots.iter().enumerate() {
        panel(p, k as f64 * H, &mut s);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_is_well_formed_and_skips_bad_points() {
        let p = Plot::new("a < b", "x", "y", true, true).with(
            "s",
            vec![1.0, 10.0, 100.0],
            vec![1e-3, 0.0, 1e-5],
        );
        let s = render(&[p.clone(), p]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        // zero is dropped on the log axis
        assert_eq!(s.matches("<circle").count(), 4);
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let mut t = Table::new("t", &["lambda", "defect"]);
        t.push(vec![0.1, 1.0 / 3.0]);
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("lambda,defect"));
        let v: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(v, vec![0.1, 1.0 / 3.0]);
    }
}
