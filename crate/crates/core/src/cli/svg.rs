//! Self-contained SVG line plots of trace columns against time.

use std::fmt::Write;

use super::trace_csv::TraceTable;
use super::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 45.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#17becf"];
const TICKS: usize = 5;

struct Frame {
    t0: f64,
    t1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, t: f64) -> f64 {
        LEFT + (t - self.t0) / (self.t1 - self.t0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

fn widen((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi - lo > 1e-12 {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Plots `columns` over `t`, with dashed horizontal lines at `limits`.
pub fn plot_svg(table: &TraceTable, columns: &[&str], limits: &[f64]) -> Result<String, CliError> {
    let t_idx = table.column_index("t").ok_or_else(|| CliError::Plot("trace has no 't' column".into()))?;
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| table.column_index(c).ok_or_else(|| CliError::Plot(format!("unknown column '{c}'"))))
        .collect::<Result<_, _>>()?;

    let (t0, t1) = match range(table.rows.iter().map(|r| r[t_idx])) {
        Some((a, b)) if b > a => (a, b),
        Some((a, _)) => (a, a + 1.0),
        None => (0.0, 1.0),
    };
    let values = table.rows.iter().flat_map(|r| idx.iter().map(move |i| r[*i])).chain(limits.iter().copied());
    let (y0, y1) = widen(range(values).unwrap_or((-1.0, 1.0)));
    let f = Frame { t0, t1, y0, y1 };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);

    // axes and ticks
    let (xa, xb, ya, yb) = (f.px(t0), f.px(t1), f.py(y0), f.py(y1));
    let _ = writeln!(s, r#"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xb:.2}" y2="{ya:.2}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xa:.2}" y2="{yb:.2}" stroke="black"/>"#);
    for k in 0..=TICKS {
        let frac = k as f64 / TICKS as f64;
        let t = t0 + frac * (t1 - t0);
        let x = f.px(t);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{ya:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, ya + 4.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, ya + 18.0, tick_label(t));
        let y = y0 + frac * (y1 - y0);
        let py = f.py(y);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{py:.2}" x2="{xa:.2}" y2="{py:.2}" stroke="black"/>"#, xa - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, xa - 7.0, py + 4.0, tick_label(y));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t [s]</text>"#, (xa + xb) / 2.0, HEIGHT - 8.0);

    for limit in limits {
        let y = f.py(*limit);
        let _ = writeln!(
            s,
            r##"<line x1="{xa:.2}" y1="{y:.2}" x2="{xb:.2}" y2="{y:.2}" stroke="#d62728" stroke-dasharray="6 4"/>"##
        );
    }

    for (n, i) in idx.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        if table.rows.is_empty() {
            continue;
        }
        let mut pts = String::new();
        for r in &table.rows {
            if r[*i].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", f.px(r[t_idx]), f.py(r[*i]));
            }
        }
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, pts.trim_end());
    }

    // legend
    let mut entries: Vec<(String, &str, bool)> =
        columns.iter().enumerate().map(|(n, c)| (c.to_string(), PALETTE[n % PALETTE.len()], false)).collect();
    if !limits.is_empty() {
        entries.push(("limits".into(), "#d62728", true));
    }
    for (k, (label, color, dashed)) in entries.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * k as f64;
        let x = WIDTH - RIGHT - 130.0;
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x + 24.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 30.0, y + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick_label(v: f64) -> String {
    let v = if v.abs() < 1e-12 { 0.0 } else { v };
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
