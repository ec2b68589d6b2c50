//! ROC curves as SVG with a logarithmic BPCER axis.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{PadError, Result};
use crate::metrics::RocPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];

/// Horizontal axis mapping `log10(bpcer)` from `[10^min_decade, 1]` onto the plot area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAxis {
    pub min_decade: i32,
}

impl LogAxis {
    /// Smallest decade holding every non-zero BPCER, at least `10^-1`.
    pub fn fit<'a>(points: impl IntoIterator<Item = &'a RocPoint>) -> Self {
        let smallest = points
            .into_iter()
            .map(|p| p.bpcer)
            .filter(|&b| b > 0.0)
            .fold(1.0f64, f64::min);
        Self { min_decade: (smallest.log10().floor() as i32).min(-1) }
    }

    /// Pixel x of a BPCER value; zero is drawn at the left edge.
    pub fn x(&self, bpcer: f64) -> f64 {
        let lo = self.min_decade as f64;
        let v = if bpcer > 0.0 { bpcer.log10().max(lo) } else { lo };
        MARGIN_LEFT + (v - lo) / -lo * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }
}

fn y(tpr: f64) -> f64 {
    HEIGHT - MARGIN_BOTTOM - tpr * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
}

/// SVG document plotting `1 - APCER` against BPCER for each named curve.
pub fn roc_svg(curves: &[(String, Vec<RocPoint>)]) -> Result<String> {
    if curves.is_empty() || curves.iter().any(|(_, pts)| pts.is_empty()) {
        return Err(PadError::Contract("ROC plot needs at least one non-empty curve".into()));
    }
    let axis = LogAxis::fit(curves.iter().flat_map(|(_, pts)| pts));
    let mut svg = String::new();
    let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (y(0.0), y(1.0));
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#).ok();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).ok();
    writeln!(svg, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1).ok();
    for decade in axis.min_decade..=0 {
        let x = axis.x(10f64.powi(decade));
        writeln!(svg, r##"<line x1="{x:.2}" y1="{y1}" x2="{x:.2}" y2="{y0}" stroke="#ddd"/>"##).ok();
        writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">1e{decade}</text>"#, y0 + 18.0).ok();
        if decade < 0 {
            for m in 2..10 {
                let xm = axis.x(m as f64 * 10f64.powi(decade));
                writeln!(svg, r#"<line x1="{xm:.2}" y1="{y0}" x2="{xm:.2}" y2="{}" stroke="black"/>"#, y0 - 4.0).ok();
            }
        }
    }
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        writeln!(svg, r##"<line x1="{x0}" y1="{:.2}" x2="{x1}" y2="{:.2}" stroke="#ddd"/>"##, y(t), y(t)).ok();
        writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end">{t:.1}</text>"#, x0 - 6.0, y(t) + 4.0).ok();
    }
    writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">BPCER (log scale)</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0).ok();
    writeln!(
        svg,
        r#"<text x="18" y="{0}" text-anchor="middle" transform="rotate(-90 18 {0})">1 - APCER</text>"#,
        (y0 + y1) / 2.0
    )
    .ok();
    for (i, (name, points)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        // Points arrive in decreasing threshold order, i.e. increasing BPCER.
        let path: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", axis.x(p.bpcer), y(1.0 - p.apcer))).collect();
        writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" ")).ok();
        let ly = MARGIN_TOP + 20.0 * i as f64 + 10.0;
        writeln!(svg, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, x1 + 10.0, x1 + 30.0).ok();
        writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, x1 + 35.0, ly + 4.0, escape(name)).ok();
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn save_roc_svg(path: &Path, curves: &[(String, Vec<RocPoint>)]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, roc_svg(curves)?)?;
    Ok(())
}
