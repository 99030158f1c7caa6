//! Minimal SVG rendering of curves and predictive-check histograms.

use std::fmt::Write;

use crate::diagnostics::PpcEntry;
use crate::summaries::SummaryCurve;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f4e99", "#b2182b", "#1b7837", "#762a83"];

/// Draws shown as grey lines behind each curve.
pub const SPAGHETTI_DRAWS: usize = 50;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| {
            if (b - a).abs() < 1e-12 {
                (a - 0.5, b + 0.5)
            } else {
                (a, b)
            }
        };
        let (x0, x1) = pad(x);
        let (y0, y1) = pad(y);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }

    fn path(&self, xs: &[f64], ys: &[f64]) -> String {
        let mut d = String::new();
        for (i, (x, y)) in xs.iter().zip(ys).enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                self.px(*x),
                self.py(*y)
            );
        }
        d
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=4).map(|i| lo + (hi - lo) * f64::from(i) / 4.0).collect()
}

fn open(out: &mut String, frame: &Frame, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (bx, by) = (frame.py(frame.y0), frame.px(frame.x0));
    let _ = writeln!(
        out,
        r#"<line x1="{by:.2}" y1="{bx:.2}" x2="{:.2}" y2="{bx:.2}" stroke="black"/>"#,
        WIDTH - RIGHT
    );
    let _ = writeln!(
        out,
        r#"<line x1="{by:.2}" y1="{TOP:.2}" x2="{by:.2}" y2="{bx:.2}" stroke="black"/>"#
    );
    for t in ticks(frame.x0, frame.x1) {
        let x = frame.px(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{bx:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.3}</text>"#,
            bx + 5.0,
            bx + 18.0
        );
    }
    for t in ticks(frame.y0, frame.y1) {
        let y = frame.py(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{by:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{t:.3}</text>"#,
            by - 5.0,
            by - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(ylabel)
    );
}

fn rug(out: &mut String, frame: &Frame, doses: &[f64]) {
    let base = frame.py(frame.y0);
    for &d in doses.iter().filter(|d| **d >= frame.x0 && **d <= frame.x1) {
        let x = frame.px(d);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{base:.2}" x2="{x:.2}" y2="{:.2}" stroke="black" stroke-opacity="0.4"/>"#,
            base - 8.0
        );
    }
}

fn range(curves: &[&SummaryCurve], with_draws: bool) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for c in curves {
        let draws = c
            .values
            .iter()
            .take(if with_draws { SPAGHETTI_DRAWS } else { 0 })
            .flatten();
        for &v in c.lower.iter().chain(&c.upper).chain(&c.mean).chain(draws) {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn draw_curve(out: &mut String, frame: &Frame, c: &SummaryCurve, color: &str) {
    for v in c.values.iter().take(SPAGHETTI_DRAWS) {
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="grey" stroke-opacity="0.25" stroke-width="0.8"/>"#,
            frame.path(&c.grid, v)
        );
    }
    for band in [&c.lower, &c.upper] {
        let _ = writeln!(
            out,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-dasharray="6,4" stroke-width="1.2"/>"#,
            frame.path(&c.grid, band)
        );
    }
    let _ = writeln!(
        out,
        r#"<path d="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
        frame.path(&c.grid, &c.mean)
    );
}

fn legend(out: &mut String, labels: &[String]) {
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 14.0 * i as f64 + 6.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            LEFT + 10.0,
            LEFT + 30.0,
            LEFT + 35.0,
            y + 4.0,
            escape(label)
        );
    }
}

/// Dose-response curves (one per moderator level) with draw spaghetti,
/// mean, dashed 95% band and a rug of observed doses.
pub fn curves_svg(title: &str, curves: &[SummaryCurve], observed_doses: &[f64]) -> String {
    let refs: Vec<&SummaryCurve> = curves.iter().collect();
    let x = curves
        .first()
        .map_or((0.0, 1.0), |c| (c.grid[0], c.grid[c.grid.len() - 1]));
    let frame = Frame::new(x, range(&refs, true));
    let mut out = String::new();
    open(&mut out, &frame, title, "cumulative dose", "outcome probability");
    for (i, c) in curves.iter().enumerate() {
        draw_curve(&mut out, &frame, c, PALETTE[i % PALETTE.len()]);
    }
    rug(&mut out, &frame, observed_doses);
    legend(
        &mut out,
        &curves.iter().map(|c| c.moderator.clone()).collect::<Vec<_>>(),
    );
    out.push_str("</svg>\n");
    out
}

/// Difference curve with a reference line at zero.
pub fn difference_svg(title: &str, curve: &SummaryCurve, observed_doses: &[f64]) -> String {
    let (lo, hi) = range(&[curve], true);
    let frame = Frame::new(
        (curve.grid[0], curve.grid[curve.grid.len() - 1]),
        (lo.min(0.0), hi.max(0.0)),
    );
    let mut out = String::new();
    open(&mut out, &frame, title, "cumulative dose", "difference in probability");
    let y = frame.py(0.0);
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-dasharray="2,2"/>"#,
        frame.px(frame.x0),
        frame.px(frame.x1)
    );
    draw_curve(&mut out, &frame, curve, PALETTE[0]);
    rug(&mut out, &frame, observed_doses);
    out.push_str("</svg>\n");
    out
}

/// Histogram of replicated statistics with the observed value marked.
pub fn ppc_histogram_svg(entry: &PpcEntry, n_bins: usize) -> String {
    let n_bins = n_bins.max(1);
    let rep = &entry.replicated;
    let lo = rep.iter().copied().fold(entry.observed, f64::min);
    let hi = rep.iter().copied().fold(entry.observed, f64::max);
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; n_bins];
    for &v in rep {
        let b = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1);
    let frame = Frame::new((lo, lo + width * n_bins as f64), (0.0, max_count as f64));
    let mut out = String::new();
    let title = format!("{} (p = {:.3})", entry.statistic, entry.p_value);
    open(&mut out, &frame, &title, &entry.statistic, "replications");
    for (b, &c) in counts.iter().enumerate() {
        let x0 = frame.px(lo + width * b as f64);
        let x1 = frame.px(lo + width * (b + 1) as f64);
        let y = frame.py(c as f64);
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="lightgrey" stroke="grey"/>"#,
            (x1 - x0).max(0.0),
            frame.py(0.0) - y
        );
    }
    let x = frame.px(entry.observed);
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{TOP:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/>"#,
        frame.py(0.0),
        PALETTE[1]
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> SummaryCurve {
        SummaryCurve {
            drug: "a".into(),
            moderator: "M=0".into(),
            grid: vec![0.0, 1.0, 2.0],
            values: vec![vec![0.1, 0.2, 0.3], vec![0.1, 0.25, 0.35]],
            mean: vec![0.1, 0.225, 0.325],
            lower: vec![0.1, 0.2, 0.3],
            upper: vec![0.1, 0.25, 0.35],
        }
    }

    #[test]
    fn curve_svg_has_layers() {
        let svg = curves_svg("a & b", &[curve()], &[0.5, 1.5]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &amp; b"));
        assert_eq!(svg.matches("stroke-dasharray=\"6,4\"").count(), 2);
        assert_eq!(svg.matches("stroke=\"grey\" stroke-opacity").count(), 2);
        assert!(svg.contains("stroke-opacity=\"0.4\""));
    }

    #[test]
    fn histogram_counts_all_replications() {
        let entry = PpcEntry {
            statistic: "s".into(),
            observed: 0.5,
            replicated_mean: 0.5,
            replicated_lower: 0.0,
            replicated_upper: 1.0,
            p_value: 0.5,
            warning: None,
            replicated: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        };
        let svg = ppc_histogram_svg(&entry, 4);
        assert_eq!(svg.matches("fill=\"lightgrey\"").count(), 4);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn difference_svg_includes_zero() {
        let svg = difference_svg("d", &curve(), &[]);
        assert!(svg.contains("stroke-dasharray=\"2,2\""));
        assert!(!svg.contains("NaN"));
    }
}
