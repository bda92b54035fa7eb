//! Minimal self-contained SVG plots.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub points: Vec<(f64, f64)>,
    /// Draw markers (data) rather than a line (model).
    pub markers: bool,
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) =
        (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    // also covers NaN and empty input
    if x1.partial_cmp(&x0) != Some(std::cmp::Ordering::Greater) {
        x1 = x0 + 1.0;
    }
    if y1.partial_cmp(&y0) != Some(std::cmp::Ordering::Greater) {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1 * 1.05)
}

/// Scatter/line plot with axes, ticks and a legend.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (x0, x1, y0, y1) = bounds(series);
    let px = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

    let _ = writeln!(
        out,
        r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    for k in 0..=5 {
        let x = x0 + (x1 - x0) * k as f64 / 5.0;
        let y = y0 + (y1 - y0) * k as f64 / 5.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(x),
            H - MB + 16.0,
            tick(x)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ML - 6.0,
            py(y) + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (ML + W - MR) / 2.0,
        H - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        escape(ylabel)
    );
    for (k, s) in series.iter().enumerate() {
        if s.markers {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{}"/>"#,
                    px(x),
                    py(y),
                    s.color
                );
            }
        } else {
            let path: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                path.join(" "),
                s.color
            );
        }
        let ly = MT + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - MR - 150.0,
            ly - 9.0,
            s.color,
            W - MR - 135.0,
            ly,
            escape(s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heat map of `(x, y, value)` cells on an integer grid; colour scales
/// with `√(value / max)`.
pub fn heat_map(title: &str, xlabel: &str, ylabel: &str, cells: &[(u64, u64, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let nx = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let ny = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    let vmax = cells.iter().map(|c| c.2).fold(0.0, f64::max);
    let cw = (W - ML - MR) / nx as f64;
    let ch = (H - MT - MB) / ny as f64;
    for &(x, y, v) in cells {
        if v <= 0.0 || vmax <= 0.0 {
            continue;
        }
        let t = (v / vmax).sqrt();
        let shade = (255.0 * (1.0 - t)).round() as u8;
        let _ = writeln!(
            out,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb(255,{shade},{shade})"/>"#,
            ML + x as f64 * cw,
            H - MB - (y + 1) as f64 * ch,
            cw,
            ch
        );
    }
    let _ = writeln!(
        out,
        r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - ML - MR,
        H - MT - MB
    );
    for k in 0..=4 {
        let xv = (nx - 1) as f64 * k as f64 / 4.0;
        let yv = (ny - 1) as f64 * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ML + (xv + 0.5) * cw,
            H - MB + 16.0,
            xv.round()
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            ML - 6.0,
            H - MB - (yv + 0.5) * ch + 4.0,
            yv.round()
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (ML + W - MR) / 2.0,
        H - 14.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (MT + H - MB) / 2.0,
        (MT + H - MB) / 2.0,
        escape(ylabel)
    );
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{:.2}", v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_are_well_formed() {
        let s = Series {
            name: "a<b",
            color: "black",
            points: vec![(0.0, 1.0), (1.0, 2.0)],
            markers: true,
        };
        let svg = line_plot("t", "x", "y", &[s]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a&lt;b"));
        let hm = heat_map("t", "p", "q", &[(1, 0, 1.0), (3, 2, 0.5)]);
        assert_eq!(hm.matches("<rect").count(), 4);
    }
}
