//! Bare-bones SVG line plots. Coordinates are printed with fixed precision so
//! the files are byte-stable.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

pub struct Series<'a> {
    pub label: String,
    pub points: &'a [(f64, f64)],
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Line plot over fixed axis ranges, with optional vertical markers.
pub fn line_plot(
    title: &str,
    x_range: (f64, f64),
    y_range: (f64, f64),
    series: &[Series<'_>],
    markers: &[f64],
) -> String {
    let (x0, x1) = x_range;
    let (y0, mut y1) = y_range;
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0).max(f64::MIN_POSITIVE) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<polyline points="{m:.1},{t:.1} {m:.1},{b:.1} {r:.1},{b:.1}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    for (v, x, y, anchor) in [
        (x0, sx(x0), H - MARGIN + 16.0, "middle"),
        (x1, sx(x1), H - MARGIN + 16.0, "middle"),
    ] {
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{}</text>"#,
            tick(v)
        );
    }
    for v in [y0, y1] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            MARGIN - 4.0,
            sy(v) + 4.0,
            tick(v)
        );
    }
    for &m in markers {
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
            MARGIN,
            H - MARGIN,
            x = sx(m)
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        if series.len() > 1 {
            let y = MARGIN + 14.0 * k as f64;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{y:.1}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                W - MARGIN - 90.0,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_is_well_formed() {
        let pts = [(0.0, 0.0), (0.5, 1.0), (1.0, 0.5)];
        let svg = line_plot(
            "a < b",
            (0.0, 1.0),
            (0.0, 1.0),
            &[Series {
                label: "s".into(),
                points: &pts,
            }],
            &[0.3],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("50.00,350.00"));
        assert_eq!(svg.matches("<line").count(), 1);
    }
}
