use std::fmt::Write;

/// One line in a panel.
#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// One set of axes.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 50.0;
const MARGIN_B: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * hi.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.5 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// Static line chart with panels side by side, a shared title and one
/// legend per panel.
pub fn render_line_chart(title: &str, panels: &[Panel]) -> String {
    let n = panels.len().max(1) as f64;
    let legend_rows = panels.iter().map(|p| p.lines.len()).max().unwrap_or(0) as f64;
    let cell_w = MARGIN_L + PANEL_W + MARGIN_R;
    let cell_h = MARGIN_T + PANEL_H + MARGIN_B + 16.0 * legend_rows;
    let (w, h) = (cell_w * n, cell_h + 30.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for (i, p) in panels.iter().enumerate() {
        let ox = i as f64 * cell_w + MARGIN_L;
        let oy = 30.0 + MARGIN_T;
        let (x0, x1) = range(p.lines.iter().flat_map(|l| l.x.iter().copied()));
        let (y0, y1) = range(p.lines.iter().flat_map(|l| l.y.iter().copied()));
        let px = |x: f64| ox + (x - x0) / (x1 - x0) * PANEL_W;
        let py = |y: f64| oy + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;

        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            ox + PANEL_W / 2.0,
            oy - 12.0,
            escape(&p.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                px(xv),
                oy + PANEL_H + 15.0,
                fmt_tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                ox - 5.0,
                py(yv) + 4.0,
                fmt_tick(yv)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{ox}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#dddddd"/>"##,
                ox + PANEL_W,
                py(yv),
                py(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            ox + PANEL_W / 2.0,
            oy + PANEL_H + 32.0,
            escape(&p.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text transform="translate({:.1},{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            ox - 55.0,
            oy + PANEL_H / 2.0,
            escape(&p.y_label)
        );
        for (j, l) in p.lines.iter().enumerate() {
            let color = COLORS[j % COLORS.len()];
            let pts: Vec<String> = l
                .x
                .iter()
                .zip(&l.y)
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = oy + PANEL_H + MARGIN_B + 16.0 * j as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{ox}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
                ox + 20.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}">{}</text>"#,
                ox + 26.0,
                ly + 4.0,
                escape(&l.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_one_polyline_per_line_and_escapes_text() {
        let panel = |t: &str| Panel {
            title: t.into(),
            x_label: "time (s)".into(),
            y_label: "width".into(),
            lines: (0..3)
                .map(|k| Line {
                    label: format!("{}%", 90 + k),
                    x: vec![0.0, 10.0, 20.0],
                    y: vec![1.0, 2.0 + k as f64, 3.0],
                })
                .collect(),
        };
        let svg = render_line_chart("a < b", &[panel("p1"), panel("p2")]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn flat_and_empty_series_do_not_produce_nan() {
        let p = Panel {
            title: "flat".into(),
            x_label: "t".into(),
            y_label: "w".into(),
            lines: vec![
                Line {
                    label: "zero".into(),
                    x: vec![0.0, 1.0],
                    y: vec![0.0, 0.0],
                },
                Line {
                    label: "none".into(),
                    x: vec![],
                    y: vec![],
                },
            ],
        };
        assert!(!render_line_chart("t", &[p]).contains("NaN"));
    }
}
