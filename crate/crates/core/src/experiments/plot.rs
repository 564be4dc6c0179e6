//! Minimal SVG line and scatter plots for experiment outputs.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Line,
    Scatter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub kind: Kind,
    /// Plot log10 of both axes; non-positive points are dropped.
    pub log_axes: bool,
    /// Draw the y = x diagonal (for predicted-vs-measured).
    pub diagonal: bool,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str, kind: Kind) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            kind,
            log_axes: false,
            diagonal: false,
        }
    }

    pub fn render(&self, points: &[(f64, f64)]) -> String {
        let pts: Vec<(f64, f64)> = points
            .iter()
            .filter(|(x, y)| !self.log_axes || (*x > 0.0 && *y > 0.0))
            .map(|&(x, y)| {
                if self.log_axes {
                    (x.log10(), y.log10())
                } else {
                    (x, y)
                }
            })
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .collect();
        let (mut x0, mut x1) = bounds(pts.iter().map(|p| p.0));
        let (mut y0, mut y1) = bounds(pts.iter().map(|p| p.1));
        if self.diagonal {
            (x0, x1) = (x0.min(y0), x1.max(y1));
            (y0, y1) = (x0, x1);
        }
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            s,
            r#"<path d="M{left},{top} V{bottom} H{right}" fill="none" stroke="black"/>"#
        );
        let tick = |v: f64| {
            if self.log_axes {
                format!("1e{}", fmt_num(v))
            } else {
                fmt_num(v)
            }
        };
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                bottom + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                left - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 16.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        if self.diagonal {
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="grey" stroke-dasharray="4 4"/>"#,
                sx(x0),
                sy(x0),
                sx(x1),
                sy(x1)
            );
        }
        match self.kind {
            Kind::Line => {
                let path: Vec<String> = pts
                    .iter()
                    .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
                    path.join(" ")
                );
            }
            Kind::Scatter => {
                for &(x, y) in &pts {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="steelblue" fill-opacity="0.6"/>"#,
                        sx(x),
                        sy(y)
                    );
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.3}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_plot_has_one_polyline_with_every_point() {
        let svg = Plot::new("t", "x", "y", Kind::Line).render(&[(1.0, 2.0), (2.0, 1.0), (3.0, 4.0)]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 3);
    }

    #[test]
    fn log_scatter_drops_non_positive_points() {
        let mut plot = Plot::new("a < b", "m", "p", Kind::Scatter);
        plot.log_axes = true;
        plot.diagonal = true;
        let svg = plot.render(&[(1e-3, 2e-3), (0.0, 1.0), (1.0, 1.0)]);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn degenerate_input_still_renders() {
        let svg = Plot::new("t", "x", "y", Kind::Scatter).render(&[]);
        assert!(svg.contains("</svg>"));
        let one = Plot::new("t", "x", "y", Kind::Scatter).render(&[(2.0, 2.0)]);
        assert!(!one.contains("NaN"));
    }
}
