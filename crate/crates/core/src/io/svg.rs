//! Minimal SVG plotting: scatter plots, line plots and labeled heatmaps.
//! Enough to render reward-vs-intensity fits, speed curves, limb-sweep
//! lines, tangling scatters and attention heatmaps without a plotting
//! dependency.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 48.0;

const PALETTE: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub draw_line: bool,
    pub draw_markers: bool,
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Draw the y = x reference line (tangling scatters).
    pub identity_line: bool,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
            identity_line: false,
        }
    }

    pub fn line(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.into(), points, draw_line: true, draw_markers: false });
        self
    }

    pub fn scatter(mut self, label: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { label: label.into(), points, draw_line: false, draw_markers: true });
        self
    }

    pub fn with_identity_line(mut self) -> Self {
        self.identity_line = true;
        self
    }

    pub fn render(&self) -> String {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    x_min = x_min.min(x);
                    x_max = x_max.max(x);
                    y_min = y_min.min(y);
                    y_max = y_max.max(y);
                }
            }
        }
        if !x_min.is_finite() {
            x_min = 0.0;
            x_max = 1.0;
            y_min = 0.0;
            y_max = 1.0;
        }
        if self.identity_line {
            let lo = x_min.min(y_min);
            let hi = x_max.max(y_max);
            x_min = lo;
            y_min = lo;
            x_max = hi;
            y_max = hi;
        }
        if (x_max - x_min).abs() < 1e-12 {
            x_max = x_min + 1.0;
        }
        if (y_max - y_min).abs() < 1e-12 {
            y_max = y_min + 1.0;
        }
        // pad 5%
        let xp = 0.05 * (x_max - x_min);
        let yp = 0.05 * (y_max - y_min);
        let (x_min, x_max, y_min, y_max) = (x_min - xp, x_max + xp, y_min - yp, y_max + yp);

        let sx = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (W - MARGIN_L - MARGIN_R);
        let sy = |y: f64| H - MARGIN_B - (y - y_min) / (y_max - y_min) * (H - MARGIN_T - MARGIN_B);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
            W / 2.0,
            xml_escape(&self.title)
        );

        // axes
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            MARGIN_L,
            H - MARGIN_B,
            W - MARGIN_R,
            H - MARGIN_B
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            MARGIN_L, MARGIN_T, MARGIN_L, H - MARGIN_B
        );
        for i in 0..=4 {
            let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
            let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{}</text>"#,
                sx(fx),
                H - MARGIN_B + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="10">{}</text>"#,
                MARGIN_L - 6.0,
                sy(fy) + 3.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            W / 2.0,
            H - 10.0,
            xml_escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            xml_escape(&self.y_label)
        );

        if self.identity_line {
            let _ = writeln!(
                out,
                r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#888" stroke-dasharray="4 3"/>"##,
                sx(x_min.max(y_min)),
                sy(x_min.max(y_min)),
                sx(x_max.min(y_max)),
                sy(x_max.min(y_max))
            );
        }

        for (si, s) in self.series.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            if s.draw_line && s.points.len() > 1 {
                let mut path = String::new();
                for (i, &(x, y)) in s.points.iter().enumerate() {
                    let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, sx(x), sy(y));
                }
                let _ = writeln!(out, r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
            }
            if s.draw_markers {
                for &(x, y) in &s.points {
                    if x.is_finite() && y.is_finite() {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="0.6"/>"#,
                            sx(x),
                            sy(y)
                        );
                    }
                }
            }
            // legend
            let ly = MARGIN_T + 14.0 * si as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{:.1}" width="10" height="10" fill="{color}"/>"#,
                W - MARGIN_R - 150.0,
                ly
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
                W - MARGIN_R - 136.0,
                ly + 9.0,
                xml_escape(&s.label)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Row-labeled heatmap (attention maps). Values are mapped to a white-to-blue
/// ramp over `[0, max]`.
pub fn heatmap(title: &str, row_labels: &[&str], col_labels: &[&str], values: &[Vec<f64>]) -> String {
    let rows = values.len();
    let cols = values.first().map_or(0, |r| r.len());
    assert_eq!(rows, row_labels.len());
    assert!(values.iter().all(|r| r.len() == cols));
    let cell = 22.0;
    let left = 170.0;
    let top = 60.0;
    let width = left + cols as f64 * cell + 30.0;
    let height = top + rows as f64 * cell + 30.0;
    let max = values
        .iter()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-12);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        width / 2.0,
        xml_escape(title)
    );
    for (j, label) in col_labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="start" font-family="sans-serif" font-size="9" transform="rotate(-45 {:.1} {:.1})">{}</text>"#,
            left + j as f64 * cell + cell / 2.0,
            top - 6.0,
            left + j as f64 * cell + cell / 2.0,
            top - 6.0,
            xml_escape(label)
        );
    }
    for (i, label) in row_labels.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="9">{}</text>"#,
            left - 6.0,
            top + i as f64 * cell + cell / 2.0 + 3.0,
            xml_escape(label)
        );
        for (j, &v) in values[i].iter().enumerate() {
            let t = (v.abs() / max).clamp(0.0, 1.0);
            let shade = (255.0 - t * 205.0) as u8;
            let _ = writeln!(
                out,
                r##"<rect x="{:.1}" y="{:.1}" width="{cell:.1}" height="{cell:.1}" fill="rgb({shade},{shade},255)" stroke="#ddd"/>"##,
                left + j as f64 * cell,
                top + i as f64 * cell
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_wellformed_svg() {
        let svg = Plot::new("t", "x", "y")
            .line("a", vec![(0.0, 0.0), (1.0, 2.0)])
            .scatter("b", vec![(0.5, 1.0)])
            .with_identity_line()
            .render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<circle").count(), 1);

        let hm = heatmap("m", &["r0", "r1"], &["c0"], &[vec![0.3], vec![0.9]]);
        assert_eq!(hm.matches("<rect").count(), 3); // background + 2 cells
    }
}
