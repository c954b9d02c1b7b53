//! Minimal SVG line charts for bands and series. No styling beyond what is
//! needed to read the figures.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// One chart: an optional shaded band, any number of lines, and a title.
#[derive(Debug, Default)]
pub struct Chart {
    pub title: String,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
    pub lines: Vec<(String, Vec<f64>)>,
    /// Index of a vertical marker (e.g. the last observed day).
    pub marker: Option<usize>,
}

impl Chart {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            ..Self::default()
        }
    }

    fn extent(&self) -> (usize, f64) {
        let mut n = 0;
        let mut max: f64 = 0.0;
        let mut see = |v: &[f64]| {
            n = n.max(v.len());
            max = v.iter().copied().filter(|x| x.is_finite()).fold(max, f64::max);
        };
        if let Some((lo, hi)) = &self.band {
            see(lo);
            see(hi);
        }
        for (_, l) in &self.lines {
            see(l);
        }
        (n, if max > 0.0 { max } else { 1.0 })
    }

    pub fn to_svg(&self) -> String {
        let (n, ymax) = self.extent();
        let span = (n.max(2) - 1) as f64;
        let x = |k: usize| MARGIN + k as f64 / span * (WIDTH - 2.0 * MARGIN);
        let y = |v: f64| HEIGHT - MARGIN - v / ymax * (HEIGHT - 2.0 * MARGIN);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<path d="M{MARGIN},{top} V{bottom} H{right}" stroke="black" fill="none"/>"#,
            top = MARGIN,
            bottom = HEIGHT - MARGIN,
            right = WIDTH - MARGIN
        );
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{}" font-family="sans-serif" font-size="10">{ymax:.0}</text>"#,
            MARGIN + 4.0
        );

        if let Some((lo, hi)) = &self.band {
            let mut d = String::new();
            for (k, v) in hi.iter().enumerate() {
                let _ = write!(d, "{}{:.2},{:.2} ", if k == 0 { 'M' } else { 'L' }, x(k), y(*v));
            }
            for (k, v) in lo.iter().enumerate().rev() {
                let _ = write!(d, "L{:.2},{:.2} ", x(k), y(*v));
            }
            let _ = writeln!(svg, r#"<path d="{}Z" fill="lightgray" stroke="none"/>"#, d);
        }

        let colors = ["black", "steelblue", "firebrick", "darkgreen"];
        for (idx, (name, values)) in self.lines.iter().enumerate() {
            let mut d = String::new();
            let mut pen_down = false;
            for (k, v) in values.iter().enumerate() {
                if !v.is_finite() {
                    pen_down = false;
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { 'L' } else { 'M' }, x(k), y(*v));
                pen_down = true;
            }
            let color = colors[idx % colors.len()];
            let _ = writeln!(
                svg,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"><title>{}</title></path>"#,
                escape(name)
            );
        }

        if let Some(k) = self.marker {
            let _ = writeln!(
                svg,
                r#"<line x1="{0:.2}" x2="{0:.2}" y1="{MARGIN}" y2="{1}" stroke="gray" stroke-dasharray="4 3"/>"#,
                x(k),
                HEIGHT - MARGIN
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
