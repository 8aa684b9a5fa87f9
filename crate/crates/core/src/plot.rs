//! Minimal SVG scatter-plot emitter for impact-point figures: fixed
//! 800x600 viewport, automatic axis scaling, dispersion-ellipse overlays.

use std::io::Write;

use crate::sde::Ellipse;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 25.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// One scatter series: labelled points with an optional 1-sigma ellipse.
pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a [(f64, f64)],
    pub ellipse: Option<&'a Ellipse>,
}

struct Axis {
    min: f64,
    max: f64,
}

impl Axis {
    fn include(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    fn pad(&mut self) {
        let span = self.max - self.min;
        let pad = if span > 0.0 { 0.08 * span } else { 1.0 };
        self.min -= pad;
        self.max += pad;
    }
}

/// Round-number tick positions covering [min, max].
fn ticks(min: f64, max: f64) -> Vec<f64> {
    let span = max - min;
    let raw = span / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 7.0)
        .unwrap_or(mag * 10.0);
    let mut t = (min / step).ceil() * step;
    let mut out = Vec::new();
    while t <= max + 1e-9 * span {
        out.push(t);
        t += step;
    }
    out
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(0.01..1000.0).contains(&a) {
        format!("{v:.3e}")
    } else if a >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write a scatter figure of impact points in the ground plane.
///
/// Each series point becomes one `<circle class="marker">` element, so
/// the marker count of the emitted document equals the total number of
/// points across series.
pub fn write_scatter_svg(
    w: &mut impl Write,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> std::io::Result<()> {
    let mut ax = Axis {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    let mut ay = Axis {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
    };
    for s in series {
        for &(x, y) in s.points {
            ax.include(x);
            ay.include(y);
        }
        if let Some(e) = s.ellipse {
            let r = e.semi_major.max(e.semi_minor);
            ax.include(e.cx - r);
            ax.include(e.cx + r);
            ay.include(e.cy - r);
            ay.include(e.cy + r);
        }
    }
    if !ax.min.is_finite() {
        ax = Axis { min: 0.0, max: 1.0 };
        ay = Axis { min: 0.0, max: 1.0 };
    }
    ax.pad();
    ay.pad();
    let px = |x: f64| {
        MARGIN_LEFT + (x - ax.min) / (ax.max - ax.min) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    };
    // y grows upward on the figure
    let py = |y: f64| {
        HEIGHT - MARGIN_BOTTOM
            - (y - ay.min) / (ay.max - ay.min) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    };

    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )?;
    writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(
        w,
        r#"<text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )?;
    // axes frame
    writeln!(
        w,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    )?;
    for t in ticks(ax.min, ax.max) {
        let x = px(t);
        writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
            HEIGHT - MARGIN_BOTTOM,
            HEIGHT - MARGIN_BOTTOM + 5.0
        )?;
        writeln!(
            w,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
            HEIGHT - MARGIN_BOTTOM + 18.0,
            fmt(t)
        )?;
    }
    for t in ticks(ay.min, ay.max) {
        let y = py(t);
        writeln!(
            w,
            r#"<line x1="{}" y1="{y:.2}" x2="{MARGIN_LEFT}" y2="{y:.2}" stroke="black"/>"#,
            MARGIN_LEFT - 5.0
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{}</text>"#,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            fmt(t)
        )?;
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">{}</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    )?;
    writeln!(
        w,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">{}</text>"#,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        escape(y_label)
    )?;

    for s in series {
        for &(x, y) in s.points {
            writeln!(
                w,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.6"/>"#,
                px(x),
                py(y),
                s.color
            )?;
        }
        if let Some(e) = s.ellipse {
            // pixel scale differs per axis, so draw the rotated ellipse as
            // a sampled polygon in data space
            let mut d = String::new();
            let steps = 120;
            for k in 0..=steps {
                let t = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
                let (ct, st) = (t.cos(), t.sin());
                let (ca, sa) = (e.angle.cos(), e.angle.sin());
                let x = e.cx + e.semi_major * ct * ca - e.semi_minor * st * sa;
                let y = e.cy + e.semi_major * ct * sa + e.semi_minor * st * ca;
                d.push_str(if k == 0 { "M" } else { "L" });
                d.push_str(&format!("{:.2} {:.2}", px(x), py(y)));
            }
            d.push('Z');
            writeln!(
                w,
                r#"<path class="ellipse" d="{d}" fill="none" stroke="{}" stroke-width="2"/>"#,
                s.color
            )?;
        }
    }
    // legend
    for (i, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + 18.0 + 18.0 * i as f64;
        let x = WIDTH - MARGIN_RIGHT - 160.0;
        writeln!(
            w,
            r#"<circle cx="{x}" cy="{y}" r="4" fill="{}"/>"#,
            s.color
        )?;
        writeln!(
            w,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            x + 10.0,
            y + 4.0,
            escape(s.label)
        )?;
    }
    writeln!(w, "</svg>")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ellipse() -> Ellipse {
        Ellipse {
            cx: 10.0,
            cy: -5.0,
            semi_major: 4.0,
            semi_minor: 2.0,
            angle: 0.4,
        }
    }

    fn render(points: &[(f64, f64)], ellipse: Option<&Ellipse>) -> String {
        let mut buf = Vec::new();
        write_scatter_svg(
            &mut buf,
            "impacts",
            "x (ft)",
            "y (ft)",
            &[Series {
                label: "mc",
                color: "#1f77b4",
                points,
                ellipse,
            }],
        )
        .unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn marker_count_matches_points() {
        let pts: Vec<(f64, f64)> = (0..37).map(|i| (i as f64, (i * i) as f64)).collect();
        let svg = render(&pts, None);
        assert_eq!(svg.matches(r#"class="marker""#).count(), 37);
    }

    #[test]
    fn ellipse_overlay_present() {
        let e = sample_ellipse();
        let svg = render(&[(10.0, -5.0)], Some(&e));
        assert_eq!(svg.matches(r#"class="ellipse""#).count(), 1);
    }

    #[test]
    fn fixed_viewport_dimensions() {
        let svg = render(&[(0.0, 0.0), (1.0, 1.0)], None);
        assert!(svg.contains(r#"width="800" height="600""#));
    }

    #[test]
    fn balanced_tags_and_escaping() {
        let mut buf = Vec::new();
        write_scatter_svg(
            &mut buf,
            "a < b & c > d",
            "x",
            "y",
            &[Series {
                label: "s<1>",
                color: "red",
                points: &[(0.0, 0.0)],
                ellipse: None,
            }],
        )
        .unwrap();
        let svg = String::from_utf8(buf).unwrap();
        assert!(svg.contains("a &lt; b &amp; c &gt; d"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<svg").count(), 1);
    }

    #[test]
    fn empty_series_still_valid() {
        let svg = render(&[], None);
        assert!(svg.contains("<svg"));
        assert_eq!(svg.matches(r#"class="marker""#).count(), 0);
    }
}
