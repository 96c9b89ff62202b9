//! SVG scatter plots of 2-D latent points. Keys color by their Camelot
//! wheel position (fixtures/camelot_palette.txt, one hex color per wheel
//! slot); each key's centroid draws as a star. Output bytes are a pure
//! function of the input points.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use fifthspace::KeyLabel;

use crate::pipeline::PointRecord;
use crate::report::write_text;
use crate::CliError;

const PALETTE_FILE: &str = include_str!("../fixtures/camelot_palette.txt");

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 520.0;
const PLOT_LEFT: f64 = 60.0;
const PLOT_RIGHT: f64 = 540.0;
const PLOT_TOP: f64 = 30.0;
const PLOT_BOTTOM: f64 = 490.0;
const LEGEND_X: f64 = 560.0;

fn palette() -> &'static [String; 12] {
    static PALETTE: OnceLock<[String; 12]> = OnceLock::new();
    PALETTE.get_or_init(|| {
        let colors: Vec<String> = PALETTE_FILE
            .lines()
            .map(|l| l.trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
        assert_eq!(colors.len(), 12, "palette needs one color per wheel slot");
        for c in &colors {
            assert!(
                c.len() == 7
                    && c.starts_with('#')
                    && c[1..].bytes().all(|b| b.is_ascii_hexdigit()),
                "bad palette color {c:?}"
            );
        }
        colors.try_into().unwrap()
    })
}

/// The wheel color for a key: slot = Camelot number, shared by both modes.
pub fn key_color(key: KeyLabel) -> &'static str {
    &palette()[key.camelot().0 as usize - 1]
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn n(v: f64) -> String {
    format!("{v:.2}")
}

/// Ten-vertex star polygon centered on (cx, cy).
fn star_points(cx: f64, cy: f64) -> String {
    let mut pts = Vec::with_capacity(10);
    for i in 0..10 {
        let r = if i % 2 == 0 { 8.0 } else { 3.4 };
        let a = std::f64::consts::PI * (i as f64 / 5.0) - std::f64::consts::FRAC_PI_2;
        pts.push(format!("{},{}", n(cx + r * a.cos()), n(cy + r * a.sin())));
    }
    pts.join(" ")
}

/// Renders the scatter. Valid SVG 1.1 comes back even for zero points
/// (frame, title, and empty legend).
pub fn scatter_svg(title: &str, points: &[PointRecord]) -> String {
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.xy.0);
        x1 = x1.max(p.xy.0);
        y0 = y0.min(p.xy.1);
        y1 = y1.max(p.xy.1);
    }
    if !(x0.is_finite() && x1.is_finite() && x1 > x0) {
        (x0, x1) = (-1.0, 1.0);
    }
    if !(y0.is_finite() && y1.is_finite() && y1 > y0) {
        (y0, y1) = (-1.0, 1.0);
    }
    let pad_x = 0.05 * (x1 - x0);
    let pad_y = 0.05 * (y1 - y0);
    (x0, x1) = (x0 - pad_x, x1 + pad_x);
    (y0, y1) = (y0 - pad_y, y1 + pad_y);
    let sx = |v: f64| PLOT_LEFT + (v - x0) / (x1 - x0) * (PLOT_RIGHT - PLOT_LEFT);
    let sy = |v: f64| PLOT_BOTTOM - (v - y0) / (y1 - y0) * (PLOT_BOTTOM - PLOT_TOP);

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#FFFFFF\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
        n((PLOT_LEFT + PLOT_RIGHT) / 2.0),
        esc(title)
    );
    let _ = writeln!(
        svg,
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444444\"/>",
        n(PLOT_LEFT),
        n(PLOT_TOP),
        n(PLOT_RIGHT - PLOT_LEFT),
        n(PLOT_BOTTOM - PLOT_TOP)
    );

    let mut groups: BTreeMap<KeyLabel, Vec<(f64, f64)>> = BTreeMap::new();
    for p in points {
        groups.entry(p.key).or_default().push(p.xy);
    }

    for p in points {
        let _ = writeln!(
            svg,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>",
            n(sx(p.xy.0)),
            n(sy(p.xy.1)),
            key_color(p.key)
        );
    }
    for (key, pts) in &groups {
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let _ = writeln!(
            svg,
            "<polygon points=\"{}\" fill=\"{}\" stroke=\"#222222\" stroke-width=\"0.8\"/>",
            star_points(sx(cx), sy(cy)),
            key_color(*key)
        );
    }

    // Legend entries sort around the wheel, not by pitch class.
    let mut legend: Vec<KeyLabel> = groups.keys().copied().collect();
    legend.sort_by_key(|k| k.camelot().0);
    for (i, key) in legend.iter().enumerate() {
        let y = 40.0 + 22.0 * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\" stroke=\"#222222\" stroke-width=\"0.5\"/>",
            n(LEGEND_X),
            n(y),
            key_color(*key)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            n(LEGEND_X + 18.0),
            n(y + 10.0),
            esc(&format!("{} {}", key.camelot_label(), key.name()))
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Renders and writes one piece's scatter.
pub fn render_scatter(path: &Path, title: &str, points: &[PointRecord]) -> Result<(), CliError> {
    write_text(path, &scatter_svg(title, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: KeyLabel, x: f64, y: f64) -> PointRecord {
        PointRecord {
            piece_id: "p".into(),
            transposition: 0,
            segment_index: 0,
            key,
            xy: (x, y),
        }
    }

    #[test]
    fn palette_slots_are_wheel_positions() {
        // B major is slot 1, E major slot 12; relative keys share a slot
        // number only when their tonics coincide on the wheel.
        assert_eq!(key_color(KeyLabel::major(11)), "#DF3A3A");
        assert_eq!(key_color(KeyLabel::minor(11)), "#DF3A3A");
        assert_eq!(key_color(KeyLabel::major(4)), "#DF3A8C");
    }

    #[test]
    fn empty_plot_is_still_an_svg_document() {
        let svg = scatter_svg("empty", &[]);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.contains("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(!svg.contains("circle"));
    }

    #[test]
    fn output_is_deterministic_and_escaped() {
        let pts = vec![
            record(KeyLabel::major(0), 0.0, 0.0),
            record(KeyLabel::minor(9), 2.0, 1.0),
        ];
        let a = scatter_svg("piece <\"one\" & two>", &pts);
        let b = scatter_svg("piece <\"one\" & two>", &pts);
        assert_eq!(a, b);
        assert!(a.contains("piece &lt;&quot;one&quot; &amp; two&gt;"));
        // two points, two centroid stars, two legend swatches
        assert_eq!(a.matches("<circle").count(), 2);
        assert_eq!(a.matches("<polygon").count(), 2);
        assert_eq!(a.matches("<rect").count(), 2 + 2);
    }

    #[test]
    fn coordinates_span_the_plot_frame() {
        let pts = vec![
            record(KeyLabel::major(0), -3.0, -1.0),
            record(KeyLabel::major(7), 3.0, 1.0),
        ];
        let svg = scatter_svg("span", &pts);
        // 5% pad: x - -3.3..3.3 maps -3.0 to 60 + (0.3/6.6)*480 = 81.82
        assert!(svg.contains("cx=\"81.82\""));
        assert!(svg.contains("cy=\"469.09\""));
    }
}
