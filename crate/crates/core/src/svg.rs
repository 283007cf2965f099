//! Deterministic SVG rendering of layouts: one semi-transparent
//! class-colored rectangle per element, class label, page border.

use crate::layout::Layout;

/// Fixed per-class color from a small hash of the class index, as
/// `(r, g, b)`. Stable across runs so figures reproduce byte-identically.
pub fn class_color(class_id: usize) -> (u8, u8, u8) {
    // Golden-ratio hue stepping gives well-separated hues for small indices.
    let hue = (class_id as f64 * 0.618033988749895).fract() * 360.0;
    hsl_to_rgb(hue, 0.65, 0.55)
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    (
        ((r1 + m) * 255.0).round() as u8,
        ((g1 + m) * 255.0).round() as u8,
        ((b1 + m) * 255.0).round() as u8,
    )
}

/// Render one layout to an SVG document. Optional `class_names` label the
/// rectangles; otherwise the class index is printed.
pub fn render_svg(layout: &Layout, class_names: Option<&[String]>) -> String {
    let (pw, ph) = (layout.page.0 as f64, layout.page.1 as f64);
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        layout.page.0, layout.page.1, layout.page.0, layout.page.1
    ));
    out.push_str(&format!(
        "  <rect x=\"0.5\" y=\"0.5\" width=\"{}\" height=\"{}\" fill=\"white\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        pw - 1.0,
        ph - 1.0
    ));
    for e in &layout.elements {
        let (x0, y0, x1, y1) = e.corners();
        let (r, g, b) = class_color(e.class_id);
        let label = match class_names.and_then(|n| n.get(e.class_id)) {
            Some(name) => name.clone(),
            None => format!("class {}", e.class_id),
        };
        let px = x0 * pw;
        let py = y0 * ph;
        let w = (x1 - x0) * pw;
        let h = (y1 - y0) * ph;
        out.push_str(&format!(
            "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"rgb({},{},{})\" fill-opacity=\"0.45\" stroke=\"rgb({},{},{})\" stroke-width=\"1.5\"/>\n",
            px, py, w, h, r, g, b, r, g, b
        ));
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"{:.1}\" fill=\"rgb({},{},{})\">{}</text>\n",
            px + 3.0,
            py + 12.0,
            11.0,
            r / 2,
            g / 2,
            b / 2,
            label
        ));
    }
    out.push_str("</svg>\n");
    out
}
