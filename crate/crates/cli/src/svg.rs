//! Standalone SVG scatter plot with the Pareto front drawn as a polyline.

use std::fmt::Write;

use imlp_core::stats::TradeoffPoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

/// Front vertices for the polyline: sorted by energy, one per energy value.
pub fn polyline_vertices(front: &[TradeoffPoint]) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = front.iter().map(|p| (p.energy, p.performance)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    v.dedup_by(|b, a| a.0 == b.0);
    v
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Energy on x, performance on y. Every input point becomes one `<circle>`.
pub fn render(points: &[TradeoffPoint], front: &[TradeoffPoint]) -> String {
    let (x0, x1) = range(points.iter().map(|p| p.energy));
    let (y0, y1) = range(points.iter().map(|p| p.performance));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, bottom, right, top) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        s,
        r#"<polyline class="axes" points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">energy (J)  [{x0:.4e}, {x1:.4e}]</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 15 {})">performance  [{y0:.4}, {y1:.4}]</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let vertices: Vec<String> = polyline_vertices(front)
        .iter()
        .map(|&(x, y)| format!("{:.3},{:.3}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline class="front" points="{}" fill="none" stroke="crimson" stroke-width="2"/>"#,
        vertices.join(" ")
    );
    for p in points {
        let on_front = front.contains(p);
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{:.3}" cy="{:.3}" r="4" fill="{}"><title>{} (E={}, P={})</title></circle>"#,
            sx(p.energy),
            sy(p.performance),
            if on_front { "crimson" } else { "steelblue" },
            escape(&p.label),
            p.energy,
            p.performance
        );
    }
    s.push_str("</svg>\n");
    s
}
