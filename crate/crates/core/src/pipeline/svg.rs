//! Static SVG rendering of a queueing diagram: actual arrivals (solid),
//! counterfactual demand (dashed) and counterfactual arrivals (dotted), with
//! the excess-delay and airborne-increase areas shaded.

use std::fmt::Write;

use crate::queueing::QueueingDiagram;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 460.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;

struct Frame {
    quarters: usize,
    max_count: u32,
}

impl Frame {
    fn x(&self, q: usize) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * q as f64 / self.quarters.max(1) as f64
    }

    fn y(&self, count: u32) -> f64 {
        HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * count as f64 / self.max_count.max(1) as f64
    }
}

/// Points of a cumulative step curve holding `c[q]` over quarter `q`,
/// starting from zero at the left edge.
fn step_points(f: &Frame, c: &[u32]) -> Vec<(f64, f64)> {
    let mut pts = vec![(f.x(0), f.y(0))];
    for (q, &v) in c.iter().enumerate() {
        pts.push((f.x(q), f.y(v)));
        pts.push((f.x(q + 1), f.y(v)));
    }
    pts
}

fn path_data(pts: &[(f64, f64)]) -> String {
    let mut d = String::new();
    for (i, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{x:.2},{y:.2}", if i == 0 { "M" } else { " L" });
    }
    d
}

/// Closed region between an upper and a lower step curve.
fn band(f: &Frame, upper: &[u32], lower: &[u32]) -> String {
    let mut pts = step_points(f, upper);
    pts.extend(step_points(f, lower).into_iter().rev());
    path_data(&pts) + " Z"
}

fn nice_step(span: f64, target: usize) -> usize {
    let raw = (span / target as f64).max(1.0);
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    step as usize
}

pub fn render_diagram_svg(d: &QueueingDiagram, title: &str) -> String {
    let n = d.len();
    let max_count = d.actual.iter().chain(&d.model_planned).chain(&d.model_actual).copied().max().unwrap_or(0);
    let f = Frame { quarters: n.max(1), max_count: max_count.max(1) };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));

    let (x0, x1, y0, y1) = (f.x(0), f.x(f.quarters), f.y(0), f.y(f.max_count));
    let step_x = nice_step(f.quarters as f64, 10);
    for q in (0..=f.quarters).step_by(step_x) {
        let x = f.x(q);
        let _ = writeln!(s, r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##, y0 + 4.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            d.first_quarter.0 + q as i64
        );
    }
    let step_y = nice_step(f.max_count as f64, 8);
    for c in (0..=f.max_count as usize).step_by(step_y) {
        let y = f.y(c as u32);
        let _ = writeln!(s, r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#000"/>"##, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{c}</text>"#, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r##"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" fill="none" stroke="#000"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">quarter-hour index</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">cumulative flights</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    if n > 0 {
        let _ = writeln!(
            s,
            r##"<path class="excess" d="{}" fill="#2ca02c" fill-opacity="0.35" stroke="none"/>"##,
            band(&f, &d.model_actual, &d.actual)
        );
        let _ = writeln!(
            s,
            r##"<path class="airborne" d="{}" fill="#d62728" fill-opacity="0.3" stroke="none"/>"##,
            band(&f, &d.model_planned, &d.model_actual)
        );
        let curves = [
            ("actual", &d.actual, "#1f77b4", ""),
            ("model-planned", &d.model_planned, "#ff7f0e", r#" stroke-dasharray="8 4""#),
            ("model-actual", &d.model_actual, "#2ca02c", r#" stroke-dasharray="2 3""#),
        ];
        for (class, c, colour, dash) in curves {
            let _ = writeln!(
                s,
                r#"<path class="{class}" d="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
                path_data(&step_points(&f, c))
            );
        }
    }

    let legend = [
        ("A actual", "#1f77b4", ""),
        ("P' model planned", "#ff7f0e", r#" stroke-dasharray="8 4""#),
        ("A' model actual", "#2ca02c", r#" stroke-dasharray="2 3""#),
    ];
    for (i, (label, colour, dash)) in legend.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{colour}" stroke-width="2"{dash}/>"#,
            x0 + 12.0,
            x0 + 42.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{label}</text>"#, x0 + 48.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flightdata::QuarterIndex;

    fn diagram(actual: Vec<u32>, planned: Vec<u32>, model: Vec<u32>) -> QueueingDiagram {
        QueueingDiagram {
            airport: "EWR".parse().unwrap(),
            first_quarter: QuarterIndex(40),
            capacity: vec![2.0; actual.len()],
            actual,
            model_planned: planned,
            model_actual: model,
            drain_quarters: 0,
            fallback_quarters: 0,
        }
    }

    #[test]
    fn empty_diagram_has_axes_only() {
        let svg = render_diagram_svg(&diagram(vec![], vec![], vec![]), "empty");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("quarter-hour index"));
        assert!(!svg.contains("class=\"actual\""));
    }

    #[test]
    fn three_flight_example_draws_three_curves_and_two_areas() {
        let d = diagram(vec![0, 2, 3], vec![3, 3, 3], vec![2, 3, 3]);
        let svg = render_diagram_svg(&d, "EWR <test>");
        for class in ["actual", "model-planned", "model-actual", "excess", "airborne"] {
            assert_eq!(svg.matches(&format!("class=\"{class}\"")).count(), 1, "{class}");
        }
        assert!(svg.contains("EWR &lt;test&gt;"));
        assert_eq!(svg, render_diagram_svg(&d, "EWR <test>"));
    }
}
