use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#000000", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Static SVG line chart; series values are plotted against `x = 1, 2, ...`.
pub fn line_chart_svg(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let len = series
        .iter()
        .map(|(_, v)| v.len())
        .max()
        .unwrap_or(0)
        .max(2);
    let finite = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite());
    let y_max = finite.fold(0.0f64, f64::max).max(1e-12);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |i: usize| MARGIN + plot_w * i as f64 / (len - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - plot_h * v / y_max;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"##
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"##,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<polyline fill="none" stroke="#888" points="{MARGIN},{MARGIN} {MARGIN},{b} {r},{b}"/>"##,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"##,
        MARGIN - 4.0,
        MARGIN + 4.0,
        y_max
    );
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" text-anchor="middle">{len}</text>"##,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0
    );
    for (si, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"##,
            points.join(" ")
        );
        let ly = MARGIN + 16.0 * si as f64;
        let _ = writeln!(
            out,
            r##"<text x="{}" y="{ly}" fill="{color}">{}</text>"##,
            WIDTH - MARGIN - 120.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_series() {
        let svg = line_chart_svg(
            "a < b",
            &[
                ("x".into(), vec![0.0, 0.5, 1.0]),
                ("y&z".into(), vec![0.2, 0.4]),
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("stroke-width").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("y&amp;z"));
    }
}
