//! Minimal deterministic SVG line plots. Output bytes depend only on the
//! input series, so identical data always renders to identical files.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    // fixed-precision coordinates keep the output stable across platforms
    format!("{v:.3}")
}

/// Renders labelled series as polylines with axis frame and legend.
pub fn emit_svg_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x0, mut x1) = (0.0, 1.0);
    let (mut y0, mut y1) = (0.0, 1.0);
    if !all.is_empty() {
        x0 = all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        x1 = all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        y0 = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        y1 = all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    ));
    // axis frame
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"black\" points=\"{},{} {},{} {},{}\"/>\n",
        fmt(MARGIN),
        fmt(MARGIN),
        fmt(MARGIN),
        fmt(HEIGHT - MARGIN),
        fmt(WIDTH - MARGIN),
        fmt(HEIGHT - MARGIN)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 16.0,
        xml_escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        xml_escape(y_label)
    ));
    // axis extremes
    for (x, y, text, anchor) in [
        (MARGIN, HEIGHT - MARGIN + 18.0, format!("{x0:.3}"), "middle"),
        (WIDTH - MARGIN, HEIGHT - MARGIN + 18.0, format!("{x1:.3}"), "middle"),
        (MARGIN - 6.0, HEIGHT - MARGIN, format!("{y0:.4}"), "end"),
        (MARGIN - 6.0, MARGIN + 4.0, format!("{y1:.4}"), "end"),
    ] {
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" \
             text-anchor=\"{anchor}\">{text}</text>\n",
            fmt(x),
            fmt(y)
        ));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            pts.join(" ")
        ));
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                fmt(sx(x)),
                fmt(sy(y))
            ));
        }
        let ly = MARGIN + 16.0 * i as f64;
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            fmt(WIDTH - MARGIN - 150.0),
            fmt(ly),
            fmt(WIDTH - MARGIN - 130.0),
            fmt(ly)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
            fmt(WIDTH - MARGIN - 124.0),
            fmt(ly + 4.0),
            xml_escape(&s.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Vec<Series> {
        vec![Series {
            label: "gp".into(),
            points: vec![(0.1, 2.0), (0.2, 1.5), (0.4, 1.0)],
        }]
    }

    #[test]
    fn output_is_deterministic() {
        let a = emit_svg_plot("t", "x", "y", &demo());
        let b = emit_svg_plot("t", "x", "y", &demo());
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.contains("polyline"));
    }

    #[test]
    fn degenerate_ranges_do_not_panic() {
        let flat = vec![Series {
            label: "c".into(),
            points: vec![(1.0, 3.0), (1.0, 3.0)],
        }];
        let svg = emit_svg_plot("t", "x", "y", &flat);
        assert!(svg.ends_with("</svg>\n"));
        let empty = emit_svg_plot("t", "x", "y", &[]);
        assert!(empty.contains("</svg>"));
    }

    #[test]
    fn labels_are_escaped() {
        let s = vec![Series {
            label: "a<b&c".into(),
            points: vec![(0.0, 0.0)],
        }];
        let svg = emit_svg_plot("t", "x", "y", &s);
        assert!(svg.contains("a&lt;b&amp;c"));
    }
}
