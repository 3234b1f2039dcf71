//! Minimal self-contained SVG line charts: evolution curves with a shaded
//! ±1 std band per series. Inline attributes only, no external assets.

/// One plotted curve.
pub struct Series {
    pub label: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 48.0;
const MARGIN_B: f64 = 58.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt(v: f64) -> String {
    // fixed decimals keep the text deterministic and compact
    format!("{v:.4}")
        .trim_end_matches('0')
        .trim_end_matches('.')
        .to_string()
}

/// Renders an accuracy-evolution chart. Stages are 1-based task indices;
/// the y range adapts to the data and stays within [0, 1].
pub fn line_chart(title: &str, series: &[Series]) -> String {
    let stages = series.iter().map(|s| s.mean.len()).max().unwrap_or(0);
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for (m, d) in s.mean.iter().zip(&s.std) {
            lo = lo.min(m - d);
            hi = hi.max(m + d);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    let pad = ((hi - lo) * 0.08).max(0.01);
    let lo = (lo - pad).max(0.0);
    let hi = (hi + pad).min(1.0);
    let span = (hi - lo).max(1e-9);

    let x = |stage: usize| -> f64 {
        if stages <= 1 {
            MARGIN_L + plot_w / 2.0
        } else {
            MARGIN_L + plot_w * (stage as f64 - 1.0) / (stages as f64 - 1.0)
        }
    };
    let y = |v: f64| -> f64 { MARGIN_T + plot_h * (1.0 - (v - lo) / span) };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-size=\"17\" text-anchor=\"middle\" fill=\"#222222\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    ));

    // horizontal grid + y tick labels
    for i in 0..=4 {
        let v = lo + span * i as f64 / 4.0;
        let yy = y(v);
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{yy:.1}\" x2=\"{:.1}\" y2=\"{yy:.1}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            WIDTH - MARGIN_R
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"end\" \
             fill=\"#444444\">{}</text>\n",
            MARGIN_L - 8.0,
            yy + 4.0,
            fmt(v)
        ));
    }
    // x ticks: one per stage
    for stage in 1..=stages {
        let xx = x(stage);
        svg.push_str(&format!(
            "<line x1=\"{xx:.1}\" y1=\"{:.1}\" x2=\"{xx:.1}\" y2=\"{:.1}\" \
             stroke=\"#bbbbbb\" stroke-width=\"1\"/>\n",
            HEIGHT - MARGIN_B,
            HEIGHT - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{xx:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" \
             fill=\"#444444\">{stage}</text>\n",
            HEIGHT - MARGIN_B + 20.0
        ));
    }
    // axes
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" \
         stroke=\"#333333\" stroke-width=\"1.5\"/>\n",
        HEIGHT - MARGIN_B
    ));
    svg.push_str(&format!(
        "<line x1=\"{MARGIN_L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" \
         stroke=\"#333333\" stroke-width=\"1.5\"/>\n",
        HEIGHT - MARGIN_B,
        WIDTH - MARGIN_R,
        HEIGHT - MARGIN_B
    ));
    // axis titles
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" \
         fill=\"#222222\">tasks learned</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - 14.0
    ));
    svg.push_str(&format!(
        "<text x=\"20\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" \
         fill=\"#222222\" transform=\"rotate(-90 20 {:.1})\">average accuracy</text>\n",
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    ));

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let n = s.mean.len();
        if n == 0 {
            continue;
        }
        // ±1 std band: upper edge forward, lower edge backward
        let mut band = String::from("M");
        for (i, (m, d)) in s.mean.iter().zip(&s.std).enumerate() {
            band.push_str(&format!(" {:.1},{:.1}", x(i + 1), y(m + d)));
        }
        for (i, (m, d)) in s.mean.iter().zip(&s.std).enumerate().rev() {
            band.push_str(&format!(" L {:.1},{:.1}", x(i + 1), y(m - d)));
        }
        band.push_str(" Z");
        svg.push_str(&format!(
            "<path d=\"{band}\" fill=\"{color}\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
        ));
        // mean line + markers
        let pts: Vec<String> = s
            .mean
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{:.1},{:.1}", x(i + 1), y(*m)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        for (i, m) in s.mean.iter().enumerate() {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                x(i + 1),
                y(*m)
            ));
        }
        // legend entry
        let ly = MARGIN_T + 16.0 + 20.0 * si as f64;
        svg.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"14\" height=\"14\" fill=\"{color}\"/>\n",
            MARGIN_L + 12.0,
            ly - 11.0
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{ly:.1}\" font-size=\"13\" fill=\"#222222\">{}</text>\n",
            MARGIN_L + 32.0,
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_series() -> Vec<Series> {
        vec![
            Series {
                label: "rpc".into(),
                mean: vec![0.99, 0.97, 0.95],
                std: vec![0.002, 0.01, 0.012],
            },
            Series {
                label: "expanding".into(),
                mean: vec![0.99, 0.96, 0.93],
                std: vec![0.002, 0.012, 0.02],
            },
        ]
    }

    #[test]
    fn chart_is_self_contained_svg() {
        let svg = line_chart("demo", &demo_series());
        assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(
            !svg.contains("http://") || svg.matches("http://").count() == 1,
            "only the xmlns URI is allowed"
        );
        assert!(!svg.contains("href"), "no external references");
        assert!(!svg.contains("<style"), "inline attributes only");
    }

    #[test]
    fn chart_labels_every_series() {
        let svg = line_chart("demo", &demo_series());
        assert!(svg.contains(">rpc</text>"));
        assert!(svg.contains(">expanding</text>"));
        // two mean polylines and two bands
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("fill-opacity").count(), 2);
    }

    #[test]
    fn chart_generation_is_deterministic() {
        let a = line_chart("demo", &demo_series());
        let b = line_chart("demo", &demo_series());
        assert_eq!(a, b);
    }

    #[test]
    fn single_stage_series_renders_without_dividing_by_zero() {
        let svg = line_chart(
            "one",
            &[Series {
                label: "only".into(),
                mean: vec![0.5],
                std: vec![0.0],
            }],
        );
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn titles_are_escaped() {
        let svg = line_chart(
            "a < b & c",
            &[Series {
                label: "x<y".into(),
                mean: vec![0.5],
                std: vec![0.1],
            }],
        );
        assert!(svg.contains("a &lt; b &amp; c"));
        assert!(svg.contains("x&lt;y"));
    }
}
