//! Minimal SVG line plots for eyeballing runs.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

/// Line plot of several series over shared `xs`. With `log_y`, nonpositive
/// values are dropped.
pub fn line_plot(title: &str, xs: &[f64], series: &[(String, Vec<f64>)], log_y: bool) -> String {
    let map_y = |v: f64| if log_y { (v > 0.0).then(|| v.log10()) } else { Some(v) };
    let (x_lo, x_hi) = bounds(xs.iter().copied());
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|(_, ys)| ys.iter().filter_map(|&v| map_y(v))));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        WIDTH / 2.0,
        escape(title),
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let y_label = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3}") };
    svg.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\">{x_lo:.3}</text>\n<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{x_hi:.3}</text>\n\
         <text x=\"5\" y=\"{}\">{}</text>\n<text x=\"5\" y=\"{}\">{}</text>\n",
        HEIGHT - MARGIN + 15.0,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 15.0,
        HEIGHT - MARGIN,
        y_label(y_lo),
        MARGIN,
        y_label(y_hi)
    ));
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter_map(|(&x, &y)| map_y(y).map(|y| format!("{:.2},{:.2}", sx(x), sy(y))))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" fill=\"{color}\">{}</text>\n",
            points.join(" "),
            WIDTH - MARGIN + 5.0 - 40.0,
            MARGIN + 15.0 * (k as f64 + 1.0),
            escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_contains_one_polyline_per_series() {
        let xs = [0.0, 1.0, 2.0];
        let svg = line_plot(
            "a < b",
            &xs,
            &[("one".into(), vec![1.0, 0.1, 0.01]), ("two".into(), vec![2.0, 0.0, 1.0])],
            true,
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }
}
