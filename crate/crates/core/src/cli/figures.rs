//! Minimal static SVG bar charts.

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Vertical bar chart with one bar per `(label, value)`.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let (w_bar, gap, left, top, plot_h) = (56.0, 20.0, 50.0, 40.0, 220.0);
    let width = left + bars.len() as f64 * (w_bar + gap) + gap;
    let height = top + plot_h + 90.0;
    let max = bars.iter().map(|b| b.1).fold(0.0, f64::max).max(1e-12);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        escape(title)
    ));
    let base = top + plot_h;
    s.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{base}\" x2=\"{}\" y2=\"{base}\" stroke=\"black\"/>\n",
        width - gap / 2.0
    ));
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = left + gap + i as f64 * (w_bar + gap);
        let h = plot_h * v / max;
        s.push_str(&format!(
            "<rect x=\"{x}\" y=\"{}\" width=\"{w_bar}\" height=\"{h}\" fill=\"#4a78a8\"/>\n",
            base - h
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{v}</text>\n",
            x + w_bar / 2.0,
            base - h - 4.0
        ));
        s.push_str(&format!(
            "<text transform=\"translate({},{}) rotate(35)\">{}</text>\n",
            x + w_bar / 2.0,
            base + 12.0,
            escape(label)
        ));
    }
    s.push_str("</svg>\n");
    s
}
