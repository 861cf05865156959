use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// One curve of a line plot: `values[k]` is drawn at layer `layers[k]`.
#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub label: String,
    pub layers: &'a [usize],
    pub values: &'a [f64],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `series` as a fixed-size SVG line plot with one polyline per
/// series and x ticks at every integer layer.
///
/// Output depends only on the arguments; coordinates are printed with two
/// decimals.
pub fn line_plot(title: &str, desc: &str, y_label: &str, series: &[Series]) -> String {
    let max_layer = series
        .iter()
        .flat_map(|s| s.layers.iter().copied())
        .max()
        .unwrap_or(0)
        .max(1);
    let finite = || series.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |layer: usize| LEFT + plot_w * layer as f64 / max_layer as f64;
    let y = |v: f64| TOP + plot_h * (hi - v) / (hi - lo);

    let mut out = String::new();
    let w = &mut out;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(w, "<title>{}</title>", escape(title)).unwrap();
    writeln!(w, "<desc>{}</desc>", escape(desc)).unwrap();
    writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(w, r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#, LEFT + plot_w / 2.0, escape(title)).unwrap();
    writeln!(
        w,
        r#"<line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    )
    .unwrap();
    writeln!(w, r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h).unwrap();
    for layer in 0..=max_layer {
        let xl = x(layer);
        writeln!(w, r#"<line x1="{xl:.2}" y1="{:.2}" x2="{xl:.2}" y2="{:.2}" stroke="black"/>"#, TOP + plot_h, TOP + plot_h + 5.0).unwrap();
        writeln!(w, r#"<text x="{xl:.2}" y="{:.2}" text-anchor="middle">{layer}</text>"#, TOP + plot_h + 18.0).unwrap();
    }
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yv = y(v);
        writeln!(w, r#"<line x1="{:.2}" y1="{yv:.2}" x2="{LEFT:.2}" y2="{yv:.2}" stroke="black"/>"#, LEFT - 5.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, LEFT - 8.0, yv + 4.0).unwrap();
    }
    writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">layer</text>"#, LEFT + plot_w / 2.0, HEIGHT - 10.0).unwrap();
    writeln!(
        w,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let points: Vec<String> = s
            .layers
            .iter()
            .zip(s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(&l, &v)| format!("{:.2},{:.2}", x(l), y(v)))
            .collect();
        writeln!(w, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, points.join(" ")).unwrap();
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(w, r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0).unwrap();
        writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.label)).unwrap();
    }
    out.push_str("</svg>\n");
    out
}
