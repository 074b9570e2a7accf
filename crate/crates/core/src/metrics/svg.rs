//! Minimal SVG line and grouped-bar charts. Output depends only on the
//! input data; numbers are printed with fixed precision.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#e6b800", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const MARKERS: [&str; 4] = ["circle", "square", "diamond", "triangle"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn no_data(out: &mut String) {
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="#f4f4f4" stroke="#999"/>"##,
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="16" fill="#666">no data</text>"##,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        TOP + (HEIGHT - TOP - BOTTOM) / 2.0
    );
    out.push_str("</svg>\n");
}

fn nice_max(max: f64) -> f64 {
    if max.is_nan() || max <= 0.0 {
        return 1.0;
    }
    let magnitude = 10f64.powf(max.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * magnitude >= max {
            return step * magnitude;
        }
    }
    10.0 * magnitude
}

fn axes(out: &mut String, x_label: &str, y_label: &str, y_max: f64) {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w,
        TOP + plot_h
    );
    let _ = writeln!(
        out,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#,
        TOP + plot_h
    );
    for i in 0..=5 {
        let v = y_max * i as f64 / 5.0;
        let y = TOP + plot_h - plot_h * i as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{LEFT}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e0e0e0"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            y - 10.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}">{}</text>"#,
            x + 18.0,
            escape(name)
        );
    }
}

fn marker(out: &mut String, kind: &str, x: f64, y: f64, color: &str) {
    match kind {
        "square" => {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{color}"/>"#,
                x - 4.0,
                y - 4.0
            );
        }
        "diamond" => {
            let _ = writeln!(
                out,
                r#"<polygon points="{x:.2},{:.2} {:.2},{y:.2} {x:.2},{:.2} {:.2},{y:.2}" fill="{color}"/>"#,
                y - 5.0,
                x + 5.0,
                y + 5.0,
                x - 5.0
            );
        }
        "triangle" => {
            let _ = writeln!(
                out,
                r#"<polygon points="{x:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
                y - 5.0,
                x + 5.0,
                y + 4.0,
                x - 5.0,
                y + 4.0
            );
        }
        _ => {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
        }
    }
}

/// Line chart of several series; an empty input renders a "no data" panel.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        no_data(&mut out);
        return out;
    }
    let mut xs: Vec<f64> = all.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let (x_min, x_max) = (xs[0], xs[xs.len() - 1]);
    let (x_lo, x_hi) = if x_max > x_min {
        (x_min, x_max)
    } else {
        (x_min - 1.0, x_max + 1.0)
    };
    let y_max = nice_max(all.iter().map(|p| p.1).fold(0.0, f64::max));
    axes(&mut out, x_label, y_label, y_max);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + 15.0 + (plot_w - 30.0) * (x - x_lo) / (x_hi - x_lo);
    let py = |y: f64| TOP + plot_h - plot_h * y / y_max;
    for &x in &xs {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{x}</text>"#,
            px(x),
            TOP + plot_h + 18.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = s.points.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.len() > 1 {
            let path: Vec<String> = pts
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                path.join(" ")
            );
        }
        for &(x, y) in &pts {
            marker(&mut out, MARKERS[i % MARKERS.len()], px(x), py(y), color);
        }
    }
    let names: Vec<&str> = series.iter().map(|s| s.name.as_str()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart: one cluster per category, one bar per series.
/// `values[s][c]` is series `s` at category `c`; `None` draws nothing.
pub fn bar_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    categories: &[String],
    series_names: &[String],
    values: &[Vec<Option<f64>>],
) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let any = values.iter().flatten().any(Option::is_some);
    if categories.is_empty() || series_names.is_empty() || !any {
        no_data(&mut out);
        return out;
    }
    let y_max = nice_max(values.iter().flatten().flatten().copied().fold(0.0, f64::max));
    axes(&mut out, x_label, y_label, y_max);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let cluster = plot_w / categories.len() as f64;
    let bar = cluster * 0.8 / series_names.len() as f64;
    for (c, cat) in categories.iter().enumerate() {
        let x0 = LEFT + cluster * c as f64 + cluster * 0.1;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + cluster * (c as f64 + 0.5),
            TOP + plot_h + 18.0,
            escape(cat)
        );
        for (s, row) in values.iter().enumerate() {
            if let Some(Some(v)) = row.get(c) {
                let h = plot_h * v / y_max;
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    x0 + bar * s as f64,
                    TOP + plot_h - h,
                    bar,
                    h,
                    PALETTE[s % PALETTE.len()]
                );
            }
        }
    }
    let names: Vec<&str> = series_names.iter().map(String::as_str).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_line_chart_says_no_data() {
        let svg = line_chart("t", "x", "y", &[]);
        assert!(svg.contains("no data"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn line_chart_is_deterministic_and_escaped() {
        let s = vec![Series {
            name: "a<b".into(),
            points: vec![(10.0, 2.5), (5.0, 1.0)],
        }];
        let a = line_chart("T", "n", "gap", &s);
        assert_eq!(a, line_chart("T", "n", "gap", &s));
        assert!(a.contains("a&lt;b"));
        assert!(a.contains("<polyline"));
    }

    #[test]
    fn nice_axis_maximum() {
        assert_eq!(nice_max(0.0), 1.0);
        assert_eq!(nice_max(7.3), 10.0);
        assert_eq!(nice_max(23.0), 25.0);
        assert_eq!(nice_max(100.0), 100.0);
    }

    #[test]
    fn bar_chart_draws_present_values() {
        let svg = bar_chart(
            "h",
            "n",
            "%",
            &["5".into(), "10".into()],
            &["zero-shot".into()],
            &[vec![Some(10.0), None]],
        );
        assert_eq!(svg.matches("<rect x=").count(), 1 + 1);
    }
}
