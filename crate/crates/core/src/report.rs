//! Self-contained SVG rendering of the cumulative-reward comparison: two
//! panels, expected on the left and realised on the right, one line per agent.

use crate::evaluator::CumulativeCurves;

const PALETTE: [&str; 8] = [
    "#9467bd", // standard actor-critic
    "#8c564b", // hybrid actor-critic
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#7f7f7f", "#17becf",
];

const PANEL_W: f64 = 520.0;
const PANEL_H: f64 = 420.0;
const MARGIN_L: f64 = 86.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 46.0;
const MARGIN_B: f64 = 100.0;

struct Panel<'a> {
    title: &'a str,
    series: &'a [Vec<f64>],
}

/// Renders both cumulative panels into one standalone SVG document.
pub fn render_report_svg(curves: &CumulativeCurves) -> String {
    let width = 2.0 * (PANEL_W + MARGIN_L + MARGIN_R) + 30.0;
    let height = PANEL_H + MARGIN_T + MARGIN_B;
    let mut svg = String::with_capacity(1 << 16);
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"13\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let panels = [
        Panel {
            title: "Cumulative expected reward",
            series: &curves.expected,
        },
        Panel {
            title: "Cumulative realised reward",
            series: &curves.realised,
        },
    ];
    for (p, panel) in panels.iter().enumerate() {
        let x0 = MARGIN_L + p as f64 * (PANEL_W + MARGIN_L + MARGIN_R + 30.0);
        render_panel(&mut svg, panel, &curves.agent_names, x0, MARGIN_T);
    }

    // Legend along the bottom.
    let legend_y = MARGIN_T + PANEL_H + 58.0;
    let mut legend_x = MARGIN_L;
    for (i, name) in curves.agent_names.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&format!(
            "<rect x=\"{legend_x}\" y=\"{}\" width=\"18\" height=\"4\" fill=\"{color}\"/>\n",
            legend_y - 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{legend_y}\" fill=\"#222\">{}</text>\n",
            legend_x + 24.0,
            escape(name)
        ));
        legend_x += 24.0 + 9.0 * name.len() as f64 + 28.0;
    }

    svg.push_str("</svg>\n");
    svg
}

fn render_panel(svg: &mut String, panel: &Panel<'_>, names: &[String], x0: f64, y0: f64) {
    let n_points = panel.series.iter().map(Vec::len).max().unwrap_or(0);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for series in panel.series {
        for &v in series {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let x_of = |t: f64| x0 + t / (n_points.max(2) - 1) as f64 * PANEL_W;
    let y_of = |v: f64| y0 + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;

    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"16\" fill=\"#111\">{}</text>\n",
        x0 + PANEL_W / 2.0,
        y0 - 18.0,
        escape(panel.title)
    ));
    svg.push_str(&format!(
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" fill=\"none\" stroke=\"#888\"/>\n"
    ));

    // Horizontal grid lines at nice values.
    for tick in nice_ticks(lo, hi, 6) {
        let y = y_of(tick);
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#ddd\"/>\n",
            x0 + PANEL_W
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" fill=\"#444\">{}</text>\n",
            x0 - 8.0,
            y + 4.0,
            format_tick(tick)
        ));
    }
    // X ticks: customer count.
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let t = frac * (n_points.saturating_sub(1)) as f64;
        let x = x_of(t);
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#888\"/>\n",
            y0 + PANEL_H,
            y0 + PANEL_H + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\" fill=\"#444\">{}</text>\n",
            y0 + PANEL_H + 20.0,
            t.round() as usize
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"#333\">customers quoted</text>\n",
        x0 + PANEL_W / 2.0,
        y0 + PANEL_H + 40.0
    ));

    // Zero line when the range spans it.
    if lo < 0.0 && hi > 0.0 {
        let y = y_of(0.0);
        svg.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>\n",
            x0 + PANEL_W
        ));
    }

    for (i, series) in panel.series.iter().enumerate() {
        if series.is_empty() {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        // Downsample long series; the curve is monotone-ish so this is safe.
        let stride = (series.len() / 600).max(1);
        let mut points = String::new();
        for (t, &v) in series.iter().enumerate() {
            if t % stride != 0 && t != series.len() - 1 {
                continue;
            }
            points.push_str(&format!("{:.2},{:.2} ", x_of(t as f64), y_of(v)));
        }
        svg.push_str(&format!(
            "<polyline points=\"{points}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n"
        ));
        let _ = names;
    }
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw_step = span / target as f64;
    let mag = 10f64.powf(raw_step.abs().log10().floor());
    let norm = raw_step / mag;
    let step = if norm < 1.5 {
        mag
    } else if norm < 3.5 {
        2.0 * mag
    } else if norm < 7.5 {
        5.0 * mag
    } else {
        10.0 * mag
    };
    let mut ticks = Vec::new();
    let mut v = (lo / step).ceil() * step;
    while v <= hi {
        ticks.push(v);
        v += step;
    }
    ticks
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1e6 {
        format!("{:.1}M", v / 1e6)
    } else if v.abs() >= 1e3 {
        format!("{:.0}k", v / 1e3)
    } else {
        format!("{v:.0}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
