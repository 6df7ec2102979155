//! Step-plot rendering of performance profiles as standalone SVG.

use qrobust_core::rational::Rat;

use crate::profile::ProfileTable;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;

fn as_f64(r: Rat) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Follows the usual coloring of these comparisons: deterministic
/// equivalents red, plain quantified models blue, universally constrained
/// models black; other curves cycle a fixed palette.
fn color_for(name: &str, index: usize) -> &'static str {
    let lower = name.to_ascii_lowercase();
    if lower.contains("qippu") {
        "#000000"
    } else if lower.contains("qip") {
        "#1f4fd8"
    } else if lower.contains("dep") {
        "#d62728"
    } else {
        const PALETTE: [&str; 5] = ["#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];
        PALETTE[index % PALETTE.len()]
    }
}

/// One step polyline per solver over the τ grid, with axes and a legend.
pub fn emit_svg(profile: &ProfileTable) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let tau_min = 1.0;
    let tau_max = profile.taus.last().map(|t| as_f64(*t)).unwrap_or(1.0).max(1.5);
    let x = |tau: f64| MARGIN_LEFT + (tau - tau_min) / (tau_max - tau_min) * plot_w;
    let y = |p: f64| MARGIN_TOP + (1.0 - p) * plot_h;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Axes.
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        x0 = MARGIN_LEFT,
        y0 = MARGIN_TOP + plot_h,
        x1 = MARGIN_LEFT + plot_w,
    ));
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n",
        x0 = MARGIN_LEFT,
        y0 = MARGIN_TOP + plot_h,
        y1 = MARGIN_TOP,
    ));
    for tick in 0..=4 {
        let p = tick as f64 / 4.0;
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{yy}\" x2=\"{x1}\" y2=\"{yy}\" stroke=\"#cccccc\" \
             stroke-dasharray=\"3 3\"/>\n",
            x0 = MARGIN_LEFT,
            x1 = MARGIN_LEFT + plot_w,
            yy = y(p),
        ));
        out.push_str(&format!(
            "<text x=\"{xx}\" y=\"{yy}\" font-size=\"11\" text-anchor=\"end\" \
             dominant-baseline=\"middle\">{p:.2}</text>\n",
            xx = MARGIN_LEFT - 6.0,
            yy = y(p),
        ));
    }
    let tau_ticks = 5usize;
    for tick in 0..=tau_ticks {
        let tau = tau_min + (tau_max - tau_min) * tick as f64 / tau_ticks as f64;
        out.push_str(&format!(
            "<text x=\"{xx}\" y=\"{yy}\" font-size=\"11\" text-anchor=\"middle\">{tau:.1}</text>\n",
            xx = x(tau),
            yy = MARGIN_TOP + plot_h + 16.0,
        ));
    }
    out.push_str(&format!(
        "<text x=\"{xx}\" y=\"{yy}\" font-size=\"12\" text-anchor=\"middle\">performance factor</text>\n",
        xx = MARGIN_LEFT + plot_w / 2.0,
        yy = HEIGHT - 12.0,
    ));

    // Step curves.
    for (idx, (name, points)) in profile.curves.iter().enumerate() {
        let color = color_for(name, idx);
        let mut path = String::new();
        let mut prev_p = 0.0;
        for (i, tau) in profile.taus.iter().enumerate() {
            let tx = x(as_f64(*tau));
            let tp = as_f64(points[i]);
            if i == 0 {
                path.push_str(&format!("{tx:.1},{:.1} ", y(tp)));
            } else {
                path.push_str(&format!("{tx:.1},{:.1} ", y(prev_p)));
                path.push_str(&format!("{tx:.1},{:.1} ", y(tp)));
            }
            prev_p = tp;
        }
        // Extend the final level to the right edge.
        path.push_str(&format!("{:.1},{:.1}", MARGIN_LEFT + plot_w, y(prev_p)));
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{path}\"/>\n"
        ));
        let ly = MARGIN_TOP + 16.0 * idx as f64 + 8.0;
        out.push_str(&format!(
            "<line x1=\"{x0}\" y1=\"{ly}\" x2=\"{x1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            x0 = MARGIN_LEFT + plot_w - 150.0,
            x1 = MARGIN_LEFT + plot_w - 120.0,
        ));
        out.push_str(&format!(
            "<text x=\"{xx}\" y=\"{ly}\" font-size=\"11\" dominant-baseline=\"middle\">{name}</text>\n",
            xx = MARGIN_LEFT + plot_w - 114.0,
        ));
    }

    out.push_str("</svg>\n");
    out
}
