//! Minimal deterministic SVG plotting.
//!
//! The CSVs are the canonical outputs; these plots are derived views
//! rendered in-process with fixed fonts, colors, and float formatting,
//! so identical runs produce byte-identical files and figures diff
//! cleanly in review.

use factordiff_core::Mat;

const WIDTH: f64 = 860.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 48.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Fixed series palette (line charts cycle through it).
pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_bounds(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.06 * (hi - lo);
    (lo - pad, hi + pad)
}

/// One named line.
pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Line chart over a shared categorical x-axis.
pub fn line_chart(title: &str, x_labels: &[String], series: &[Series<'_>]) -> String {
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let points = x_labels.len().max(1);

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in series {
        for &v in s.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let (lo, hi) = nice_bounds(lo, hi);

    let x_at = |i: usize| -> f64 {
        if points == 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + plot_w * i as f64 / (points - 1) as f64
        }
    };
    let y_at = |v: f64| -> f64 { MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo)) };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"monospace\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    ));
    // Frame and horizontal grid with y tick labels.
    svg.push_str(&format!(
        "  <rect x=\"{MARGIN_LEFT:.1}\" y=\"{MARGIN_TOP:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n"
    ));
    for tick in 0..=4 {
        let v = lo + (hi - lo) * tick as f64 / 4.0;
        let y = y_at(v);
        svg.push_str(&format!(
            "  <line x1=\"{MARGIN_LEFT:.1}\" y1=\"{y:.2}\" x2=\"{:.1}\" y2=\"{y:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n",
            MARGIN_LEFT + plot_w
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{v:.4}</text>\n",
            MARGIN_LEFT - 6.0,
            y + 4.0
        ));
    }
    // Sparse x tick labels.
    let tick_step = (points / 8).max(1);
    for (i, label) in x_labels.iter().enumerate() {
        if i % tick_step != 0 && i + 1 != points {
            continue;
        }
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            x_at(i),
            MARGIN_TOP + plot_h + 18.0,
            escape(label)
        ));
    }
    // Series polylines and legend.
    for (s_idx, s) in series.iter().enumerate() {
        let color = PALETTE[s_idx % PALETTE.len()];
        let mut path = String::new();
        for (i, &v) in s.values.iter().enumerate() {
            path.push_str(&format!("{:.2},{:.2} ", x_at(i), y_at(v)));
        }
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
            path.trim_end()
        ));
        let legend_y = MARGIN_TOP + 16.0 * s_idx as f64 + 10.0;
        svg.push_str(&format!(
            "  <line x1=\"{:.1}\" y1=\"{legend_y:.1}\" x2=\"{:.1}\" y2=\"{legend_y:.1}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>\n",
            MARGIN_LEFT + plot_w + 10.0,
            MARGIN_LEFT + plot_w + 34.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\">{}</text>\n",
            MARGIN_LEFT + plot_w + 40.0,
            legend_y + 4.0,
            escape(s.name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn heat_color(value: f64, max: f64) -> String {
    let t = if max > 0.0 { (value / max).clamp(0.0, 1.0) } else { 0.0 };
    // White -> deep blue ramp.
    let r = (255.0 - 225.0 * t) as u8;
    let g = (255.0 - 180.0 * t) as u8;
    let b = (255.0 - 75.0 * t) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heatmap of `values` (rows x cols) with row labels on the left and
/// sparse column labels underneath. Every row label is emitted as a
/// `class="row-label"` text node.
pub fn heatmap(title: &str, row_labels: &[String], col_labels: &[String], values: &Mat) -> String {
    assert_eq!(values.rows(), row_labels.len());
    assert_eq!(values.cols(), col_labels.len());
    let rows = values.rows().max(1);
    let cols = values.cols().max(1);
    let cell_w = ((WIDTH - MARGIN_LEFT - 40.0) / cols as f64).min(40.0);
    let cell_h = ((520.0 - MARGIN_TOP - MARGIN_BOTTOM) / rows as f64).min(18.0);
    let plot_w = cell_w * cols as f64;
    let plot_h = cell_h * rows as f64;
    let height = MARGIN_TOP + plot_h + MARGIN_BOTTOM;
    let width = MARGIN_LEFT + plot_w + 40.0;

    let max = values
        .as_slice()
        .iter()
        .cloned()
        .fold(0.0f64, f64::max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.1}\" height=\"{height:.1}\" \
         viewBox=\"0 0 {width:.1} {height:.1}\" font-family=\"monospace\">\n"
    ));
    svg.push_str(&format!(
        "  <text x=\"{:.1}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    ));
    for r in 0..rows {
        for c in 0..cols {
            let x = MARGIN_LEFT + cell_w * c as f64;
            let y = MARGIN_TOP + cell_h * r as f64;
            svg.push_str(&format!(
                "  <rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cell_w:.2}\" height=\"{cell_h:.2}\" \
                 fill=\"{}\" stroke=\"none\"/>\n",
                heat_color(values[(r, c)], max)
            ));
        }
        svg.push_str(&format!(
            "  <text class=\"row-label\" x=\"{:.1}\" y=\"{:.2}\" font-size=\"10\" \
             text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 6.0,
            MARGIN_TOP + cell_h * r as f64 + cell_h * 0.72,
            escape(&row_labels[r])
        ));
    }
    let tick_step = (cols / 8).max(1);
    for (c, label) in col_labels.iter().enumerate() {
        if c % tick_step != 0 && c + 1 != cols {
            continue;
        }
        svg.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_LEFT + cell_w * c as f64 + cell_w / 2.0,
            MARGIN_TOP + plot_h + 16.0,
            escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Two stacked panels: annualized Sharpe vs k and mean HHI vs k, with
/// one point per (k, seed) and a line through the per-k means.
pub fn ablation_summary(
    k_values: &[usize],
    sharpe_points: &[(usize, f64)],
    hhi_points: &[(usize, f64)],
) -> String {
    let panel_h = 240.0;
    let height = 2.0 * panel_h + 40.0;
    let plot_w = WIDTH - MARGIN_LEFT - 60.0;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height}\" \
         viewBox=\"0 0 {WIDTH} {height}\" font-family=\"monospace\">\n"
    ));

    let x_at = |k: usize| -> f64 {
        let idx = k_values.iter().position(|&v| v == k).unwrap_or(0);
        if k_values.len() == 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + plot_w * idx as f64 / (k_values.len() - 1) as f64
        }
    };

    for (panel, (name, points)) in [("sharpe_annualized", sharpe_points), ("mean_hhi", hhi_points)]
        .into_iter()
        .enumerate()
    {
        let top = 30.0 + panel as f64 * (panel_h + 20.0);
        let ph = panel_h - 50.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(_, v) in points {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let (lo, hi) = nice_bounds(lo, hi);
        let y_at = |v: f64| -> f64 { top + ph * (1.0 - (v - lo) / (hi - lo)) };

        svg.push_str(&format!(
            "  <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"14\" text-anchor=\"middle\">{name} vs k</text>\n",
            MARGIN_LEFT + plot_w / 2.0,
            top - 8.0
        ));
        svg.push_str(&format!(
            "  <rect x=\"{MARGIN_LEFT:.1}\" y=\"{top:.1}\" width=\"{plot_w:.1}\" height=\"{ph:.1}\" \
             fill=\"none\" stroke=\"#333333\"/>\n"
        ));
        for tick in 0..=3 {
            let v = lo + (hi - lo) * tick as f64 / 3.0;
            svg.push_str(&format!(
                "  <text x=\"{:.1}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{v:.3}</text>\n",
                MARGIN_LEFT - 6.0,
                y_at(v) + 4.0
            ));
        }
        for &k in k_values {
            svg.push_str(&format!(
                "  <text x=\"{:.2}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"middle\">{k}</text>\n",
                x_at(k),
                top + ph + 16.0
            ));
        }
        // Scatter of per-seed points.
        for &(k, v) in points {
            svg.push_str(&format!(
                "  <circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.5\"/>\n",
                x_at(k),
                y_at(v)
            ));
        }
        // Line through per-k means.
        let mut path = String::new();
        for &k in k_values {
            let vals: Vec<f64> = points
                .iter()
                .filter(|&&(pk, _)| pk == k)
                .map(|&(_, v)| v)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            path.push_str(&format!("{:.2},{:.2} ", x_at(k), y_at(mean)));
        }
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.trim_end()
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_well_formed_and_deterministic() {
        let labels: Vec<String> = (0..5).map(|i| format!("2020-{:02}", i + 1)).collect();
        let values = [1.0, 1.1, 1.05, 1.2, 1.15];
        let a = line_chart("wealth", &labels, &[Series { name: "EW", values: &values }]);
        let b = line_chart("wealth", &labels, &[Series { name: "EW", values: &values }]);
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<polyline").count(), 1);
    }

    #[test]
    fn heatmap_has_one_label_per_row() {
        let rows: Vec<String> = (0..7).map(|i| format!("A{i}")).collect();
        let cols: Vec<String> = (0..4).map(|i| format!("m{i}")).collect();
        let values = Mat::from_fn(7, 4, |r, c| (r * c) as f64 / 28.0);
        let svg = heatmap("weights", &rows, &cols, &values);
        assert_eq!(svg.matches("class=\"row-label\"").count(), 7);
        assert_eq!(svg.matches("<rect").count(), 28);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = line_chart(
            "a < b & c",
            &["x<1".to_string()],
            &[Series { name: "s&p", values: &[1.0] }],
        );
        assert!(!svg.contains("a < b & c"));
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
