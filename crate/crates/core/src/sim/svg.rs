//! Minimal polyline plots of a trace: states, gains and parameter against
//! time, one panel each.

use std::fmt::Write;

use super::trace::SimTrace;

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 180.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const GAP: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn panel(out: &mut String, top: f64, title: &str, t: &[f64], series: &[(String, Vec<f64>)]) {
    let (t0, t1) = (t.first().copied().unwrap_or(0.0), t.last().copied().unwrap_or(1.0));
    let finite = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let span_t = if t1 > t0 { t1 - t0 } else { 1.0 };
    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let sx = |v: f64| MARGIN_L + (v - t0) / span_t * plot_w;
    let sy = |v: f64| top + PANEL_H - (v - lo) / (hi - lo) * PANEL_H;

    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{top}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN_L}" y="{}" font-size="13">{title}</text>"#,
        top - 6.0
    );
    for (v, y) in [(hi, top), (lo, top + PANEL_H)] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="end">{v:.3}</text>"#,
            MARGIN_L - 4.0,
            y + 4.0
        );
    }
    for (v, anchor) in [(t0, "start"), (t1, "end")] {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="{anchor}">t={v:.2}</text>"#,
            sx(v),
            top + PANEL_H + 14.0
        );
    }
    for (i, (name, values)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = t
            .iter()
            .zip(values)
            .filter(|(_, v)| v.is_finite())
            .map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.3" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 + 16.0 * i as f64;
        let lx = WIDTH - MARGIN_R + 10.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="12">{name}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0
        );
    }
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// Renders `x(t)`, `K(t)` and `ρ(t)` as an SVG document.
pub fn trace_svg(trace: &SimTrace) -> String {
    let panels: [(&str, &[Vec<f64>], &str, usize); 3] = [
        ("state x(t)", &trace.x, "x", trace.n),
        ("gain vec K(t)", &trace.k, "K", trace.m * trace.n),
        ("parameter rho(t)", &trace.rho, "rho", trace.p),
    ];
    let height = GAP + panels.len() as f64 * (PANEL_H + GAP);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    for (i, (title, rows, prefix, count)) in panels.iter().enumerate() {
        let series: Vec<(String, Vec<f64>)> = (0..*count)
            .map(|j| (format!("{prefix}{}", j + 1), column(rows, j)))
            .collect();
        panel(&mut out, GAP + i as f64 * (PANEL_H + GAP), title, &trace.t, &series);
    }
    out.push_str("</svg>\n");
    out
}
