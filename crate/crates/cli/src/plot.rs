//! Static SVG charts: per-method group fairness bars and coverage sweeps.

use std::collections::BTreeMap;
use std::fmt::Write;

use ifac::decision::Method;
use ifac::metrics::{Estimate, GroupRates, MethodReport};
use ifac::pipeline::SweepRow;

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 45.0;
const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn method_color(method: Method) -> &'static str {
    match method {
        Method::FC => PALETTE[0],
        Method::UBAC => PALETTE[1],
        Method::IFAC => PALETTE[2],
    }
}

fn header(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Frame, title and y ticks of one panel with origin `(x0, y0)`.
fn panel(svg: &mut String, x0: f64, y0: f64, title: &str, y_max: f64) {
    let (left, bottom) = (x0 + MARGIN, y0 + PANEL_H);
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        x0 + (PANEL_W + MARGIN) / 2.0,
        y0 - 12.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{left}\" y1=\"{y0}\" x2=\"{left}\" y2=\"{bottom}\" stroke=\"black\"/>\n\
         <line x1=\"{left}\" y1=\"{bottom}\" x2=\"{}\" y2=\"{bottom}\" stroke=\"black\"/>",
        left + PANEL_W
    );
    for i in 0..=4 {
        let v = y_max * f64::from(i) / 4.0;
        let y = bottom - PANEL_H * f64::from(i) / 4.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{left}\" y2=\"{y}\" stroke=\"black\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{v:.2}</text>",
            left - 4.0,
            left - 6.0,
            y + 4.0
        );
    }
}

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    ((v * 1.15) * 10.0).ceil() / 10.0
}

fn legend(svg: &mut String, x: f64, y: f64, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let yy = y + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>\
             <text x=\"{}\" y=\"{}\">{}</text>",
            yy - 9.0,
            x + 14.0,
            yy,
            escape(label)
        );
    }
}

type RatePick = fn(&GroupRates) -> Option<Estimate>;

/// One panel per rate (FNR, FPR, PDR). Each method gets a bar at the mean
/// over groups, a whisker spanning the lowest to highest group, and a
/// "range / std" caption.
pub fn fairness_chart(reports: &[MethodReport]) -> String {
    let metrics: [(&str, RatePick); 3] = [
        ("FNR", |g| g.fnr),
        ("FPR", |g| g.fpr),
        ("PDR", |g| g.pdr),
    ];
    let width = 3.0 * (PANEL_W + MARGIN) + 110.0;
    let height = PANEL_H + 100.0;
    let mut svg = header(width, height);
    for (p, (name, pick)) in metrics.iter().enumerate() {
        let x0 = 10.0 + p as f64 * (PANEL_W + MARGIN);
        let y0 = 40.0;
        let values: Vec<Vec<f64>> = reports
            .iter()
            .map(|r| r.fairness.groups.iter().filter_map(|g| pick(g).map(|e| e.mean)).collect())
            .collect();
        let top = nice_max(values.iter().flatten().copied().fold(0.0, f64::max));
        panel(&mut svg, x0, y0, name, top);
        let slot = PANEL_W / reports.len().max(1) as f64;
        let scale = |v: f64| y0 + PANEL_H - PANEL_H * v / top;
        for (i, (report, vals)) in reports.iter().zip(&values).enumerate() {
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let cx = x0 + MARGIN + slot * (i as f64 + 0.5);
            let bw = slot * 0.5;
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{bw}\" height=\"{}\" fill=\"{}\"/>",
                cx - bw / 2.0,
                scale(mean),
                y0 + PANEL_H - scale(mean),
                method_color(report.method)
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\"/>\
                 <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\
                 <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
                scale(lo),
                scale(hi),
                cx - 6.0,
                scale(lo),
                cx + 6.0,
                scale(lo),
                cx - 6.0,
                scale(hi),
                cx + 6.0,
                scale(hi)
            );
            let d = match *name {
                "FNR" => report.fairness.fnr,
                "FPR" => report.fairness.fpr,
                _ => report.fairness.pdr,
            };
            if let Some(d) = d {
                let _ = writeln!(
                    svg,
                    "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">r {:.2} / s {:.2}</text>",
                    y0 + PANEL_H + 14.0,
                    d.range,
                    d.std
                );
            }
            let _ = writeln!(
                svg,
                "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
                y0 + PANEL_H + 28.0,
                report.method
            );
        }
    }
    let entries: Vec<(String, &str)> = reports
        .iter()
        .map(|r| (r.method.to_string(), method_color(r.method)))
        .collect();
    legend(&mut svg, width - 95.0, 60.0, &entries);
    svg.push_str("</svg>\n");
    svg
}

/// Accuracy, PDR range and PDR std against coverage. UBAC and FC get one
/// line each; IFAC gets one line per unfair weight.
pub fn sweep_chart(rows: &[SweepRow]) -> String {
    let metrics = ["accuracy", "pdr_range", "pdr_std"];
    let titles = ["Accuracy", "PDR range", "PDR std"];
    let mut by_metric: Vec<BTreeMap<String, Vec<(f64, f64)>>> = vec![BTreeMap::new(); metrics.len()];
    for r in rows {
        let Some(m) = metrics.iter().position(|m| *m == r.metric) else { continue };
        let label = match r.method {
            Method::IFAC => format!("IFAC w_u={}", r.unfair_weight),
            other => other.to_string(),
        };
        let points = by_metric[m].entry(label).or_default();
        if !points.iter().any(|(c, _)| *c == r.coverage) {
            points.push((r.coverage, r.value));
        }
    }
    let labels: Vec<String> = {
        let mut all: Vec<String> = by_metric.iter().flat_map(|m| m.keys().cloned()).collect();
        all.sort();
        all.dedup();
        all
    };
    let color = |label: &str| PALETTE[labels.iter().position(|l| l == label).unwrap_or(0) % PALETTE.len()];
    let coverages: Vec<f64> = {
        let mut cs: Vec<f64> = rows.iter().map(|r| r.coverage).collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        cs
    };
    let (c_lo, c_hi) = match (coverages.first(), coverages.last()) {
        (Some(a), Some(b)) if b > a => (*a, *b),
        (Some(a), _) => (a - 0.05, a + 0.05),
        _ => (0.0, 1.0),
    };

    let width = 3.0 * (PANEL_W + MARGIN) + 140.0;
    let height = PANEL_H + 90.0;
    let mut svg = header(width, height);
    for (p, title) in titles.iter().enumerate() {
        let x0 = 10.0 + p as f64 * (PANEL_W + MARGIN);
        let y0 = 40.0;
        let top = nice_max(by_metric[p].values().flatten().map(|(_, v)| *v).fold(0.0, f64::max));
        panel(&mut svg, x0, y0, title, top);
        let sx = |c: f64| x0 + MARGIN + PANEL_W * (c - c_lo) / (c_hi - c_lo);
        let sy = |v: f64| y0 + PANEL_H - PANEL_H * v / top;
        for c in &coverages {
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{c}</text>",
                sx(*c),
                y0 + PANEL_H + 14.0
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">coverage</text>",
            x0 + MARGIN + PANEL_W / 2.0,
            y0 + PANEL_H + 30.0
        );
        for (label, points) in &by_metric[p] {
            let mut pts = points.clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let path: Vec<String> = pts.iter().map(|(c, v)| format!("{:.2},{:.2}", sx(*c), sy(*v))).collect();
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
                path.join(" "),
                color(label)
            );
            for (c, v) in &pts {
                let _ = writeln!(
                    svg,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{}\"/>",
                    sx(*c),
                    sy(*v),
                    color(label)
                );
            }
        }
    }
    let entries: Vec<(String, &str)> = labels.iter().map(|l| (l.clone(), color(l))).collect();
    legend(&mut svg, width - 125.0, 60.0, &entries);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, c: f64, w: f64, metric: &str, value: f64) -> SweepRow {
        SweepRow {
            method,
            coverage: c,
            unfair_weight: w,
            metric: metric.into(),
            value,
            stderr: None,
        }
    }

    #[test]
    fn sweep_chart_has_one_line_per_series_and_panel() {
        let mut rows = Vec::new();
        for c in [0.8, 0.9] {
            for w in [0.25, 1.0] {
                for m in ["accuracy", "pdr_range", "pdr_std"] {
                    rows.push(row(Method::IFAC, c, w, m, 0.3));
                    rows.push(row(Method::UBAC, c, w, m, 0.4));
                }
            }
        }
        let svg = sweep_chart(&rows);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 9);
        assert!(svg.contains("IFAC w_u=0.25"));
    }

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b&c"), "a&lt;b&amp;c");
    }
}
