//! Minimal SVG charts for suite reports.

use std::fmt::Write;

use super::report::MetricsReport;

const PALETTE: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

fn header(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Per-run values of accuracy, precision, recall and F1, one panel per
/// metric, one column of points per arm with its mean marked.
pub fn metric_distributions_svg(reports: &[MetricsReport]) -> String {
    let metrics: [(&str, fn(&super::RunMetrics) -> f64); 4] = [
        ("accuracy", |r| r.accuracy),
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("F1", |r| r.f1),
    ];
    let (pw, ph, top, left) = (200.0, 220.0, 30.0, 40.0);
    let width = left + pw * metrics.len() as f64 + 20.0;
    let height = top + ph + 60.0;
    let mut s = header(width, height);
    for (m, (name, get)) in metrics.iter().enumerate() {
        let x0 = left + pw * m as f64;
        let _ = writeln!(s, "<text x=\"{}\" y=\"18\" text-anchor=\"middle\">{name}</text>", x0 + pw / 2.0);
        let _ = writeln!(
            s,
            "<rect x=\"{x0}\" y=\"{top}\" width=\"{}\" height=\"{ph}\" fill=\"none\" stroke=\"#999\"/>",
            pw - 10.0
        );
        for tick in [0.0, 0.5, 1.0] {
            let y = top + ph * (1.0 - tick);
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{tick:.1}</text>", x0 - 2.0, y + 4.0);
        }
        let slot = (pw - 10.0) / reports.len().max(1) as f64;
        for (a, rep) in reports.iter().enumerate() {
            let cx = x0 + slot * (a as f64 + 0.5);
            let colour = PALETTE[a % PALETTE.len()];
            for run in &rep.runs {
                let y = top + ph * (1.0 - get(run).clamp(0.0, 1.0));
                let _ = writeln!(s, "<circle cx=\"{cx:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"{colour}\" fill-opacity=\"0.7\"/>");
            }
            let mean = rep.runs.iter().map(get).sum::<f64>() / rep.runs.len().max(1) as f64;
            let y = top + ph * (1.0 - mean.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                "<line x1=\"{:.1}\" x2=\"{:.1}\" y1=\"{y:.1}\" y2=\"{y:.1}\" stroke=\"{colour}\" stroke-width=\"2\"/>",
                cx - slot * 0.3,
                cx + slot * 0.3
            );
        }
    }
    for (a, rep) in reports.iter().enumerate() {
        let y = top + ph + 25.0 + 14.0 * a as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{left}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{y}\">{}</text>",
            y - 9.0,
            PALETTE[a % PALETTE.len()],
            left + 14.0,
            escape(&rep.arm)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Histogram of per-fire detection times, one bar series per arm.
/// `censored` counts are shown in the legend.
pub fn ttd_histogram_svg(series: &[(String, Vec<i32>, usize)], horizon: i32, bin: i32) -> String {
    let bin = bin.max(1);
    let nbins = ((horizon + bin - 1) / bin) as usize;
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, ttds, _)| {
            let mut c = vec![0; nbins];
            for &t in ttds {
                if (0..horizon).contains(&t) {
                    c[(t / bin) as usize] += 1;
                }
            }
            c
        })
        .collect();
    let peak = counts.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let (left, top, pw, ph) = (40.0, 20.0, 600.0, 240.0);
    let mut s = header(left + pw + 20.0, top + ph + 50.0 + 14.0 * series.len() as f64);
    let _ = writeln!(
        s,
        "<rect x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"#999\"/>"
    );
    let group = pw / nbins as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (a, c) in counts.iter().enumerate() {
        for (b, &n) in c.iter().enumerate() {
            let h = ph * n as f64 / peak;
            let x = left + group * b as f64 + group * 0.1 + bar * a as f64;
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bar:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
                top + ph - h,
                PALETTE[a % PALETTE.len()]
            );
        }
    }
    for b in (0..=nbins).step_by(((nbins + 9) / 10).max(1)) {
        let x = left + group * b as f64;
        let _ = writeln!(
            s,
            "<text x=\"{x:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            top + ph + 14.0,
            b as i32 * bin
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">minutes after ignition</text>",
        left + pw / 2.0,
        top + ph + 28.0
    );
    let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{peak}</text>", left - 4.0, top + 8.0);
    for (a, (name, _, censored)) in series.iter().enumerate() {
        let y = top + ph + 46.0 + 14.0 * a as f64;
        let _ = writeln!(
            s,
            "<rect x=\"{left}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{y}\">{} ({censored} undetected)</text>",
            y - 9.0,
            PALETTE[a % PALETTE.len()],
            left + 14.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
