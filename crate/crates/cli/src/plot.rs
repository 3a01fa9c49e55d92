//! Plot-ready CSV series and static SVG charts.

use std::fmt::Write as _;

use doclab::DocHistogram;

use crate::report::Report;

pub const BOXPLOT_HEADER: &str = "n,found,min,q1,median,q3,max,mean";
pub const COMPARISON_HEADER: &str = "n,empirical_mean,empirical_sigma,predicted_mean,predicted_sigma";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quartiles per n, copied from the report's `summarize_qn` output.
pub fn boxplot_csv(report: &Report) -> String {
    let mut out = format!("{BOXPLOT_HEADER}\n");
    for row in &report.per_n {
        match &row.empirical {
            Some(e) => {
                let s = &e.summary;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    row.n, s.found, s.min, s.q1, s.median, s.q3, s.max, s.mean
                );
            }
            None => {
                let _ = writeln!(out, "{},0,,,,,,", row.n);
            }
        }
    }
    out
}

/// Empirical against predicted mean test error, one row per n.
pub fn comparison_csv(report: &Report) -> String {
    let mut out = format!("{COMPARISON_HEADER}\n");
    for row in &report.per_n {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.n,
            opt(row.empirical.as_ref().map(|e| e.summary.mean)),
            opt(row.empirical.as_ref().map(|e| e.mean_bootstrap.sigma)),
            opt(row.predicted_mean_error),
            opt(row.predicted_sigma)
        );
    }
    out
}

/// Plot area mapping data coordinates to SVG pixels.
struct Frame {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
}

impl Frame {
    fn new(x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        Frame {
            width: 640.0,
            height: 400.0,
            left: 60.0,
            right: 20.0,
            top: 40.0,
            bottom: 50.0,
            x_range,
            y_range,
        }
    }

    fn x(&self, v: f64) -> f64 {
        let (a, b) = self.x_range;
        self.left + (v - a) / (b - a) * (self.width - self.left - self.right)
    }

    fn y(&self, v: f64) -> f64 {
        let (a, b) = self.y_range;
        self.height - self.bottom - (v - a) / (b - a) * (self.height - self.top - self.bottom)
    }

    fn open(&self, title: &str, x_label: &str, y_label: &str, x_ticks: &[f64], y_ticks: &[f64]) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#,
            w = self.width,
            h = self.height
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            self.width / 2.0,
            escape(title)
        );
        let (x0, x1) = (self.x(self.x_range.0), self.x(self.x_range.1));
        let (y0, y1) = (self.y(self.y_range.0), self.y(self.y_range.1));
        let _ = writeln!(
            s,
            r#"<path d="M{x0:.1},{y1:.1} V{y0:.1} H{x1:.1}" fill="none" stroke="black"/>"#
        );
        for &t in x_ticks {
            let x = self.x(t);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 18.0,
                tick_label(t)
            );
        }
        for &t in y_ticks {
            let y = self.y(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 5.0,
                x0 - 8.0,
                y + 4.0,
                tick_label(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            self.height - 10.0,
            escape(x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
        s
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect()
}

/// DOC histogram on `[0, 1]`, one bar per bin, heights as normalized mass.
pub fn doc_svg(doc: &DocHistogram, title: &str) -> String {
    let masses = doc.masses();
    let top = masses.iter().copied().fold(0.0, f64::max).max(1e-12) * 1.05;
    let f = Frame::new((0.0, 1.0), (0.0, top));
    let mut s = f.open(
        title,
        "true error E",
        "normalized mass",
        &ticks(0.0, 1.0, 4),
        &ticks(0.0, top, 4),
    );
    let _ = writeln!(s, r#"<g fill="steelblue">"#);
    for (k, m) in masses.iter().enumerate() {
        let (l, r) = doc.bin_edges(k);
        let (x0, x1) = (f.x(l), f.x(r));
        let (y0, y1) = (f.y(0.0), f.y(*m));
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}"/>"#,
            x1 - x0,
            y0 - y1
        );
    }
    s.push_str("</g>\n");
    let e = doc.e_min();
    let _ = writeln!(
        s,
        r#"<line x1="{x:.2}" y1="{:.1}" x2="{x:.2}" y2="{:.1}" stroke="darkred" stroke-dasharray="4 3"/>"#,
        f.y(0.0),
        f.y(top),
        x = f.x(e)
    );
    s.push_str("</svg>\n");
    s
}

fn n_range(report: &Report) -> (f64, f64) {
    let lo = report.per_n.first().map_or(0, |r| r.n) as f64;
    let hi = report.per_n.last().map_or(1, |r| r.n) as f64;
    let pad = ((hi - lo) * 0.08).max(1.0);
    (lo - pad, hi + pad)
}

fn n_ticks(report: &Report) -> Vec<f64> {
    report.per_n.iter().map(|r| r.n as f64).collect()
}

/// Box-plot of solution test errors per n: quartile box, min/max whiskers,
/// median line and a red cross at the mean.
pub fn boxplot_svg(report: &Report, title: &str) -> String {
    let f = Frame::new(n_range(report), (0.0, 1.0));
    let mut s = f.open(
        title,
        "training set size n",
        "test error",
        &n_ticks(report),
        &ticks(0.0, 1.0, 4),
    );
    let half = (f.x(1.0) - f.x(0.0)).min(40.0) * 0.3;
    for row in &report.per_n {
        let Some(e) = &row.empirical else { continue };
        let q = &e.summary;
        let x = f.x(row.n as f64);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            f.y(q.min),
            f.y(q.max)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="lightgray" stroke="black"/>"#,
            x - half,
            f.y(q.q3),
            2.0 * half,
            f.y(q.q1) - f.y(q.q3)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="2"/>"#,
            x - half,
            x + half,
            y = f.y(q.median)
        );
        s.push_str(&cross(x, f.y(q.mean), "red"));
    }
    s.push_str("</svg>\n");
    s
}

fn cross(x: f64, y: f64, color: &str) -> String {
    format!(
        "<path d=\"M{:.2},{:.2} L{:.2},{:.2} M{:.2},{:.2} L{:.2},{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
        x - 4.0,
        y - 4.0,
        x + 4.0,
        y + 4.0,
        x - 4.0,
        y + 4.0,
        x + 4.0,
        y - 4.0
    )
}

fn plus(x: f64, y: f64, color: &str) -> String {
    format!(
        "<path d=\"M{:.2},{y:.2} L{:.2},{y:.2} M{x:.2},{:.2} L{x:.2},{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
        x - 5.0,
        x + 5.0,
        y - 5.0,
        y + 5.0
    )
}

/// Empirical mean test error (red x) against the DOC prediction (blue +).
pub fn comparison_svg(report: &Report, title: &str) -> String {
    let top = report
        .per_n
        .iter()
        .flat_map(|r| [r.predicted_mean_error, r.empirical.as_ref().map(|e| e.summary.mean)])
        .flatten()
        .fold(0.0, f64::max)
        .max(0.05)
        * 1.1;
    let f = Frame::new(n_range(report), (0.0, top));
    let mut s = f.open(
        title,
        "training set size n",
        "mean test error",
        &n_ticks(report),
        &ticks(0.0, top, 4),
    );
    for row in &report.per_n {
        let x = f.x(row.n as f64);
        if let Some(p) = row.predicted_mean_error {
            s.push_str(&plus(x, f.y(p), "blue"));
        }
        if let Some(e) = &row.empirical {
            s.push_str(&cross(x, f.y(e.summary.mean), "red"));
        }
    }
    let lx = f.width - f.right - 150.0;
    s.push_str(&cross(lx, f.top + 10.0, "red"));
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">empirical</text>"#,
        lx + 10.0,
        f.top + 14.0
    );
    s.push_str(&plus(lx, f.top + 28.0, "blue"));
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}">predicted</text>"#,
        lx + 10.0,
        f.top + 32.0
    );
    s.push_str("</svg>\n");
    s
}
