//! Minimal deterministic SVG writer and axis helpers.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

/// Coordinates are written with two decimals so output is byte-stable.
pub(crate) fn num(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Affine map from data coordinates onto pixels. `range` may be decreasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisScale {
    pub domain: [f64; 2],
    pub range: [f64; 2],
}

impl AxisScale {
    pub fn new(domain: [f64; 2], range: [f64; 2]) -> Self {
        let domain = if domain[1] > domain[0] {
            domain
        } else {
            let pad = if domain[0] == 0.0 { 0.5 } else { domain[0].abs() * 0.05 };
            [domain[0] - pad, domain[0] + pad]
        };
        Self { domain, range }
    }

    pub fn map(&self, x: f64) -> f64 {
        let t = (x - self.domain[0]) / (self.domain[1] - self.domain[0]);
        self.range[0] + t * (self.range[1] - self.range[0])
    }

    pub fn ticks(&self, target: usize) -> Vec<f64> {
        nice_ticks(self.domain[0], self.domain[1], target)
    }
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let frac = raw / mag;
    let nice = if frac <= 1.0 {
        1.0
    } else if frac <= 2.0 {
        2.0
    } else if frac <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Round outward to multiples of a 1-2-5 step.
pub(crate) fn nice_domain(lo: f64, hi: f64, target: usize) -> [f64; 2] {
    if !(hi > lo) {
        return AxisScale::new([lo, lo], [0.0, 1.0]).domain;
    }
    let step = nice_step(hi - lo, target);
    [(lo / step).floor() * step, (hi / step).ceil() * step]
}

pub(crate) fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let step = nice_step(hi - lo, target);
    let first = (lo / step - 1e-9).ceil();
    let last = (hi / step + 1e-9).floor();
    (first as i64..=last as i64).map(|i| i as f64 * step).collect()
}

pub(crate) fn tick_label(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

pub(crate) struct SvgDoc {
    buf: String,
}

impl SvgDoc {
    pub fn new(width: f64, height: f64) -> Self {
        let mut buf = String::new();
        buf.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            buf,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">",
            w = num(width),
            h = num(height)
        );
        let _ = writeln!(
            buf,
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>",
            num(width),
            num(height)
        );
        Self { buf }
    }

    pub fn open(&mut self, attrs: &str) {
        let _ = writeln!(self.buf, "<g {attrs}>");
    }

    pub fn close(&mut self) {
        self.buf.push_str("</g>\n");
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, attrs: &str) {
        let _ = writeln!(
            self.buf,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" {attrs}/>",
            num(x1),
            num(y1),
            num(x2),
            num(y2)
        );
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, attrs: &str) {
        let _ = writeln!(
            self.buf,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" {attrs}/>",
            num(x),
            num(y),
            num(w.max(0.0)),
            num(h.max(0.0))
        );
    }

    pub fn circle(&mut self, cx: f64, cy: f64, r: f64, attrs: &str) {
        let _ = writeln!(
            self.buf,
            "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" {attrs}/>",
            num(cx),
            num(cy),
            num(r)
        );
    }

    fn points(pts: &[(f64, f64)]) -> String {
        pts.iter()
            .map(|(x, y)| format!("{},{}", num(*x), num(*y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], attrs: &str) {
        let _ = writeln!(self.buf, "<polygon points=\"{}\" {attrs}/>", Self::points(pts));
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], attrs: &str) {
        let _ = writeln!(
            self.buf,
            "<polyline points=\"{}\" fill=\"none\" {attrs}/>",
            Self::points(pts)
        );
    }

    pub fn text(&mut self, x: f64, y: f64, anchor: &str, content: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            num(x),
            num(y),
            escape(content)
        );
    }

    pub fn text_attrs(&mut self, x: f64, y: f64, attrs: &str, content: &str) {
        let _ = writeln!(
            self.buf,
            "<text x=\"{}\" y=\"{}\" {attrs}>{}</text>",
            num(x),
            num(y),
            escape(content)
        );
    }

    /// Horizontal axis with ticks at the bottom of a plotting area.
    pub fn x_axis(&mut self, scale: &AxisScale, y: f64, label: &str) {
        self.open("class=\"x-axis\" stroke=\"#000000\"");
        self.line(scale.range[0], y, scale.range[1], y, "");
        self.close();
        for t in scale.ticks(6) {
            let x = scale.map(t);
            self.line(x, y, x, y + 4.0, "stroke=\"#000000\"");
            self.text(x, y + 15.0, "middle", &tick_label(t));
        }
        let mid = (scale.range[0] + scale.range[1]) / 2.0;
        self.text_attrs(mid, y + 32.0, "text-anchor=\"middle\" font-weight=\"bold\"", label);
    }

    /// Vertical axis with ticks at the left of a plotting area.
    pub fn y_axis(&mut self, scale: &AxisScale, x: f64, label: &str) {
        self.open("class=\"y-axis\" stroke=\"#000000\"");
        self.line(x, scale.range[0], x, scale.range[1], "");
        self.close();
        for t in scale.ticks(6) {
            let y = scale.map(t);
            self.line(x - 4.0, y, x, y, "stroke=\"#000000\"");
            self.text(x - 6.0, y + 4.0, "end", &tick_label(t));
        }
        let mid = (scale.range[0] + scale.range[1]) / 2.0;
        self.text_attrs(
            x - 42.0,
            mid,
            &format!(
                "text-anchor=\"middle\" font-weight=\"bold\" transform=\"rotate(-90 {} {})\"",
                num(x - 42.0),
                num(mid)
            ),
            label,
        );
    }

    pub fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}
