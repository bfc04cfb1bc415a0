//! Minimal horizontal bar charts as SVG text.

use std::fmt::Write;

const BAR_H: u32 = 22;
const GAP: u32 = 6;
const LABEL_W: u32 = 180;
const PLOT_W: u32 = 360;
const TOP: u32 = 36;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Bars of `(label, percent)`; the axis always spans 0..100.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let height = TOP + bars.len() as u32 * (BAR_H + GAP) + 24;
    let width = LABEL_W + PLOT_W + 70;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<text x="8" y="20" font-size="14" font-weight="bold">{}</text>"#, escape(title));
    let axis_y = TOP + bars.len() as u32 * (BAR_H + GAP);
    for tick in [0u32, 25, 50, 75, 100] {
        let x = LABEL_W + PLOT_W * tick / 100;
        let _ = writeln!(out, r##"<line x1="{x}" y1="{TOP}" x2="{x}" y2="{axis_y}" stroke="#ddd"/>"##);
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{tick}%</text>"#, axis_y + 16);
    }
    for (i, (label, pct)) in bars.iter().enumerate() {
        let y = TOP + i as u32 * (BAR_H + GAP);
        let w = PLOT_W as f64 * pct.clamp(0.0, 100.0) / 100.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL_W - 8,
            y + BAR_H / 2 + 4,
            escape(label)
        );
        let _ = writeln!(out, r##"<rect x="{LABEL_W}" y="{y}" width="{w:.2}" height="{BAR_H}" fill="#4477aa"/>"##);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}">{pct:.1}%</text>"#, LABEL_W as f64 + w + 4.0, y + BAR_H / 2 + 4);
    }
    out.push_str("</svg>\n");
    out
}
