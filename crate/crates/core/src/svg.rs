//! Minimal self-contained SVG plots. Presentation only.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Opinion trajectories: one grey polyline per agent, the manipulators in red.
///
/// `times[j]` is the time of `opinions[j]`; every row must have the same length.
pub fn trajectory_svg(title: &str, times: &[u64], opinions: &[Vec<f64>], manipulator: &[f64]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let t_max = times.last().copied().unwrap_or(0).max(1) as f64;
    let sx = |t: u64| PAD + (W - 2.0 * PAD) * t as f64 / t_max;
    let sy = |x: f64| H - PAD - (H - 2.0 * PAD) * (x + 1.0) / 2.0;

    let _ = write!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for (y, label) in [(-1.0, "-1"), (0.0, "0"), (1.0, "1")] {
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{label}</text>"#,
            PAD - 6.0,
            sy(y) + 4.0
        );
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">t = {}</text>"#,
        W / 2.0,
        H - 12.0,
        t_max
    );

    let n = opinions.first().map_or(0, Vec::len);
    let polyline = |out: &mut String, pts: &mut dyn Iterator<Item = (u64, f64)>, style: &str| {
        out.push_str("<polyline fill=\"none\" ");
        out.push_str(style);
        out.push_str(" points=\"");
        for (t, x) in pts {
            let _ = write!(out, "{:.2},{:.2} ", sx(t), sy(x));
        }
        out.push_str("\"/>");
    };
    for i in 0..n {
        let mut pts = times.iter().zip(opinions).map(|(&t, row)| (t, row[i]));
        polyline(&mut out, &mut pts, r##"stroke="#555" stroke-width="0.6" stroke-opacity="0.7""##);
    }
    if !manipulator.is_empty() {
        let mut pts = times.iter().copied().zip(manipulator.iter().copied());
        polyline(&mut out, &mut pts, r#"stroke="red" stroke-width="1.5""#);
    }
    out.push_str("</svg>\n");
    out
}

fn color(v: f64, lo: f64, hi: f64) -> String {
    let s = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
    // blue -> white -> red
    let (r, g, b) = if s < 0.5 {
        let u = s * 2.0;
        (u, u, 1.0)
    } else {
        let u = (1.0 - s) * 2.0;
        (1.0, u, u)
    };
    format!(
        "rgb({},{},{})",
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8
    )
}

/// Heatmap with `K` on the vertical axis and `t_delta` on the horizontal one.
/// `values` is row-major over `k_values × tdelta_values`.
pub fn heatmap_svg(title: &str, k_values: &[usize], tdelta_values: &[u64], values: &[f64]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (rows, cols) = (k_values.len(), tdelta_values.len());
    if rows == 0 || cols == 0 {
        out.push_str("</svg>\n");
        return out;
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let cw = (W - 2.0 * PAD) / cols as f64;
    let ch = (H - 2.0 * PAD) / rows as f64;
    for (r, &k) in k_values.iter().enumerate() {
        // largest K at the top
        let y = PAD + (rows - 1 - r) as f64 * ch;
        for (c, _) in tdelta_values.iter().enumerate() {
            let v = values[r * cols + c];
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{v}</title></rect>"#,
                PAD + c as f64 * cw,
                y,
                cw + 0.2,
                ch + 0.2,
                color(v, lo, hi)
            );
        }
        if rows <= 16 || r % (rows / 8).max(1) == 0 {
            let _ = write!(
                out,
                r#"<text x="{}" y="{:.2}" text-anchor="end">{k}</text>"#,
                PAD - 6.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    let _ = write!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">t_delta {} .. {}   range [{:.3}, {:.3}]</text>"#,
        W / 2.0,
        H - 12.0,
        tdelta_values[0],
        tdelta_values[cols - 1],
        lo,
        hi
    );
    out.push_str("</svg>\n");
    out
}
