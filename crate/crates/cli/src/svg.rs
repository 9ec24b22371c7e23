//! Plain SVG drawings: the merged network and impulse-response paths.

use std::fmt::Write;

use technet::events::LpResult;
use technet::simnet::WeightMatrix;

fn header(out: &mut String, w: f64, h: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Circular layout; node area follows weighted degree, edge width and
/// opacity follow the arc weight.
pub fn network(wm: &WeightMatrix, title: &str) -> String {
    let n = wm.n();
    let size = 720.0;
    let (cx, cy, r) = (size / 2.0, size / 2.0 + 10.0, size / 2.0 - 70.0);
    let pos: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let a =
                std::f64::consts::TAU * i as f64 / n.max(1) as f64 - std::f64::consts::FRAC_PI_2;
            (cx + r * a.cos(), cy + r * a.sin())
        })
        .collect();
    let symmetric = wm.is_symmetric(1e-12);
    let max_w = wm.w.iter().copied().fold(0.0, f64::max);
    let degree: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| wm.w[(i, j)] + wm.w[(j, i)])
                .sum()
        })
        .collect();
    let max_d = degree.iter().copied().fold(0.0, f64::max);

    let mut out = String::new();
    header(&mut out, size, size + 20.0);
    let _ = writeln!(
        out,
        r#"<text x="{cx}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        escape(title)
    );
    let _ = writeln!(out, r#"<g stroke="steelblue" stroke-linecap="round">"#);
    for i in 0..n {
        for j in 0..n {
            let v = wm.w[(i, j)];
            if i == j || v <= 0.0 || max_w <= 0.0 || (symmetric && j < i) {
                continue;
            }
            let s = v / max_w;
            let _ = writeln!(
                out,
                r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke-width="{:.2}" stroke-opacity="{:.3}"/>"#,
                pos[i].0,
                pos[i].1,
                pos[j].0,
                pos[j].1,
                0.3 + 4.0 * s,
                0.1 + 0.7 * s
            );
        }
    }
    let _ = writeln!(out, "</g>");
    for (i, s) in wm.sectors.iter().enumerate() {
        let rad = 4.0
            + if max_d > 0.0 {
                10.0 * (degree[i] / max_d).sqrt()
            } else {
                0.0
            };
        let (x, y) = pos[i];
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="{rad:.1}" fill="darkorange" stroke="black" stroke-width="0.5"/>"#
        );
        let (lx, ly) = (cx + (x - cx) * 1.12, cy + (y - cy) * 1.12);
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" font-size="10" text-anchor="middle" dominant-baseline="middle">{}</text>"#,
            escape(s)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One panel per (shock, subperiod): shaded 95% and 90% bands, the
/// coefficient path and a zero line. Rows are shocks, columns subperiods.
pub fn irf(results: &[LpResult]) -> String {
    let mut shocks: Vec<&str> = Vec::new();
    let mut periods: Vec<&str> = Vec::new();
    for r in results {
        if !shocks.contains(&r.shock.tag()) {
            shocks.push(r.shock.tag());
        }
        if !periods.contains(&r.subperiod.as_str()) {
            periods.push(&r.subperiod);
        }
    }
    let (pw, ph, margin) = (360.0, 240.0, 50.0);
    let width = periods.len().max(1) as f64 * pw;
    let height = shocks.len().max(1) as f64 * ph;
    let mut out = String::new();
    header(&mut out, width, height);
    for r in results {
        let row = shocks.iter().position(|s| *s == r.shock.tag()).unwrap_or(0) as f64;
        let col = periods.iter().position(|p| *p == r.subperiod).unwrap_or(0) as f64;
        let (x0, y0) = (col * pw + margin, row * ph + 30.0);
        let (w, h) = (pw - margin - 15.0, ph - 70.0);
        let kmax = r.points.iter().map(|p| p.horizon).max().unwrap_or(1) as f64;
        // Unidentified horizons are left blank.
        let shown: Vec<_> = r
            .points
            .iter()
            .filter(|p| p.coef.is_finite() && p.se.is_finite())
            .collect();
        let mut lo = shown.iter().map(|p| p.lo95).fold(0.0, f64::min);
        let mut hi = shown.iter().map(|p| p.hi95).fold(0.0, f64::max);
        if hi <= lo {
            lo -= 1.0;
            hi += 1.0;
        }
        let pad = 0.05 * (hi - lo);
        let (lo, hi) = (lo - pad, hi + pad);
        let sx = |k: usize| {
            x0 + if kmax > 1.0 {
                (k as f64 - 1.0) / (kmax - 1.0) * w
            } else {
                w / 2.0
            }
        };
        let sy = |v: f64| y0 + (hi - v) / (hi - lo) * h;

        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{} shock, {}</text>"#,
            x0 + w / 2.0,
            y0 - 10.0,
            r.shock.tag(),
            escape(&r.subperiod)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.1}" y="{y0:.1}" width="{w:.1}" height="{h:.1}" fill="none" stroke="black"/>"#
        );
        let bands = [
            (
                shown
                    .iter()
                    .map(|p| (p.horizon, p.lo95, p.hi95))
                    .collect::<Vec<_>>(),
                "#c6dbef",
            ),
            (
                shown.iter().map(|p| (p.horizon, p.lo90, p.hi90)).collect(),
                "#6baed6",
            ),
        ];
        for (band, fill) in bands {
            let mut pts: Vec<String> = band
                .iter()
                .map(|&(k, _, up)| format!("{:.1},{:.1}", sx(k), sy(up)))
                .collect();
            pts.extend(
                band.iter()
                    .rev()
                    .map(|&(k, down, _)| format!("{:.1},{:.1}", sx(k), sy(down))),
            );
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{fill}" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let _ = writeln!(
            out,
            r#"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
            x0 + w,
            y = sy(0.0)
        );
        let path: Vec<String> = shown
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.horizon), sy(p.coef)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="navy" stroke-width="2"/>"#,
            path.join(" ")
        );
        for p in &shown {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="navy"/>"#,
                sx(p.horizon),
                sy(p.coef)
            );
        }
        for p in &r.points {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                sx(p.horizon),
                y0 + h + 14.0,
                p.horizon
            );
        }
        for v in [lo + pad, 0.0, hi - pad] {
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{v:.3}</text>"#,
                x0 - 4.0,
                sy(v) + 3.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">horizon (years)</text>"#,
            x0 + w / 2.0,
            y0 + h + 30.0
        );
    }
    out.push_str("</svg>\n");
    out
}
