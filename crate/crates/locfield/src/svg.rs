//! Minimal SVG plots for command output.
//!
//! Two chart kinds cover everything the CLI emits: a line chart for
//! one-dimensional surfaces and bandwidth profiles, and a colored cell grid
//! for two-dimensional surfaces. The output is plain hand-assembled SVG —
//! fixed canvas, one `<polyline>` per series or one `<rect>` per cell —
//! with no styling framework, so the files stay small and diffable.

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 56.0;

/// Line colors, cycled across series.
const PALETTE: [&str; 6] = [
    "#1f6fb2", "#d1495b", "#3a9d5d", "#8e6fb8", "#c98a2b", "#4d4d4d",
];

/// One labelled curve.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Finite min/max over a sequence, ignoring NaN/inf entries.
fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo <= hi {
        Some((lo, hi))
    } else {
        None
    }
}

/// Widen a degenerate range so the scale map stays well defined.
fn pad_range((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
        (lo - pad, hi + pad)
    }
}

/// Round-numbered tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = mag
        * if norm < 1.5 {
            1.0
        } else if norm < 3.5 {
            2.0
        } else if norm < 7.5 {
            5.0
        } else {
            10.0
        };
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        // Snap values like 0.30000000000000004 back onto the grid.
        out.push((t / step).round() * step);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    } else {
        format!("{v:.2e}")
    }
}

struct Frame {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn sx(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x_lo) / (self.x_hi - self.x_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn sy(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM
            - (y - self.y_lo) / (self.y_hi - self.y_lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn chart_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"13\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
}

fn axes(frame: &Frame, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let x0 = MARGIN_LEFT;
    let x1 = WIDTH - MARGIN_RIGHT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    s.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for t in ticks(frame.x_lo, frame.x_hi) {
        let sx = frame.sx(t);
        s.push_str(&format!(
            "<line x1=\"{sx:.2}\" y1=\"{y0}\" x2=\"{sx:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{sx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 5.0,
            y0 + 20.0,
            fmt_tick(t)
        ));
    }
    for t in ticks(frame.y_lo, frame.y_hi) {
        let sy = frame.sy(t);
        s.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{sy:.2}\" x2=\"{x0}\" y2=\"{sy:.2}\" stroke=\"black\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            x0 - 5.0,
            x0 - 9.0,
            sy + 4.0,
            fmt_tick(t)
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"18\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 14.0,
        escape(xlabel),
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    ));
    s
}

/// Render labelled curves as an SVG line chart.
///
/// Non-finite points break the polyline rather than poisoning it, so a
/// series with failed entries still shows its valid stretches.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xr = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)))
        .unwrap_or((0.0, 1.0));
    let yr = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)))
        .unwrap_or((0.0, 1.0));
    let (x_lo, x_hi) = pad_range(xr);
    let (y_lo, y_hi) = pad_range(yr);
    let frame = Frame { x_lo, x_hi, y_lo, y_hi };

    let mut svg = chart_header(title);
    svg.push_str(&axes(&frame, xlabel, ylabel));
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        // Split at non-finite points.
        let mut run: Vec<(f64, f64)> = Vec::new();
        let flush = |run: &mut Vec<(f64, f64)>, svg: &mut String| {
            if run.len() == 1 {
                let (x, y) = run[0];
                svg.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>\n",
                    frame.sx(x),
                    frame.sy(y)
                ));
            } else if run.len() > 1 {
                let pts: Vec<String> = run
                    .iter()
                    .map(|&(x, y)| format!("{:.2},{:.2}", frame.sx(x), frame.sy(y)))
                    .collect();
                svg.push_str(&format!(
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                    pts.join(" ")
                ));
            }
            run.clear();
        };
        for &(x, y) in s.points {
            if x.is_finite() && y.is_finite() {
                run.push((x, y));
            } else {
                flush(&mut run, &mut svg);
            }
        }
        flush(&mut run, &mut svg);
        // Legend entry.
        let ly = MARGIN_TOP + 16.0 * si as f64 + 8.0;
        let lx = WIDTH - MARGIN_RIGHT - 150.0;
        svg.push_str(&format!(
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{:.1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(s.label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Five-stop perceptual color ramp for `u` in `[0, 1]`.
fn ramp(u: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let u = u.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let i = (u.floor() as usize).min(STOPS.len() - 2);
    let f = u - i as f64;
    let mix = |a: f64, b: f64| (a + f * (b - a)).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(STOPS[i].0, STOPS[i + 1].0),
        mix(STOPS[i].1, STOPS[i + 1].1),
        mix(STOPS[i].2, STOPS[i + 1].2)
    )
}

/// Render a two-dimensional field as a colored cell grid.
///
/// `values` is indexed `i * ys.len() + j` for column centers `xs[i]` and
/// row centers `ys[j]`; non-finite cells are drawn hatched gray. A small
/// color bar with the finite min/max annotates the scale.
pub fn heat_map(title: &str, xs: &[f64], ys: &[f64], values: &[f64]) -> String {
    assert_eq!(values.len(), xs.len() * ys.len(), "grid shape mismatch");
    let (v_lo, v_hi) = pad_range(finite_range(values.iter().copied()).unwrap_or((0.0, 1.0)));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT - 70.0; // room for the color bar
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let cw = plot_w / xs.len() as f64;
    let ch = plot_h / ys.len() as f64;

    let mut svg = chart_header(title);
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let v = values[i * ys.len() + j];
            let fill = if v.is_finite() {
                ramp((v - v_lo) / (v_hi - v_lo))
            } else {
                "#bbbbbb".to_string()
            };
            let px = MARGIN_LEFT + i as f64 * cw;
            // Row 0 (smallest y) sits at the bottom.
            let py = HEIGHT - MARGIN_BOTTOM - (j + 1) as f64 * ch;
            svg.push_str(&format!(
                "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"{fill}\">\
                 <title>({}, {}) = {v:.6}</title></rect>\n",
                fmt_tick(x),
                fmt_tick(y)
            ));
        }
    }
    // Axis labels at the corner cells.
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
        MARGIN_LEFT + cw / 2.0,
        HEIGHT - MARGIN_BOTTOM + 20.0,
        fmt_tick(xs[0]),
        MARGIN_LEFT + plot_w - cw / 2.0,
        HEIGHT - MARGIN_BOTTOM + 20.0,
        fmt_tick(xs[xs.len() - 1]),
        MARGIN_LEFT - 6.0,
        HEIGHT - MARGIN_BOTTOM - ch / 2.0 + 4.0,
        fmt_tick(ys[0]),
        MARGIN_LEFT - 6.0,
        MARGIN_TOP + ch / 2.0 + 4.0,
        fmt_tick(ys[ys.len() - 1]),
    ));
    // Color bar.
    let bar_x = MARGIN_LEFT + plot_w + 26.0;
    let steps = 64;
    let sh = plot_h / steps as f64;
    for k in 0..steps {
        let u = (k as f64 + 0.5) / steps as f64;
        let py = HEIGHT - MARGIN_BOTTOM - (k + 1) as f64 * sh;
        svg.push_str(&format!(
            "<rect x=\"{bar_x:.2}\" y=\"{py:.2}\" width=\"16\" height=\"{:.2}\" fill=\"{}\"/>\n",
            sh + 0.5,
            ramp(u)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n\
         <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
        bar_x + 20.0,
        HEIGHT - MARGIN_BOTTOM,
        fmt_tick(v_lo),
        bar_x + 20.0,
        MARGIN_TOP + 10.0,
        fmt_tick(v_hi),
    ));
    svg.push_str("</svg>\n");
    svg
}
