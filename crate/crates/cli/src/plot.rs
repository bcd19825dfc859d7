//! Stacked-trace SVG plots.

use std::fmt::Write as _;
use std::path::Path;

use ivaclean_core::Recording;

use crate::CliError;

const WIDTH: f64 = 960.0;
const LEFT: f64 = 72.0;
const RIGHT: f64 = 16.0;
const TOP: f64 = 16.0;
const ROW: f64 = 72.0;
const AXIS: f64 = 44.0;

const STYLES: [&str; 2] = [
    r##"fill="none" stroke="#1f4e79" stroke-width="1""##,
    r##"fill="none" stroke="#c0392b" stroke-width="1" stroke-dasharray="3,2""##,
];

/// Resolves channel names to row indices, preferring an exact match over a
/// case-insensitive one. An empty selection means every channel.
pub fn select_channels(rec: &Recording, channels: &[String]) -> Result<Vec<usize>, CliError> {
    if channels.is_empty() {
        return Ok((0..rec.n_channels()).collect());
    }
    channels
        .iter()
        .map(|name| {
            rec.channel_index(name)
                .or_else(|| rec.labels.iter().position(|l| l.eq_ignore_ascii_case(name)))
                .ok_or_else(|| CliError::UnknownChannel {
                name: name.clone(),
                valid: rec.labels.clone(),
            })
        })
        .collect()
}

fn tick_step(duration_s: f64) -> f64 {
    let mut step = 0.001;
    loop {
        for m in [1.0, 2.0, 5.0] {
            if duration_s / (step * m) <= 10.0 {
                return step * m;
            }
        }
        step *= 10.0;
    }
}

/// Per pixel column, the first, min, max and last samples in time order, so
/// long traces keep their envelope without one vertex per sample.
fn decimate(xs: &[f64], columns: usize) -> Vec<(usize, f64)> {
    let n = xs.len();
    if n <= 2 * columns {
        return xs.iter().copied().enumerate().collect();
    }
    let mut out = Vec::with_capacity(4 * columns);
    for c in 0..columns {
        let (lo, hi) = (c * n / columns, ((c + 1) * n / columns).max(c * n / columns + 1));
        let win = &xs[lo..hi];
        let (mut imin, mut imax) = (0, 0);
        for (i, v) in win.iter().enumerate() {
            if *v < win[imin] {
                imin = i;
            }
            if *v > win[imax] {
                imax = i;
            }
        }
        let mut picks = vec![0, imin, imax, win.len() - 1];
        picks.sort_unstable();
        picks.dedup();
        out.extend(picks.into_iter().map(|i| (lo + i, win[i])));
    }
    out
}

/// Renders `recs[0]` and, if present, `recs[1]` as an overlay in a second
/// stroke style. One row per selected channel, time in seconds along x.
pub fn render_svg(recs: &[&Recording], channels: &[String]) -> Result<String, CliError> {
    let Some(&base) = recs.first() else {
        return Err(CliError::Usage("nothing to plot".into()));
    };
    if recs.len() > 2 {
        return Err(CliError::Usage("at most one overlay recording".into()));
    }
    for other in &recs[1..] {
        if other.data.dim() != base.data.dim() {
            return Err(CliError::OverlayMismatch {
                base: base.data.dim(),
                overlay: other.data.dim(),
            });
        }
    }
    let rows = select_channels(base, channels)?;
    let n = base.n_samples();
    let plot_w = WIDTH - LEFT - RIGHT;
    let height = TOP + ROW * rows.len() as f64 + AXIS;
    let duration = n.saturating_sub(1) as f64 / base.fs_hz;
    let x_of = |t: usize| LEFT + if n > 1 { t as f64 / (n - 1) as f64 * plot_w } else { 0.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for (r, &ch) in rows.iter().enumerate() {
        let mid = TOP + ROW * (r as f64 + 0.5);
        let row = base.data.row(ch);
        let mean = row.sum() / n as f64;
        let peak = recs
            .iter()
            .flat_map(|rec| rec.data.row(ch).to_vec())
            .fold(0.0_f64, |m, v| m.max((v - mean).abs()));
        let gain = if peak > 0.0 { 0.45 * ROW / peak } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LEFT - 8.0,
            mid,
            escape(&base.labels[ch])
        );
        for (rec, style) in recs.iter().zip(STYLES) {
            let xs = rec.data.row(ch).to_vec();
            let points: Vec<String> = decimate(&xs, plot_w as usize)
                .into_iter()
                .map(|(t, v)| format!("{:.2},{:.2}", x_of(t), mid - (v - mean) * gain))
                .collect();
            let _ = writeln!(svg, r#"<polyline {style} points="{}"/>"#, points.join(" "));
        }
    }

    let axis_y = TOP + ROW * rows.len() as f64;
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT:.2}" y1="{axis_y:.2}" x2="{:.2}" y2="{axis_y:.2}" stroke="black"/>"#,
        LEFT + plot_w
    );
    let step = tick_step(duration.max(1e-3));
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    let mut k = 0usize;
    while k as f64 * step <= duration + 1e-9 {
        let t = k as f64 * step;
        let x = LEFT + if duration > 0.0 { t / duration * plot_w } else { 0.0 };
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{axis_y:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t:.decimals$}</text>"#,
            axis_y + 4.0,
            axis_y + 16.0
        );
        k += 1;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#,
        LEFT + plot_w / 2.0,
        axis_y + 34.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn plot_svg(recs: &[&Recording], channels: &[String], path: &Path) -> Result<(), CliError> {
    let svg = render_svg(recs, channels)?;
    std::fs::write(path, svg).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
