//! Result emission: CSV tables with a fixed plain-decimal number format, and
//! static SVG line plots written directly as markup.
//!
//! Every writer is deterministic: the same input produces byte-identical
//! files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::analysis::{FlutterResult, SweepRecord, TimeHistory, CHANNELS};
use crate::beam::Mode;
use crate::error::{Error, Result};

/// Significant digits of every number written to a CSV file.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Column order of `sweep.csv`.
pub const SWEEP_COLUMNS: [&str; 12] = [
    "sigma",
    "alpha_trim",
    "tip_deflection_over_span",
    "V_f_undeformed",
    "V_f_prestressed",
    "phugoid_re",
    "phugoid_im",
    "short_period_re",
    "short_period_im",
    "gust_peak_root_moment",
    "gust_peak_tip_deflection",
    "failures",
];

/// Formats `x` in plain decimal notation (no exponent) rounded to
/// [`SIGNIFICANT_DIGITS`] significant digits.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // the exponent after rounding to the requested precision
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let exp: i32 = sci[sci.find('e').expect("exponent marker") + 1..]
        .parse()
        .expect("exponent");
    if exp >= SIGNIFICANT_DIGITS as i32 {
        // integer digits beyond the precision become zeros
        let mantissa = &sci[..sci.find('e').expect("exponent marker")];
        let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
        let zeros = "0".repeat(exp as usize + 1 - SIGNIFICANT_DIGITS);
        return format!("{digits}{zeros}");
    }
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// CSV text of a time history, one row per instant.
pub fn timehistory_csv(history: &TimeHistory) -> String {
    let mut out = CHANNELS.join(",");
    out.push('\n');
    for row in &history.rows {
        let cells: Vec<String> = row.iter().map(|&v| format_sig(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_timehistory_csv(history: &TimeHistory, path: &Path) -> Result<()> {
    if history.rows.is_empty() {
        return Err(Error::InvalidInput("time history is empty".into()));
    }
    write_file(path, &timehistory_csv(history))
}

/// Parses a time-history CSV back into rows.
pub fn parse_timehistory_csv(text: &str) -> Result<Vec<[f64; 9]>> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::InvalidInput("empty CSV".into()))?;
    if header != CHANNELS.join(",") {
        return Err(Error::InvalidInput(format!("unexpected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut row = [0.0; 9];
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(Error::InvalidInput(format!("line {}: expected 9 fields, got {}", i + 2, cells.len())));
            }
            for (k, c) in cells.iter().enumerate() {
                row[k] = c
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("line {}: bad number `{c}`", i + 2)))?;
            }
            Ok(row)
        })
        .collect()
}

fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV text of a σ sweep, one row per record in the given order.
pub fn sweep_csv(records: &[SweepRecord]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&sweep_row(r));
        out.push('\n');
    }
    out
}

/// One `sweep.csv` data row (without line terminator).
pub fn sweep_row(r: &SweepRecord) -> String {
    let cells = [
        format_sig(r.sigma),
        opt(r.alpha_trim),
        opt(r.tip_deflection_over_span),
        opt(r.v_f_undeformed),
        opt(r.v_f_prestressed),
        opt(r.phugoid_eigenvalue.map(|e| e.0)),
        opt(r.phugoid_eigenvalue.map(|e| e.1)),
        opt(r.short_period_eigenvalue.map(|e| e.0)),
        opt(r.short_period_eigenvalue.map(|e| e.1)),
        opt(r.gust_peak_root_moment),
        opt(r.gust_peak_tip_deflection),
        csv_quote(&r.failures.join("; ")),
    ];
    cells.join(",")
}

/// `(V, max real part)` samples of a flutter search.
pub fn damping_trace_csv(result: &FlutterResult) -> String {
    let mut out = String::from("V,max_real_part\n");
    for &(v, re) in &result.damping_trace {
        let _ = writeln!(out, "{},{}", format_sig(v), format_sig(re));
    }
    out
}

/// Natural-frequency table.
pub fn modal_csv(modes: &[Mode]) -> String {
    let mut out = String::from("mode,omega,label\n");
    for (i, m) in modes.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, format_sig(m.omega), m.label);
    }
    out
}

/// Spanwise deflection of the linear and nonlinear static solutions.
pub struct StaticProfile {
    /// Spanwise station [m].
    pub s: Vec<f64>,
    pub linear: Vec<[f64; 3]>,
    pub nonlinear: Vec<[f64; 3]>,
}

pub fn static_csv(p: &StaticProfile) -> String {
    let mut out = String::from("s,u_x_linear,u_y_linear,u_z_linear,u_x_nonlinear,u_y_nonlinear,u_z_nonlinear\n");
    for ((s, l), n) in p.s.iter().zip(&p.linear).zip(&p.nonlinear) {
        let cells: Vec<String> = std::iter::once(*s).chain(l.iter().copied()).chain(n.iter().copied()).map(format_sig).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One curve of a line plot.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw a marker at every point.
    pub markers: bool,
}

/// Static two-dimensional line plot.
#[derive(Clone, Debug)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round step of about `span / target` (1, 2 or 5 times a power of ten).
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn tick_label(v: f64, step: f64) -> String {
    if v.abs() < 1e-12 * step.max(1e-300) {
        return "0".into();
    }
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

/// Axis range padded to whole ticks; degenerate ranges are widened.
fn axis(lo: f64, hi: f64) -> (f64, f64, f64) {
    let (mut lo, mut hi) = (lo, hi);
    if hi - lo <= 1e-12 * (lo.abs() + hi.abs()).max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        lo -= pad;
        hi += pad;
    }
    let step = nice_step(hi - lo, 5.0);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

/// Renders `plot` as a standalone SVG document.
pub fn render_svg(plot: &LinePlot) -> String {
    let tx = |x: f64| if plot.log_x { x.log10() } else { x };
    let pts: Vec<(f64, f64)> = plot
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|p| p.0.is_finite() && p.1.is_finite() && (!plot.log_x || p.0 > 0.0))
        .map(|(x, y)| (tx(x), y))
        .collect();
    let (x0, x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    let (y0, y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let (x0, x1, xs) = if plot.log_x {
        let (a, b) = (x0.floor(), x1.ceil());
        (a, if b > a { b } else { a + 1.0 }, 1.0)
    } else {
        axis(x0, x1)
    };
    let (y0, y1, ys) = axis(y0, y1);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    // grid and tick labels
    let nx = ((x1 - x0) / xs).round() as usize;
    for i in 0..=nx {
        let v = x0 + i as f64 * xs;
        let x = sx(v);
        let label = if plot.log_x { format!("1e{}", v.round() as i32) } else { tick_label(v, xs) };
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd"/>"##,
            TOP,
            TOP + ph
        );
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#, TOP + ph + 16.0);
    }
    let ny = ((y1 - y0) / ys).round() as usize;
    for i in 0..=ny {
        let v = y0 + i as f64 * ys;
        let y = sy(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            tick_label(v, ys)
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 14.0,
        escape(&plot.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&plot.y_label)
    );
    for (k, series) in plot.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mapped: Vec<(f64, f64)> = series
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite() && (!plot.log_x || p.0 > 0.0))
            .map(|&(x, y)| (sx(tx(x)), sy(y)))
            .collect();
        if mapped.len() > 1 {
            let path: Vec<String> = mapped.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
        }
        if series.markers {
            for (x, y) in &mapped {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="{color}"/>"#);
            }
        }
        let ly = TOP + 14.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            LEFT + 10.0,
            ly - 4.0,
            LEFT + 30.0,
            ly - 4.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, LEFT + 36.0, escape(&series.name));
    }
    s.push_str("</svg>\n");
    s
}

fn has_points(plot: &LinePlot) -> bool {
    plot.series.iter().any(|s| !s.points.is_empty())
}

/// Writes the plots that have data; returns the files written. Plots without
/// any points are skipped.
pub fn write_plots(plots: &[(LinePlot, &str)], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (plot, name) in plots {
        if !has_points(plot) {
            continue;
        }
        let path = dir.join(name);
        write_file(&path, &render_svg(plot))?;
        written.push(path);
    }
    Ok(written)
}

/// Tip deflection and root bending moment against time.
pub fn gust_plots(history: &TimeHistory) -> Vec<(LinePlot, &'static str)> {
    let series = |k: usize, name: &str| Series {
        name: name.into(),
        points: history.rows.iter().map(|r| (r[0], r[k])).collect(),
        markers: false,
    };
    vec![
        (
            LinePlot {
                title: "Tip deflection".into(),
                x_label: "time t [s]".into(),
                y_label: "tip deflection [m]".into(),
                log_x: false,
                series: vec![series(1, "tip_defl")],
            },
            "tip_deflection.svg",
        ),
        (
            LinePlot {
                title: "Root bending moment".into(),
                x_label: "time t [s]".into(),
                y_label: "root bending moment [N·m]".into(),
                log_x: false,
                series: vec![series(2, "root_Mx")],
            },
            "root_moment.svg",
        ),
    ]
}

/// Trim angle of attack and flutter speeds against σ.
pub fn sweep_plots(records: &[SweepRecord]) -> Vec<(LinePlot, &'static str)> {
    let pick = |f: &dyn Fn(&SweepRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        records.iter().filter_map(|r| f(r).map(|v| (r.sigma, v))).collect()
    };
    vec![
        (
            LinePlot {
                title: "Trim angle of attack".into(),
                x_label: "stiffness parameter σ [-]".into(),
                y_label: "α_trim [rad]".into(),
                log_x: true,
                series: vec![Series {
                    name: "α_trim".into(),
                    points: pick(&|r| r.alpha_trim),
                    markers: true,
                }],
            },
            "alpha_trim_vs_sigma.svg",
        ),
        (
            LinePlot {
                title: "Flutter speed".into(),
                x_label: "stiffness parameter σ [-]".into(),
                y_label: "flutter speed V_f [m/s]".into(),
                log_x: true,
                series: vec![
                    Series {
                        name: "undeformed".into(),
                        points: pick(&|r| r.v_f_undeformed),
                        markers: true,
                    },
                    Series {
                        name: "prestressed".into(),
                        points: pick(&|r| r.v_f_prestressed),
                        markers: true,
                    },
                ],
            },
            "flutter_speed_vs_sigma.svg",
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_nine_digit_format() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1.00000000");
        assert_eq!(format_sig(-2.5), "-2.50000000");
        assert_eq!(format_sig(1234.56789012), "1234.56789");
        assert_eq!(format_sig(9.9999999999), "10.0000000");
        assert_eq!(format_sig(1.5e-4), "0.000150000000");
        assert_eq!(format_sig(12345678912.0), "12345678900");
        assert_eq!(format_sig(-123456789.4), "-123456789");
    }

    #[test]
    fn nice_steps() {
        for (span, step) in [(10.0, 2.0), (1.0, 0.2), (37.0, 5.0), (80.0, 20.0), (0.03, 0.005)] {
            assert!((nice_step(span, 5.0) - step).abs() < 1e-12 * step, "{span}");
        }
    }
}
