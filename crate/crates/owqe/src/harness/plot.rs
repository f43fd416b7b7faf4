//! SVG renderings of run-matrix outputs.
//!
//! Three hand-rolled chart kinds cover everything the harness reports:
//! learning curves with confidence bands, grouped performance bars with
//! whiskers and a best-single-run reference line, and per-member traces
//! (ensemble weights, action counts). The emitters are pure functions from
//! numbers to SVG text; [`emit_plots`] wires them to the files a matrix
//! directory holds.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::harness::config::ExperimentConfig;
use crate::harness::runner::{run_dir, MatrixSummary};
use crate::metrics::confidence_interval;
use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 76.0;
const MARGIN_RIGHT: f64 = 18.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// One learning curve: a mean line inside a confidence band. A zero-width
/// band (`lo == hi == mean`) renders as just the line.
#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub label: String,
    pub mean: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// One plain line, e.g. a member's weight over episodes.
#[derive(Debug, Clone)]
pub struct TraceSeries {
    pub label: String,
    pub values: Vec<f64>,
}

/// One bar with an optional whisker halfwidth.
#[derive(Debug, Clone)]
pub struct Bar {
    pub label: String,
    pub value: f64,
    pub halfwidth: Option<f64>,
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps data coordinates onto the fixed pixel frame, padding degenerate
/// ranges so flat data still renders.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Frame {
        let ((mut x0, mut x1), (mut y0, mut y1)) = (x, y);
        if !(x1 > x0) {
            x0 -= 1.0;
            x1 += 1.0;
        }
        if !(y1 > y0) {
            y0 -= 1.0;
            y1 += 1.0;
        }
        Frame { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let bottom = HEIGHT - MARGIN_BOTTOM;
        bottom - (v - self.y0) / (self.y1 - self.y0) * (bottom - MARGIN_TOP)
    }
}

fn format_tick(v: f64) -> String {
    let a = v.abs();
    if a >= 1000.0 {
        format!("{v:.0}")
    } else if a >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}

fn padded(mut min: f64, mut max: f64) -> (f64, f64) {
    if !(max > min) {
        return (min - 1.0, max + 1.0);
    }
    let pad = 0.05 * (max - min);
    min -= pad;
    max += pad;
    (min, max)
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
}

fn draw_title_and_axes(out: &mut String, title: &str, x_label: &str, y_label: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        xml_escape(title)
    );
    // Grid and tick labels.
    for i in 0..=4 {
        let vy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let py = f.y(vy);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#dddddd"/>"##,
            f.x(f.x0),
            f.x(f.x1)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"#,
            f.x(f.x0) - 6.0,
            py + 4.0,
            format_tick(vy)
        );
    }
    for i in 0..=4 {
        let vx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let px = f.x(vx);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            f.y(f.y0) + 16.0,
            format_tick(vx)
        );
    }
    // Axis lines.
    let _ = writeln!(
        out,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        f.x(f.x0),
        f.y(f.y0),
        f.x(f.x1),
        f.y(f.y0)
    );
    let _ = writeln!(
        out,
        r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black"/>"#,
        f.x(f.x0),
        f.y(f.y0),
        f.x(f.x0),
        f.y(f.y1)
    );
    // Axis labels.
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        (f.x(f.x0) + f.x(f.x1)) / 2.0,
        HEIGHT - 14.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (f.y(f.y0) + f.y(f.y1)) / 2.0,
        (f.y(f.y0) + f.y(f.y1)) / 2.0,
        xml_escape(y_label)
    );
}

fn draw_legend(out: &mut String, labels: &[String]) {
    let x = WIDTH - MARGIN_RIGHT - 170.0;
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN_TOP + 14.0 + 16.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{color}" stroke-width="2"/>"#,
            y - 4.0,
            x + 22.0,
            y - 4.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{y:.1}" font-size="11">{}</text>"#,
            x + 28.0,
            xml_escape(label)
        );
    }
}

fn polyline_points(f: &Frame, values: &[f64], x_of: impl Fn(usize) -> f64) -> String {
    let mut pts = String::new();
    for (i, &v) in values.iter().enumerate() {
        let _ = write!(pts, "{:.2},{:.2} ", f.x(x_of(i)), f.y(v));
    }
    pts.trim_end().to_string()
}

/// Learning curves with confidence bands over a shared episode axis.
pub fn learning_curve_svg(title: &str, y_label: &str, series: &[CurveSeries]) -> String {
    let episodes = series.iter().map(|s| s.mean.len()).max().unwrap_or(0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for v in s.lo.iter().chain(&s.hi).chain(&s.mean) {
            y_min = y_min.min(*v);
            y_max = y_max.max(*v);
        }
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let (y_min, y_max) = padded(y_min, y_max);
    let f = Frame::new((1.0, episodes as f64), (y_min, y_max));

    let mut out = String::new();
    svg_open(&mut out);
    draw_title_and_axes(&mut out, title, "episode", y_label, &f);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.lo.iter().zip(&s.hi).any(|(a, b)| a != b) {
            // Band outline: forward along the upper edge, back along the lower.
            let mut pts = String::new();
            for (j, &v) in s.hi.iter().enumerate() {
                let _ = write!(pts, "{:.2},{:.2} ", f.x((j + 1) as f64), f.y(v));
            }
            for (j, &v) in s.lo.iter().enumerate().rev() {
                let _ = write!(pts, "{:.2},{:.2} ", f.x((j + 1) as f64), f.y(v));
            }
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
                pts.trim_end()
            );
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
            polyline_points(&f, &s.mean, |i| (i + 1) as f64)
        );
    }
    draw_legend(&mut out, &series.iter().map(|s| s.label.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Per-member traces (weights, action counts) over episodes.
pub fn trace_svg(title: &str, y_label: &str, series: &[TraceSeries]) -> String {
    let episodes = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for v in series.iter().flat_map(|s| &s.values) {
        y_min = y_min.min(*v);
        y_max = y_max.max(*v);
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    let (y_min, y_max) = padded(y_min, y_max);
    let f = Frame::new((1.0, episodes as f64), (y_min, y_max));

    let mut out = String::new();
    svg_open(&mut out);
    draw_title_and_axes(&mut out, title, "episode", y_label, &f);
    for (i, s) in series.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.6"/>"#,
            polyline_points(&f, &s.values, |i| (i + 1) as f64),
            PALETTE[i % PALETTE.len()]
        );
    }
    draw_legend(&mut out, &series.iter().map(|s| s.label.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Performance bars with whiskers and an optional dashed reference line.
pub fn bar_chart_svg(
    title: &str,
    y_label: &str,
    bars: &[Bar],
    reference: Option<(f64, &str)>,
) -> String {
    let mut y_min = 0.0f64;
    let mut y_max = 0.0f64;
    for b in bars {
        let hw = b.halfwidth.unwrap_or(0.0);
        y_min = y_min.min(b.value - hw);
        y_max = y_max.max(b.value + hw);
    }
    if let Some((r, _)) = reference {
        y_min = y_min.min(r);
        y_max = y_max.max(r);
    }
    let (y_min, y_max) = padded(y_min, y_max);
    let f = Frame::new((0.0, bars.len().max(1) as f64), (y_min, y_max));

    let mut out = String::new();
    svg_open(&mut out);
    draw_title_and_axes(&mut out, title, "", y_label, &f);
    for (i, b) in bars.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let center = i as f64 + 0.5;
        let half = 0.3;
        let x = f.x(center - half);
        let w = f.x(center + half) - x;
        let y_zero = f.y(0.0);
        let y_val = f.y(b.value);
        let (top, height) = if y_val <= y_zero {
            (y_val, y_zero - y_val)
        } else {
            (y_zero, y_val - y_zero)
        };
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{x:.1}" y="{top:.1}" width="{w:.1}" height="{height:.1}" fill="{color}" fill-opacity="0.8"/>"#
        );
        if let Some(hw) = b.halfwidth {
            let cx = f.x(center);
            let (ylo, yhi) = (f.y(b.value - hw), f.y(b.value + hw));
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.1}" y1="{ylo:.1}" x2="{cx:.1}" y2="{yhi:.1}" stroke="black" stroke-width="1.2"/>"#
            );
            for y in [ylo, yhi] {
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-width="1.2"/>"#,
                    cx - 6.0,
                    cx + 6.0
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            f.x(center),
            f.y(f.y0) + 30.0,
            xml_escape(&b.label)
        );
    }
    if let Some((r, label)) = reference {
        let y = f.y(r);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#444444" stroke-width="1.2" stroke-dasharray="6 4"/>"##,
            f.x(f.x0),
            f.x(f.x1)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"#,
            f.x(f.x1) - 4.0,
            y - 5.0,
            xml_escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Reads the numeric columns of a per-run CSV, dropping the episode column.
fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let _episode = fields.next();
        let row = fields
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), ln + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-episode mean and confidence band over several runs' single-column
/// curves, truncated at the last episode any run reached.
fn mean_band(curves: &[Vec<f64>], level: f64) -> CurveSeries {
    let episodes = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(episodes);
    let mut lo = Vec::with_capacity(episodes);
    let mut hi = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let samples: Vec<f64> = curves.iter().filter_map(|c| c.get(e).copied()).collect();
        let m = samples.iter().sum::<f64>() / samples.len() as f64;
        let hw = confidence_interval(&samples, level).map(|(_, hw)| hw).unwrap_or(0.0);
        mean.push(m);
        lo.push(m - hw);
        hi.push(m + hw);
    }
    CurveSeries {
        label: String::new(),
        mean,
        lo,
        hi,
    }
}

/// Renders every plot a matrix directory supports:
/// `learning_curves.svg`, `performance.svg`, and per-strategy
/// `weights_<name>.svg` / `actions_<name>.svg`.
pub fn emit_plots(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let config_path = out_dir.join("resolved_config.json");
    let summary_path = out_dir.join("summary.json");
    let mut missing: Vec<String> = [&config_path, &summary_path]
        .iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    let (resolved, summary) = if missing.is_empty() {
        let resolved = ExperimentConfig::parse_file(&config_path)?;
        let summary: MatrixSummary =
            serde_json::from_str(&fs::read_to_string(&summary_path)?)
                .map_err(|e| Error::config(format!("{}: {e}", summary_path.display())))?;
        for &strategy in &resolved.strategies {
            for outcome in &summary.strategies[strategy.name()].runs {
                if outcome.episodes > 0 {
                    let curve = run_dir(out_dir, strategy, outcome.run).join("curves.csv");
                    if !curve.is_file() {
                        missing.push(curve.display().to_string());
                    }
                }
            }
        }
        (Some(resolved), Some(summary))
    } else {
        (None, None)
    };
    if !missing.is_empty() {
        return Err(Error::config(format!("missing plot inputs: {}", missing.join(", "))));
    }
    let (resolved, summary) = (resolved.unwrap(), summary.unwrap());

    let mut written = Vec::new();
    let title_base = format!("{} / {} / {:?}", summary.env, summary.label, summary.mode);

    // Learning curves across strategies.
    let mut curve_series = Vec::new();
    for &strategy in &resolved.strategies {
        let runs = &summary.strategies[strategy.name()].runs;
        let curves: Vec<Vec<f64>> = runs
            .iter()
            .filter(|r| r.episodes > 0)
            .map(|r| {
                read_csv_rows(&run_dir(out_dir, strategy, r.run).join("curves.csv"))
                    .map(|rows| rows.into_iter().map(|row| row[0]).collect::<Vec<f64>>())
            })
            .collect::<Result<_>>()?;
        if curves.is_empty() {
            continue;
        }
        let mut series = mean_band(&curves, summary.ci_level);
        series.label = strategy.name().to_string();
        curve_series.push(series);
    }
    let path = out_dir.join("learning_curves.svg");
    fs::write(
        &path,
        learning_curve_svg(
            &format!("{title_base}: learning curves"),
            "cumulative reward",
            &curve_series,
        ),
    )?;
    written.push(path);

    // Final-performance bars.
    let bars: Vec<Bar> = resolved
        .strategies
        .iter()
        .filter_map(|s| {
            let agg = &summary.strategies[s.name()];
            agg.mean.map(|value| Bar {
                label: s.name().to_string(),
                value,
                halfwidth: agg.ci_halfwidth,
            })
        })
        .collect();
    let path = out_dir.join("performance.svg");
    fs::write(
        &path,
        bar_chart_svg(
            &format!("{title_base}: final performance"),
            "final performance",
            &bars,
            summary.best_single_run.map(|b| (b, "best single run")),
        ),
    )?;
    written.push(path);

    // Weight and action traces, averaged over completed runs.
    for &strategy in &resolved.strategies {
        let runs = &summary.strategies[strategy.name()].runs;
        let complete: Vec<usize> =
            runs.iter().filter(|r| r.episodes > 0).map(|r| r.run).collect();
        if complete.is_empty() {
            continue;
        }
        for (file, stem, y_label) in [
            ("weights.csv", "weights", "mean ensemble weight"),
            ("actions.csv", "actions", "mean action count"),
        ] {
            if file == "weights.csv" && !strategy.learn_weights() {
                continue;
            }
            let mut per_run = Vec::new();
            for &run in &complete {
                per_run.push(read_csv_rows(&run_dir(out_dir, strategy, run).join(file))?);
            }
            let members = per_run[0].first().map_or(0, Vec::len);
            let episodes = per_run.iter().map(Vec::len).max().unwrap_or(0);
            let series: Vec<TraceSeries> = (0..members)
                .map(|m| {
                    let values = (0..episodes)
                        .map(|e| {
                            let samples: Vec<f64> = per_run
                                .iter()
                                .filter_map(|rows| rows.get(e).map(|row| row[m]))
                                .collect();
                            samples.iter().sum::<f64>() / samples.len().max(1) as f64
                        })
                        .collect();
                    TraceSeries {
                        label: format!("member {}", m + 1),
                        values,
                    }
                })
                .collect();
            let path = out_dir.join(format!("{stem}_{}.svg", strategy.name()));
            fs::write(
                &path,
                trace_svg(&format!("{title_base}: {} {stem}", strategy.name()), y_label, &series),
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_well_formed(svg: &str) {
        roxmltree::Document::parse(svg).unwrap_or_else(|e| panic!("bad XML: {e}\n{svg}"));
    }

    #[test]
    fn flat_single_series_renders_a_line_without_a_band() {
        let series = [CurveSeries {
            label: "constant".into(),
            mean: vec![2.5; 30],
            lo: vec![2.5; 30],
            hi: vec![2.5; 30],
        }];
        let svg = learning_curve_svg("flat", "reward", &series);
        assert_well_formed(&svg);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 0);
    }

    #[test]
    fn banded_series_renders_polygon_and_line() {
        let mean: Vec<f64> = (0..50).map(|i| (i as f64 * 0.1).sin()).collect();
        let lo: Vec<f64> = mean.iter().map(|v| v - 0.2).collect();
        let hi: Vec<f64> = mean.iter().map(|v| v + 0.2).collect();
        let series = [CurveSeries {
            label: "noisy".into(),
            mean,
            lo,
            hi,
        }];
        let svg = learning_curve_svg("banded", "reward", &series);
        assert_well_formed(&svg);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<polygon").count(), 1);
    }

    #[test]
    fn bar_chart_draws_one_rect_per_bar_plus_reference() {
        let bars = [
            Bar {
                label: "Average".into(),
                value: -120.0,
                halfwidth: Some(15.0),
            },
            Bar {
                label: "SoftmaxTDError".into(),
                value: -80.0,
                halfwidth: Some(10.0),
            },
        ];
        let svg = bar_chart_svg("bars", "final performance", &bars, Some((-60.0, "best run")));
        assert_well_formed(&svg);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 2);
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn traces_render_one_polyline_per_member() {
        let series: Vec<TraceSeries> = (0..8)
            .map(|m| TraceSeries {
                label: format!("member {}", m + 1),
                values: (0..40).map(|e| ((e + m) as f64 * 0.2).cos()).collect(),
            })
            .collect();
        let svg = trace_svg("weights", "weight", &series);
        assert_well_formed(&svg);
        assert_eq!(svg.matches("<polyline").count(), 8);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = trace_svg(
            "a & b <c>",
            "y",
            &[TraceSeries {
                label: "x & y".into(),
                values: vec![1.0, 2.0],
            }],
        );
        assert_well_formed(&svg);
        assert!(svg.contains("a &amp; b &lt;c&gt;"));
    }

    #[test]
    fn empty_chart_is_still_well_formed() {
        assert_well_formed(&learning_curve_svg("empty", "y", &[]));
        assert_well_formed(&bar_chart_svg("empty", "y", &[], None));
        assert_well_formed(&trace_svg("empty", "y", &[]));
    }

    #[test]
    fn missing_inputs_are_listed_by_name() {
        let tmp = tempfile::tempdir().unwrap();
        let err = emit_plots(tmp.path()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("resolved_config.json"), "{msg}");
        assert!(msg.contains("summary.json"), "{msg}");
    }
}
