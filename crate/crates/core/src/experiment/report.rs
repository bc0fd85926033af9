//! Report files: CSV tables, SVG line charts and a JSON summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, ReportFormat};
use crate::attack::SweepRecord;
use crate::error::{Error, Result};
use crate::nn::EpochStats;

pub const SWEEP_CSV: &str = "sweep.csv";
pub const DETAIL_CSV: &str = "detail.csv";
pub const ACCURACY_SVG: &str = "accuracy_vs_epsilon.svg";
pub const SSIM_SVG: &str = "ssim_vs_epsilon.svg";
pub const REPORT_JSON: &str = "report.json";

pub const SWEEP_HEADER: &str = "epsilon,accuracy,mean_ssim,n_samples";
pub const DETAIL_HEADER: &str = "id,epsilon,true_label,clean_label,adv_label,flipped,ssim";

/// Six significant digits, `.` as decimal separator, trailing zeros
/// trimmed. Independent of locale.
pub fn format_number(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.5e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = if exp >= 5 {
        format!("{digits}{}", "0".repeat((exp - 5) as usize))
    } else if exp >= 0 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    if out.contains('.') {
        out.truncate(out.trim_end_matches('0').trim_end_matches('.').len());
    }
    if negative {
        out.insert(0, '-');
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub data_seconds: f64,
    pub train_seconds: f64,
    pub attack_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub toolkit_version: String,
    pub config: ExperimentConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub clean_accuracy: f64,
    pub history: Vec<EpochStats>,
    pub sweep: Vec<SweepRecord>,
    pub timings: Timings,
}

/// One line of `detail.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailRow {
    pub id: String,
    pub epsilon: f64,
    pub true_label: usize,
    pub clean_label: usize,
    pub adv_label: usize,
    pub flipped: bool,
    pub ssim: f64,
}

impl ExperimentReport {
    pub fn detail_rows(&self) -> Vec<DetailRow> {
        self.sweep
            .iter()
            .flat_map(|r| {
                r.samples.iter().map(move |s| DetailRow {
                    id: s.id.clone(),
                    epsilon: r.epsilon,
                    true_label: s.true_label,
                    clean_label: s.clean_label,
                    adv_label: s.adv_label,
                    flipped: s.flipped,
                    ssim: s.ssim,
                })
            })
            .collect()
    }
}

pub fn sweep_csv(sweep: &[SweepRecord]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in sweep {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_number(r.epsilon),
            format_number(r.accuracy),
            format_number(r.mean_ssim),
            r.n_samples
        );
    }
    out
}

pub fn detail_csv(sweep: &[SweepRecord]) -> String {
    let mut out = format!("{DETAIL_HEADER}\n");
    for r in sweep {
        for s in &r.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                s.id,
                format_number(r.epsilon),
                s.true_label,
                s.clean_label,
                s.adv_label,
                u8::from(s.flipped),
                format_number(s.ssim)
            );
        }
    }
    out
}

/// `(epsilon, accuracy, mean_ssim, n_samples)` rows of a `sweep.csv`.
pub fn parse_sweep_csv(text: &str) -> Result<Vec<(f64, f64, f64, usize)>> {
    let mut lines = text.lines();
    if lines.next() != Some(SWEEP_HEADER) {
        return Err(Error::Data(format!(
            "sweep table must start with `{SWEEP_HEADER}`"
        )));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let bad = || Error::Data(format!("sweep row {}: {line:?}", i + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok((
                num(f[0])?,
                num(f[1])?,
                num(f[2])?,
                f[3].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Standalone SVG line chart. The plot group carries its axis extents as
/// `data-x-min` … `data-y-max` attributes and every marker carries its data
/// coordinates as `data-x`/`data-y`, so the file can be checked by parsing.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 60.0;
    let x_max = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let x_max = if x_max > 0.0 { x_max } else { 1.0 };
    let x_min = points.iter().map(|p| p.0).fold(0.0, f64::min);
    let y_min = points.iter().map(|p| p.1).fold(0.0, f64::min);
    let y_max = points.iter().map(|p| p.1).fold(1.0, f64::max);
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + (x - x_min) / (x_max - x_min) * pw;
    let sy = |y: f64| TOP + ph - (y - y_min) / (y_max - y_min) * ph;
    let px = |v: f64| format!("{v:.2}");

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<g id="plot" data-x-min="{}" data-x-max="{}" data-y-min="{}" data-y-max="{}">"#,
        format_number(x_min),
        format_number(x_max),
        format_number(y_min),
        format_number(y_max)
    );
    let _ = writeln!(
        s,
        r#"<rect class="frame" x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let (xv, yv) = (x_min + t * (x_max - x_min), y_min + t * (y_max - y_min));
        let (gx, gy) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" text-anchor="middle">{4}</text>"##,
            px(gx),
            TOP,
            TOP + ph,
            TOP + ph + 18.0,
            format_number(xv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end">{5}</text>"##,
            LEFT,
            px(gy),
            LEFT + pw,
            LEFT - 6.0,
            px(gy + 4.0),
            format_number(yv)
        );
    }
    if !points.is_empty() {
        let path: Vec<String> = points
            .iter()
            .map(|&(x, y)| format!("{},{}", px(sx(x)), px(sy(y))))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
            path.join(" ")
        );
    }
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r##"<circle class="point" cx="{}" cy="{}" r="3.5" fill="#1f77b4" data-x="{}" data-y="{}"/>"##,
            px(sx(x)),
            px(sy(y)),
            format_number(x),
            format_number(y)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the two accuracy/SSIM charts for `(epsilon, accuracy, ssim)` rows.
pub fn write_charts(dir: &Path, rows: &[(f64, f64, f64)]) -> Result<Vec<PathBuf>> {
    let acc: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let sim: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.2)).collect();
    Ok(vec![
        write(
            dir,
            ACCURACY_SVG,
            &line_chart_svg(
                "Accuracy vs. perturbation size",
                "epsilon",
                "accuracy",
                &acc,
            ),
        )?,
        write(
            dir,
            SSIM_SVG,
            &line_chart_svg(
                "Mean SSIM vs. perturbation size",
                "epsilon",
                "mean SSIM",
                &sim,
            ),
        )?,
    ])
}

/// Writes the sweep tables (and charts) requested by `formats`.
pub fn emit_sweep(
    sweep: &[SweepRecord],
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    if formats.contains(&ReportFormat::Csv) {
        written.push(write(dir, SWEEP_CSV, &sweep_csv(sweep))?);
        written.push(write(dir, DETAIL_CSV, &detail_csv(sweep))?);
    }
    if formats.contains(&ReportFormat::Svg) {
        let rows: Vec<_> = sweep
            .iter()
            .map(|r| (r.epsilon, r.accuracy, r.mean_ssim))
            .collect();
        written.extend(write_charts(dir, &rows)?);
    }
    Ok(written)
}

/// Writes every report file selected in the report's config.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = emit_sweep(&report.sweep, dir, &report.config.formats)?;
    if report.config.wants(ReportFormat::Json) {
        let json = serde_json::to_string_pretty(report).expect("report serialises");
        written.push(write(dir, REPORT_JSON, &(json + "\n"))?);
    }
    Ok(written)
}
