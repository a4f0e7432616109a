//! Report emission: one calibration, four artifacts.
//!
//! `metrics.csv` is the machine-readable table (floats printed with
//! Rust's shortest round-trip formatting, so parsing it back loses
//! nothing), `report.json` the full structured record, `report.md` the
//! human summary, `loss_curves.svg` the per-plug validation curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibrationMode, PlugOutcome};
use crate::error::{Error, Result};
use crate::eval::{MetricsTable, MtlcReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Overall,
    Variable,
    Horizon,
}

impl Scope {
    fn name(self) -> &'static str {
        match self {
            Scope::Overall => "overall",
            Scope::Variable => "variable",
            Scope::Horizon => "horizon",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "overall" => Some(Scope::Overall),
            "variable" => Some(Scope::Variable),
            "horizon" => Some(Scope::Horizon),
            _ => None,
        }
    }
}

/// One line of the metrics CSV. `index` is the variable or horizon index,
/// absent for the overall row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub label: String,
    pub scope: Scope,
    pub index: Option<usize>,
    pub samples: usize,
    pub mse: f64,
    pub mae: f64,
}

/// Flattens a metrics table into rows under one label (e.g. "base",
/// "calibrated").
pub fn metrics_rows(label: &str, table: &MetricsTable) -> Vec<MetricsRow> {
    let mut rows = Vec::with_capacity(1 + table.per_variable.len() + table.per_horizon.len());
    rows.push(MetricsRow {
        label: label.to_string(),
        scope: Scope::Overall,
        index: None,
        samples: table.samples,
        mse: table.overall.mse,
        mae: table.overall.mae,
    });
    for (i, m) in table.per_variable.iter().enumerate() {
        rows.push(MetricsRow {
            label: label.to_string(),
            scope: Scope::Variable,
            index: Some(i),
            samples: table.samples,
            mse: m.mse,
            mae: m.mae,
        });
    }
    for (j, m) in table.per_horizon.iter().enumerate() {
        rows.push(MetricsRow {
            label: label.to_string(),
            scope: Scope::Horizon,
            index: Some(j),
            samples: table.samples,
            mse: m.mse,
            mae: m.mae,
        });
    }
    rows
}

pub const METRICS_HEADER: &str = "label,scope,index,samples,mse,mae";

/// Renders rows to CSV. No rows → header only.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        let idx = r.index.map(|i| i.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.label,
            r.scope.name(),
            idx,
            r.samples,
            r.mse,
            r.mae
        );
    }
    out
}

/// Parses what `metrics_csv` produced. Labels must not contain commas —
/// the emitters never write such labels.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "metrics csv header is {other:?}, want {METRICS_HEADER:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "metrics csv line {}: {} fields, want 6",
                ln + 2,
                fields.len()
            )));
        }
        let scope = Scope::parse(fields[1]).ok_or_else(|| {
            Error::Format(format!("metrics csv line {}: unknown scope {:?}", ln + 2, fields[1]))
        })?;
        let index = if fields[2].is_empty() {
            None
        } else {
            Some(fields[2].parse::<usize>().map_err(|e| {
                Error::Format(format!("metrics csv line {}: bad index: {e}", ln + 2))
            })?)
        };
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("metrics csv line {}: bad {what}: {e}", ln + 2)))
        };
        rows.push(MetricsRow {
            label: fields[0].to_string(),
            scope,
            index,
            samples: fields[3]
                .parse::<usize>()
                .map_err(|e| Error::Format(format!("metrics csv line {}: bad samples: {e}", ln + 2)))?,
            mse: parse_f(fields[4], "mse")?,
            mae: parse_f(fields[5], "mae")?,
        });
    }
    Ok(rows)
}

/// Everything one calibration produced, in scoring terms: the socket
/// alone, the calibrated forecast, and how the plugs got there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset: String,
    pub fingerprint: String,
    pub socket_digest: String,
    pub mode: CalibrationMode,
    pub seed: u64,
    /// Socket predictions scored bare.
    pub base: MetricsTable,
    /// Plug outputs scored against the same targets.
    pub calibrated: MetricsTable,
    pub promotion_pct: f64,
    pub mtlc: MtlcReport,
    pub outcomes: Vec<PlugOutcome>,
}

/// Markdown summary. Percentages carry three decimals; raw losses keep
/// full precision (the CSV is the citable source anyway).
pub fn report_markdown(report: &Report) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Calibration report — {}", report.dataset);
    let _ = writeln!(md);
    let _ = writeln!(md, "- mode: `{}`", report.mode.name());
    let _ = writeln!(md, "- seed: {}", report.seed);
    let _ = writeln!(md, "- socket: `{}`", &report.socket_digest[..16.min(report.socket_digest.len())]);
    let _ = writeln!(md, "- test windows: {}", report.base.samples);
    let _ = writeln!(md);
    let _ = writeln!(md, "| forecast | MSE | MAE |");
    let _ = writeln!(md, "|---|---|---|");
    let _ = writeln!(
        md,
        "| socket alone | {} | {} |",
        report.base.overall.mse, report.base.overall.mae
    );
    let _ = writeln!(
        md,
        "| calibrated | {} | {} |",
        report.calibrated.overall.mse, report.calibrated.overall.mae
    );
    let _ = writeln!(md);
    let _ = writeln!(md, "**Promotion: {:.3}%**", report.promotion_pct);
    let _ = writeln!(md);
    let _ = writeln!(md, "## Early stopping");
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "Stop epochs span {}–{} (range {}, mean {:.1}). A shared monitor would have forced one schedule on all of them.",
        report.mtlc.min, report.mtlc.max, report.mtlc.range, report.mtlc.mean
    );
    let _ = writeln!(md);
    let _ = writeln!(md, "| plug | io | stop epoch | best epoch | best val loss |");
    let _ = writeln!(md, "|---|---|---|---|---|");
    for o in &report.outcomes {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            o.plug_id, o.io, o.stop_epoch, o.best_epoch, o.best_val
        );
    }
    md
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// A self-contained SVG 1.1 line plot of one curve per series
/// (epoch on x, loss on y). No scripts, no external references.
pub fn curves_svg(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let (width, height) = (800.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 160.0, 40.0, 50.0);
    let (px, py) = (width - ml - mr, height - mt - mb);

    let max_len = series.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|(_, c)| c.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);

    let x_of = |epoch: usize| -> f64 {
        if max_len <= 1 {
            ml + px / 2.0
        } else {
            ml + px * (epoch as f64 / (max_len - 1) as f64)
        }
    };
    let y_of = |v: f64| -> f64 { mt + py * (1.0 - (v - lo) / (hi - lo)) };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        ml + px / 2.0,
        xml_escape(title)
    );
    // axes
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{}" stroke="black"/>"#,
        mt + py
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{ml}" y1="{}" x2="{}" y2="{0}" stroke="black"/>"#,
        mt + py,
        ml + px
    );
    // y ticks
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{y}" x2="{ml}" y2="{y}" stroke="black"/>"#,
            ml - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{v:.4}</text>"#,
            ml - 9.0,
            y + 4.0
        );
    }
    // x ticks: at most 8, integer epochs
    if max_len > 0 {
        let step = ((max_len as f64 / 8.0).ceil() as usize).max(1);
        let mut e = 1;
        while e <= max_len {
            let x = x_of(e - 1);
            let _ = writeln!(
                svg,
                r#"<line x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="black"/>"#,
                mt + py,
                mt + py + 5.0
            );
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="middle">{e}</text>"#,
                mt + py + 18.0
            );
            e += step;
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        ml + px / 2.0,
        height - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {0})">validation loss</text>"#,
        mt + py / 2.0
    );
    // curves + legend
    for (i, (name, curve)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !curve.is_empty() {
            let pts: Vec<String> = curve
                .iter()
                .enumerate()
                .map(|(e, &v)| format!("{:.2},{:.2}", x_of(e), y_of(v)))
                .collect();
            if curve.len() == 1 {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                    x_of(0),
                    y_of(curve[0])
                );
            } else {
                let _ = writeln!(
                    svg,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    pts.join(" ")
                );
            }
        }
        let ly = mt + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#,
            ml + px + 12.0,
            ly
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{}</text>"#,
            ml + px + 27.0,
            ly + 9.0,
            xml_escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the four report artifacts into `dir`.
pub fn emit_report(dir: &Path, report: &Report) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = metrics_rows("base", &report.base);
    rows.extend(metrics_rows("calibrated", &report.calibrated));
    let csv_path = dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(&rows)).map_err(|e| Error::io(&csv_path, e))?;

    let json_path = dir.join("report.json");
    let body = serde_json::to_string_pretty(report).map_err(|e| Error::json(&json_path, e))?;
    fs::write(&json_path, body).map_err(|e| Error::io(&json_path, e))?;

    let md_path = dir.join("report.md");
    fs::write(&md_path, report_markdown(report)).map_err(|e| Error::io(&md_path, e))?;

    let curves: Vec<(String, Vec<f64>)> = report
        .outcomes
        .iter()
        .map(|o| (format!("plug {}", o.plug_id), o.val_curve.clone()))
        .collect();
    let svg_path = dir.join("loss_curves.svg");
    fs::write(&svg_path, curves_svg(&report.dataset, &curves))
        .map_err(|e| Error::io(&svg_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{Metric, MetricsTable};

    fn table() -> MetricsTable {
        MetricsTable {
            samples: 17,
            overall: Metric { mse: 0.125, mae: 0.25 },
            per_variable: vec![
                Metric { mse: 0.1, mae: 0.2 },
                Metric { mse: 0.15, mae: 0.3 },
            ],
            per_horizon: vec![Metric { mse: 0.12345678901234567, mae: 0.5 }],
        }
    }

    #[test]
    fn metrics_csv_round_trips_exactly() {
        let rows = metrics_rows("base", &table());
        let text = metrics_csv(&rows);
        let back = parse_metrics_csv(&text).unwrap();
        assert_eq!(rows, back);
        // full f64 precision survives the text round trip
        assert_eq!(back[3].mse, 0.12345678901234567);
    }

    #[test]
    fn empty_metrics_csv_is_header_only() {
        let text = metrics_csv(&[]);
        assert_eq!(text, format!("{METRICS_HEADER}\n"));
        assert_eq!(parse_metrics_csv(&text).unwrap(), vec![]);
    }

    #[test]
    fn malformed_metrics_csv_is_rejected() {
        assert!(parse_metrics_csv("nope\n").is_err());
        let bad = format!("{METRICS_HEADER}\nbase,overall,,17,0.1\n");
        assert!(parse_metrics_csv(&bad).is_err());
        let bad_scope = format!("{METRICS_HEADER}\nbase,galaxy,,17,0.1,0.2\n");
        assert!(parse_metrics_csv(&bad_scope).is_err());
    }

    #[test]
    fn svg_is_self_contained_and_one_shape_per_series() {
        let series = vec![
            ("plug 0".to_string(), vec![1.0, 0.8, 0.7, 0.65]),
            ("plug 1".to_string(), vec![0.9, 0.85]),
            ("dot".to_string(), vec![0.5]),
        ];
        let svg = curves_svg("synthetic", &series);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(svg.contains(r#"viewBox="0 0 800 480""#));
        // no external fetches: the only URL is the xmlns namespace
        assert_eq!(svg.matches("http").count(), 1);
        assert!(!svg.contains("<script"));
        // degenerate inputs still render
        let flat = curves_svg("flat", &[("c".into(), vec![0.3, 0.3, 0.3])]);
        assert!(flat.contains("<polyline"));
        let empty = curves_svg("empty", &[]);
        assert!(empty.starts_with("<svg "));
    }

    #[test]
    fn markdown_reports_promotion_to_three_decimals() {
        use crate::calibrate::{CalibrationMode, PlugOutcome};
        use crate::eval::MtlcReport;
        let report = Report {
            dataset: "synthetic".into(),
            fingerprint: "fp".into(),
            socket_digest: "0123456789abcdef0123".into(),
            mode: CalibrationMode::PerGroup,
            seed: 3,
            base: table(),
            calibrated: table(),
            promotion_pct: 12.34567,
            mtlc: MtlcReport {
                stop_epochs: vec![4, 9],
                min: 4,
                max: 9,
                range: 5,
                mean: 6.5,
                std: 2.5,
            },
            outcomes: vec![PlugOutcome {
                plug_id: 0,
                io: 4,
                stop_epoch: 4,
                best_epoch: 2,
                best_val: 0.25,
                train_curve: vec![1.0; 4],
                val_curve: vec![0.5; 4],
                digest: "d".into(),
            }],
        };
        let md = report_markdown(&report);
        assert!(md.contains("12.346%"), "{md}");
        assert!(md.contains("| 0 | 4 | 4 | 2 | 0.25 |"), "{md}");
        let dir = tempfile::tempdir().unwrap();
        emit_report(dir.path(), &report).unwrap();
        for f in ["metrics.csv", "report.json", "report.md", "loss_curves.svg"] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let rows = parse_metrics_csv(&text).unwrap();
        assert_eq!(rows.len(), 8); // two labels × (1 overall + 2 vars + 1 horizon)
    }
}
