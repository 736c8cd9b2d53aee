use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::{mean_rows, EvalReport};
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "method,missing_rate,seed,auc,f1,ci_low,ci_high,n_test";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{}",
            r.method, r.missing_rate, r.seed, r.auc, r.f1, r.ci_low, r.ci_high, r.n_test
        );
    }
    out
}

/// Δ against the Filling baseline, only for rows that have one.
pub fn deltas_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,missing_rate,seed,delta_auc,delta_f1\n");
    for r in reports {
        if let (Some(a), Some(f)) = (r.delta_auc, r.delta_f1) {
            let _ = writeln!(out, "{},{:.6},{},{:.6},{:.6}", r.method, r.missing_rate, r.seed, a, f);
        }
    }
    out
}

pub fn report_json(reports: &[EvalReport]) -> Result<String> {
    let means: Vec<serde_json::Value> = mean_rows(reports)
        .into_iter()
        .map(|(m, rate, a, f)| serde_json::json!({"method": m, "missing_rate": rate, "auc": a, "f1": f}))
        .collect();
    let doc = serde_json::json!({ "reports": reports, "means": means });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Data(e.to_string()))
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Mean AUC (solid) and F1 (dashed) against missing rate, one colour per method.
pub fn report_svg(reports: &[EvalReport]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let means = mean_rows(reports);
    let mut methods: Vec<&str> = Vec::new();
    for (m, ..) in &means {
        if !methods.contains(&m.as_str()) {
            methods.push(m);
        }
    }
    let x = |rate: f64| pad + rate * (w - 2.0 * pad);
    let y = |v: f64| h - pad - v * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{} H{}" stroke="black" fill="none"/>"#,
        h - pad,
        w - pad
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{v:.2}</text>"#, x(v), h - pad + 16.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v:.2}</text>"#, pad - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">missing rate</text>"#, w / 2.0, h - 12.0);
    for (k, m) in methods.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<&(String, f64, f64, f64)> = means.iter().filter(|r| r.0 == *m).collect();
        for (idx, dash) in [(2usize, ""), (3usize, r#" stroke-dasharray="5,4""#)] {
            let d: Vec<String> = pts
                .iter()
                .map(|p| {
                    let v = if idx == 2 { p.2 } else { p.3 };
                    format!("{:.2},{:.2}", x(p.1), y(v))
                })
                .collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#, d.join(" "));
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{m}</text>"#,
            w - pad + 4.0 - 110.0,
            pad + 16.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `report.{csv,json,svg}` (as requested) plus `deltas.csv` under `dir`.
pub fn emit_report(reports: &[EvalReport], dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::Data("no reports to emit".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, text: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::file(&p, e))?;
        written.push(p);
        Ok(())
    };
    for f in formats {
        match f {
            ReportFormat::Csv => {
                put("report.csv", report_csv(reports))?;
                put("deltas.csv", deltas_csv(reports))?;
            }
            ReportFormat::Json => put("report.json", report_json(reports)?)?,
            ReportFormat::Svg => put("report.svg", report_svg(reports))?,
        }
    }
    Ok(written)
}

/// Console table with 4-decimal metrics.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = format!("{:<14} {:>6} {:>6} {:>8} {:>8} {:>8} {:>8}\n", "method", "rate", "seed", "auc", "f1", "ci_low", "ci_high");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<14} {:>6.2} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            r.method, r.missing_rate, r.seed, r.auc, r.f1, r.ci_low, r.ci_high
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row() -> EvalReport {
        EvalReport {
            method: "bd".into(),
            missing_rate: 0.8,
            seed: 3,
            auc: 0.81234567,
            f1: 0.7,
            ci_low: 0.7,
            ci_high: 0.9,
            n_test: 120,
            delta_auc: None,
            delta_f1: None,
        }
    }

    #[test]
    fn one_report_two_lines() {
        let csv = report_csv(&[row()]);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap(), "bd,0.800000,3,0.812346,0.700000,0.700000,0.900000,120");
    }

    #[test]
    fn svg_is_wellformed_text() {
        let s = report_svg(&[row()]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
    }
}
