//! Table rendering for experiment results, in Markdown or CSV, with a
//! footnote cross-checking the published reference figures against their own
//! size arithmetic.

use std::path::Path;

use scwt_core::reference;

use crate::experiment::ExperimentResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format {other:?} (expected md or csv)")),
        }
    }
}

/// Round half away from zero at `decimals` places (`f64::round` semantics).
fn round_half_away(v: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).round() / scale
}

pub fn format_loss(v: f64) -> String {
    format!("{:.4}", round_half_away(v, 4))
}

pub fn format_percent(v: f64) -> String {
    format!("{:.2}", round_half_away(v, 2))
}

fn footnote_lines() -> Vec<String> {
    let mut lines = Vec::new();
    for d in reference::discrepancies(0.02) {
        lines.push(format!(
            "Exp. {}: reference table prints {:.2}% reduction, but its printed size implies {:.2}% against the {:.2} MB baseline ({:.2} points apart).",
            d.exp_id,
            d.printed_percent,
            d.computed_percent,
            reference::BASELINE_MB,
            d.delta(),
        ));
    }
    lines
}

/// Render results (sorted by experiment id) in the requested format.
pub fn render_report(results: &[ExperimentResult], format: ReportFormat) -> String {
    let mut rows: Vec<&ExperimentResult> = results.iter().collect();
    rows.sort_by_key(|r| r.exp_id);
    match format {
        ReportFormat::Markdown => {
            let mut out = String::new();
            out.push_str("| Experiment | Reconstruction Loss (MSE) | Accuracy (%) | Storage Reduction (%) |\n");
            out.push_str("|---|---:|---:|---:|\n");
            for r in rows {
                out.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    r.experiment,
                    format_loss(r.reconstruction_loss),
                    format_percent(r.classifier_accuracy_percent),
                    format_percent(r.storage_reduction_percent),
                ));
            }
            out.push('\n');
            out.push_str("Reference cross-check:\n");
            for line in footnote_lines() {
                out.push_str(&format!("- {line}\n"));
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = String::new();
            out.push_str("experiment,reconstruction_loss,accuracy_percent,storage_reduction_percent\n");
            for r in rows {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    r.experiment,
                    format_loss(r.reconstruction_loss),
                    format_percent(r.classifier_accuracy_percent),
                    format_percent(r.storage_reduction_percent),
                ));
            }
            for line in footnote_lines() {
                out.push_str(&format!("# {line}\n"));
            }
            out
        }
    }
}

pub fn emit_report(
    results: &[ExperimentResult],
    format: ReportFormat,
    path: &Path,
) -> std::io::Result<()> {
    std::fs::write(path, render_report(results, format))
}

/// Parse the CSV format back: (experiment, loss, accuracy, reduction).
pub fn parse_csv_report(text: &str) -> Vec<(String, f64, f64, f64)> {
    text.lines()
        .skip(1)
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|line| {
            let mut fields = line.rsplitn(4, ',');
            let reduction = fields.next()?.parse().ok()?;
            let accuracy = fields.next()?.parse().ok()?;
            let loss = fields.next()?.parse().ok()?;
            let name = fields.next()?.to_string();
            Some((name, loss, accuracy, reduction))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(exp_id: u8, loss: f64, acc: f64, red: f64) -> ExperimentResult {
        ExperimentResult {
            experiment: format!("Exp. {exp_id}: test"),
            exp_id,
            seed: 7,
            reconstruction_loss: loss,
            classifier_accuracy_percent: acc,
            original_mb: 33.878,
            encoded_mb: 0.941,
            storage_reduction_percent: red,
            wall_clock_seconds: 1.0,
        }
    }

    #[test]
    fn loss_rounds_half_away_from_zero() {
        assert_eq!(format_loss(0.00239), "0.0024");
        assert_eq!(format_loss(0.00125), "0.0013");
        assert_eq!(format_loss(0.0), "0.0000");
    }

    #[test]
    fn markdown_has_header_rows_and_footnote() {
        let results = vec![result(2, 0.002, 95.0, -1500.0), result(1, 0.004, 21.0, 97.22)];
        let md = render_report(&results, ReportFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert!(lines[0].contains("Reconstruction Loss"));
        // Sorted by experiment id regardless of input order.
        assert!(lines[2].contains("Exp. 1"));
        assert!(lines[3].contains("Exp. 2"));
        assert!(md.contains("Reference cross-check:"));
        assert!(md.contains("90.18"), "flags the printed 90.18 vs implied 97.28");
        assert!(md.contains("97.28"));
    }

    #[test]
    fn csv_round_trips_values() {
        let results = vec![result(1, 0.00239, 21.5, 97.22), result(3, 0.0221, 52.01, -611.11)];
        let csv = render_report(&results, ReportFormat::Csv);
        let parsed = parse_csv_report(&csv);
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].0, "Exp. 1: test");
        assert_eq!(parsed[0].1, 0.0024);
        assert_eq!(parsed[0].2, 21.5);
        assert_eq!(parsed[0].3, 97.22);
        assert_eq!(parsed[1].3, -611.11);
    }

    #[test]
    fn four_results_render_four_rows() {
        let results: Vec<ExperimentResult> =
            (1..=4).map(|i| result(i, 0.01, 50.0, 10.0)).collect();
        let csv = render_report(&results, ReportFormat::Csv);
        let data_rows = csv
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("experiment"))
            .count();
        assert_eq!(data_rows, 4);
    }
}
