//! Tabular rendering of sweep results and evaluation summaries.
//!
//! PDQ Score is shown as a percentage with three decimals (0.22569 renders as
//! `22.569`); the raw value is kept in the last column at full precision.
//! Averages use three decimals. Floats in configuration columns use the
//! shortest representation that round-trips.

use crate::pdq::EvalSummary;
use crate::sweep::SweepResult;

pub const CONFIG_COLUMNS: [&str; 5] = ["Threshold", "Box Ratio", "Covariance Scale", "IoU Threshold", "Strategy"];

pub const SCORE_COLUMNS: [&str; 8] = [
    "PDQ Score",
    "Avg. pPDQ",
    "Avg. FP",
    "Avg. SQ",
    "Avg. LQ",
    "TPs",
    "FPs",
    "FNs",
];

pub fn format_pdq(pdq: f64) -> String {
    format!("{:.3}", pdq * 100.0)
}

fn score_cells(s: &EvalSummary) -> Vec<String> {
    vec![
        format_pdq(s.pdq_score),
        format!("{:.3}", s.avg_ppdq),
        format!("{:.3}", s.avg_fp_quality),
        format!("{:.3}", s.avg_spatial_q),
        format!("{:.3}", s.avg_label_q),
        s.total_tp.to_string(),
        s.total_fp.to_string(),
        s.total_fn.to_string(),
    ]
}

fn header() -> Vec<String> {
    CONFIG_COLUMNS
        .iter()
        .chain(SCORE_COLUMNS.iter())
        .chain(["Best", "PDQ (raw)"].iter())
        .map(|s| s.to_string())
        .collect()
}

fn rows(result: &SweepResult) -> Vec<Vec<String>> {
    result
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let c = &r.config;
            let mut cells = vec![
                c.confidence_threshold.to_string(),
                c.box_reduction_ratio.to_string(),
                c.covariance_scale.to_string(),
                c.final_nms_iou.to_string(),
                c.merge.strategy.to_string(),
            ];
            cells.extend(score_cells(&r.summary));
            cells.push(if i == result.best { "*".into() } else { String::new() });
            cells.push(r.summary.pdq_score.to_string());
            cells
        })
        .collect()
}

fn to_csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
}

/// Left-aligned first column, everything else right-aligned.
fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                s.push_str(&format!("{c:<w$}"));
            } else {
                s.push_str(&format!("{c:>w$}"));
            }
        }
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(header);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

pub fn sweep_csv(result: &SweepResult) -> String {
    to_csv(&header(), &rows(result))
}

pub fn sweep_text(result: &SweepResult) -> String {
    let mut out = aligned(&header(), &rows(result));
    let divisor = match result.rows.first() {
        Some(r) if r.config.normalize_redistribution => "K - 1",
        _ => "K",
    };
    out.push_str("\nAvg. FP: mean of (1 - max label probability) over false positives.\n");
    out.push_str(&format!("Label redistribution spreads 1 - S over the other classes divided by {divisor}.\n"));
    out
}

fn summary_header() -> Vec<String> {
    SCORE_COLUMNS
        .iter()
        .chain(["PDQ (raw)"].iter())
        .map(|s| s.to_string())
        .collect()
}

fn summary_row(s: &EvalSummary) -> Vec<String> {
    let mut cells = score_cells(s);
    cells.push(s.pdq_score.to_string());
    cells
}

pub fn summary_text(s: &EvalSummary) -> String {
    aligned(&summary_header(), &[summary_row(s)])
}

pub fn summary_csv(s: &EvalSummary) -> String {
    to_csv(&summary_header(), &[summary_row(s)])
}
