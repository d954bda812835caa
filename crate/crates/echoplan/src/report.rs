//! JSON and aligned-text renderings of evaluation results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use echoplan_core::closedloop::ClosedLoopReport;
use echoplan_core::metrics::{OpenLoopReport, Protocol};
use echoplan_core::trainer::AblationRow;
use serde::Serialize;

use crate::error::{FormatError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_vec_pretty(value).map_err(|e| FormatError::json(path, e))?;
    fs::write(path, json).map_err(|e| FormatError::io(path, e))
}

pub fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T> {
    let raw = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_slice(&raw).map_err(|e| FormatError::json(path, e))
}

const OPEN_LOOP_HEADER: [&str; 9] = [
    "Method", "L2 1s", "L2 2s", "L2 3s", "L2 Avg", "CR 1s", "CR 2s", "CR 3s", "CR Avg",
];

fn open_loop_cells(label: &str, report: &OpenLoopReport, protocol: Protocol) -> Vec<String> {
    let row = report.row(protocol);
    let mut cells = vec![format!("{label} [{}]", protocol.as_str())];
    cells.extend(row.l2.iter().map(|v| format!("{v:.4}")));
    cells.push(format!("{:.4}", row.l2_avg));
    cells.extend(row.collision_rate.iter().map(|v| format!("{v:.2}%")));
    cells.push(format!("{:.2}%", row.collision_avg));
    cells
}

/// Left-aligned first column, right-aligned numbers, one space of gutter.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (i, c) in cells.enumerate().take(cols) {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(&mut header.iter().copied());
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut rule.iter().map(String::as_str));
    for r in rows {
        line(&mut r.iter().map(String::as_str));
    }
    out
}

/// Both protocols for one model, L2 in meters and collision rate in percent.
pub fn open_loop_text(label: &str, report: &OpenLoopReport) -> String {
    let rows: Vec<Vec<String>> = Protocol::ALL
        .into_iter()
        .map(|p| open_loop_cells(label, report, p))
        .collect();
    let mut out = aligned_table(&OPEN_LOOP_HEADER, &rows);
    let _ = writeln!(out, "samples: {}", report.samples);
    out
}

pub fn closed_loop_text(label: &str, report: &ClosedLoopReport) -> String {
    let header = ["Method", "SR", "Completion", "Collisions", "Score", "Runs"];
    let rows = vec![vec![
        label.to_string(),
        format!("{:.1}%", report.success_rate),
        format!("{:.3}", report.route_completion),
        report.collisions.to_string(),
        format!("{:.3}", report.score),
        report.runs.len().to_string(),
    ]];
    let mut out = aligned_table(&header, &rows);
    let run_header = ["Seed", "Scenario", "Success", "Completion", "Collisions", "Steps", "Failure"];
    let runs: Vec<Vec<String>> = report
        .runs
        .iter()
        .map(|r| {
            vec![
                r.seed.to_string(),
                format!("{:?}", r.scenario),
                r.success.to_string(),
                format!("{:.3}", r.completion),
                r.collisions.to_string(),
                r.steps.to_string(),
                r.failure.clone().unwrap_or_default(),
            ]
        })
        .collect();
    out.push('\n');
    out.push_str(&aligned_table(&run_header, &runs));
    out
}

/// One block per table, rows in arm order, both protocols per arm.
pub fn ablation_text(rows: &[AblationRow]) -> String {
    let mut header: Vec<&str> = vec!["Table", "Arm", "CFC", "Ns", "λcur", "λfut"];
    header.extend(&OPEN_LOOP_HEADER[1..]);
    header.push("TC");
    let mut body = Vec::new();
    for r in rows {
        for p in Protocol::ALL {
            let mut cells = vec![
                r.table.clone(),
                format!("{} [{}]", r.label, p.as_str()),
                if r.key.cfc { "yes" } else { "no" }.to_string(),
                r.key.tokens.to_string(),
                format!("{}", r.key.lambda_curbev),
                format!("{}", r.key.lambda_futbev),
            ];
            cells.extend(open_loop_cells("", &r.report, p).into_iter().skip(1));
            cells.push(format!("{:.4}", r.temporal_consistency));
            body.push(cells);
        }
    }
    aligned_table(&header, &body)
}
