//! Result files: `convergence.csv` and `summary.json`.
//!
//! Every file is written to a `.tmp` sibling and renamed into place, so a
//! crashed or rejected run never leaves a partial file behind. Metric columns
//! are shortest-round-trip decimal (bit-identical across runs with the same
//! config and seed); the timing column is informative only.

use rmgls::cycle::{ConvergenceRecord, IterationRow};
use rmgls::demo::DemoRun;
use serde::Serialize;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

/// Column order of `convergence.csv`. `err_w` is empty when the dense
/// reference did not run; `seconds` is wall-clock and excluded from
/// determinism guarantees.
pub const CONVERGENCE_HEADER: &str =
    "iter,f,err_f,grad_norm,r_grad,err_w,r,r_bw,rank,fevals,seconds";

/// Column order of the line-search demonstration CSV.
pub const DEMO_HEADER: &str = "iter,f_gap,grad_norm,rel_grad,err,fevals,step";

/// Summary of a `solve`/`adapt` run (one cell of a sweep is one run).
#[derive(Debug, Serialize)]
pub struct Summary {
    pub version: String,
    pub schema: u32,
    pub command: String,
    pub config: crate::config::RunConfig,
    pub converged: bool,
    pub cycles: usize,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
    pub totals: Totals,
}

/// Metrics of the last recorded iteration.
#[derive(Debug, Serialize)]
pub struct FinalMetrics {
    pub f: f64,
    pub err_f: f64,
    pub grad_norm: f64,
    pub r_grad: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err_w: Option<f64>,
    pub r: f64,
    pub r_bw: f64,
    pub rank: usize,
}

/// Whole-run accumulations.
#[derive(Debug, Serialize)]
pub struct Totals {
    pub fevals: usize,
    pub seconds: f64,
}

/// Summary of an `ls-demo` run.
#[derive(Debug, Serialize)]
pub struct DemoSummary {
    pub version: String,
    pub schema: u32,
    pub command: String,
    pub n: usize,
    pub cond: f64,
    pub seed: u64,
    pub mode: String,
    pub iterations: usize,
    pub min_rel_grad: f64,
    pub total_fevals: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fevals_to_grad_1e7: Option<usize>,
}

/// The version stamp embedded in every summary.
pub fn version_stamp() -> String {
    format!(
        "{} {} ({})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        option_env!("RMGLS_GIT_REV").unwrap_or("unreleased")
    )
}

/// Renders one iteration row in `CONVERGENCE_HEADER` order.
fn convergence_line(row: &IterationRow) -> String {
    let err_w = row.err_w.map(|v| v.to_string()).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.3}",
        row.iter,
        row.f,
        row.err_f,
        row.grad_norm,
        row.r_grad,
        err_w,
        row.residual,
        row.residual_bw,
        row.rank,
        row.fevals,
        row.seconds
    )
}

/// Writes `convergence.csv` for a finished run.
pub fn write_convergence_csv(path: &Path, record: &ConvergenceRecord) -> io::Result<()> {
    let mut text = String::from(CONVERGENCE_HEADER);
    text.push('\n');
    for row in &record.rows {
        text.push_str(&convergence_line(row));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Writes the per-iteration CSV of a line-search demonstration.
pub fn write_demo_csv(path: &Path, run: &DemoRun, f_star: f64) -> io::Result<()> {
    let mut text = String::from(DEMO_HEADER);
    text.push('\n');
    for row in &run.history {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.iter,
            row.f - f_star,
            row.grad_norm,
            row.rel_grad,
            row.err,
            row.fevals,
            row.step
        ));
    }
    write_atomic(path, text.as_bytes())
}

/// Serializes any summary as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, summary: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Builds the `solve`/`adapt` summary from a finished record.
pub fn summarize(
    command: &str,
    config: &crate::config::RunConfig,
    record: &ConvergenceRecord,
) -> Summary {
    let last = record.rows.last().expect("a finished run has rows");
    Summary {
        version: version_stamp(),
        schema: 1,
        command: command.to_string(),
        config: config.clone(),
        converged: record.converged,
        cycles: record.cycles_run(),
        final_metrics: FinalMetrics {
            f: last.f,
            err_f: last.err_f,
            grad_norm: last.grad_norm,
            r_grad: last.r_grad,
            err_w: last.err_w,
            r: last.residual,
            r_bw: last.residual_bw,
            rank: last.rank,
        },
        totals: Totals {
            fevals: record.rows.iter().map(|r| r.fevals).sum(),
            seconds: record.rows.iter().map(|r| r.seconds).sum(),
        },
    }
}

/// Write-then-rename so readers never observe a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}
