//! CSV emission.
//!
//! Floats are written in scientific notation with 17 significant digits,
//! `.` as decimal separator and `\n` line endings, so output is
//! locale-independent and round-trips every `f64` exactly.

use std::fmt::Write as _;

use crate::harness::{RunOutcome, RunStatus, RunSummary, StepRecord};

pub const RECORD_HEADER: &str = "t,el,pl,bl,z,avg_pl,avg_el,delta_fro,ridge,wall_ms";
pub const SUMMARY_HEADER: &str =
    "editor,alpha,d_base,d,steps,final_avg_pl,final_avg_el,z_init,z_final,stability_ratio,constraint_satisfied,mean_wall_ms,status";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn status_row(out: &mut String, status: &RunStatus) {
    let msg = match status {
        RunStatus::Completed => return,
        RunStatus::SolverAbort(m) | RunStatus::NumericalAbort(m) => m,
    };
    // keep the row a single CSV field after the label
    let clean: String = msg.chars().map(|c| if matches!(c, ',' | '\n' | '\r') { ';' } else { c }).collect();
    let _ = writeln!(out, "status,{},{clean}", status.label());
}

pub fn record_row(r: &StepRecord) -> String {
    let f = [r.el, r.pl, r.bl, r.z, r.avg_pl, r.avg_el, r.delta_fro, r.ridge, r.wall_ms];
    let mut s = r.t.to_string();
    for x in f {
        s.push(',');
        s.push_str(&fmt_f64(x));
    }
    s
}

/// Per-step records; a non-completed run ends with a `status,<label>,<detail>`
/// row.
pub fn records_csv(outcome: &RunOutcome) -> String {
    let mut out = String::with_capacity(64 + 200 * outcome.records.len());
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for r in &outcome.records {
        out.push_str(&record_row(r));
        out.push('\n');
    }
    status_row(&mut out, &outcome.summary.status);
    out
}

pub fn summary_row(s: &RunSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.editor,
        fmt_f64(s.alpha),
        fmt_f64(s.d_base),
        fmt_f64(s.d_threshold),
        s.steps,
        fmt_f64(s.final_avg_pl),
        fmt_f64(s.final_avg_el),
        fmt_f64(s.z_init),
        fmt_f64(s.z_final),
        fmt_f64(s.stability_ratio),
        s.constraint_satisfied,
        fmt_f64(s.mean_wall_ms),
        s.status.label(),
    )
}

/// One summary row per run, in the given order.
pub fn summaries_csv<'a>(summaries: impl IntoIterator<Item = &'a RunSummary>) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for s in summaries {
        out.push_str(&summary_row(s));
        out.push('\n');
    }
    out
}

/// Human-readable one-line summary.
pub fn summary_line(s: &RunSummary) -> String {
    let mut line = format!(
        "editor={} alpha={} d_base={:e} D={:e} steps={} avg_pl={:e} avg_el={:e} z_final={:e} stability_ratio={:e} constraint_satisfied={} status={}",
        s.editor,
        s.alpha,
        s.d_base,
        s.d_threshold,
        s.steps,
        s.final_avg_pl,
        s.final_avg_el,
        s.z_final,
        s.stability_ratio,
        s.constraint_satisfied,
        s.status.label(),
    );
    if let RunStatus::SolverAbort(m) | RunStatus::NumericalAbort(m) = &s.status {
        line.push_str(" detail=");
        line.push_str(m);
    }
    line
}
