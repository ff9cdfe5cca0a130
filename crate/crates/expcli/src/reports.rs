//! Fixed-header CSV tables for sweeps and runs.

use crate::config::Task;
use crate::experiment::{FinalRuns, RunRecord, Sweep};
use crate::output::{fmt_opt, CsvTable};

/// `lambda,validation_metric,diverged,selected`
pub fn sweep_table(sweep: &Sweep) -> CsvTable {
    let mut t = CsvTable::new(&["lambda", "validation_metric", "diverged", "selected"]);
    for p in &sweep.points {
        t.push(vec![
            p.lambda.to_string(),
            fmt_opt(p.score),
            p.score.is_none().to_string(),
            (Some(p.lambda) == sweep.selected).to_string(),
        ]);
    }
    t
}

pub const RUNS_HEADER: [&str; 15] = [
    "seed",
    "kind",
    "lambda",
    "target",
    "metric",
    "value",
    "diverged",
    "activation_amplitude",
    "covariance",
    "correlation",
    "cw_correlation",
    "variance",
    "n_cw_variance",
    "config_hash",
    "wall_time_secs",
];

/// One row per run; `value` is empty for diverged runs.
pub fn runs_table<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> CsvTable {
    let mut t = CsvTable::new(&RUNS_HEADER);
    for r in records {
        let c = r.characteristics.as_ref();
        t.push(vec![
            r.seed.to_string(),
            r.kind.to_string(),
            r.lambda.to_string(),
            r.target.clone(),
            r.metric.to_string(),
            fmt_opt(r.final_metric),
            r.diverged.is_some().to_string(),
            fmt_opt(c.map(|c| c.activation_amplitude)),
            fmt_opt(c.map(|c| c.covariance)),
            fmt_opt(c.and_then(|c| c.correlation)),
            fmt_opt(c.and_then(|c| c.cw_correlation)),
            fmt_opt(c.map(|c| c.variance)),
            fmt_opt(c.map(|c| c.n_cw_variance)),
            r.config_hash.clone(),
            r.wall_time_secs.to_string(),
        ]);
    }
    t
}

pub const SUMMARY_HEADER: [&str; 10] =
    ["task", "kind", "lambda", "target", "metric", "runs", "excluded", "mean", "std", "formatted"];

fn summary_row(task: Task, kind: &str, f: &FinalRuns) -> Vec<String> {
    let s = f.summary;
    vec![
        task.to_string(),
        kind.to_string(),
        f.lambda.to_string(),
        f.target.to_string(),
        crate::experiment::metric_name(task).to_string(),
        s.runs.to_string(),
        s.excluded.to_string(),
        s.mean.to_string(),
        s.std.to_string(),
        s.formatted(task),
    ]
}

/// One row per `FinalRuns`: a single row for `train`, one per layer for `layers`.
pub fn summary_table(task: Task, kind: &str, finals: &[FinalRuns]) -> CsvTable {
    let mut t = CsvTable::new(&SUMMARY_HEADER);
    for f in finals {
        t.push(summary_row(task, kind, f));
    }
    t
}
