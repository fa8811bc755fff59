//! Experiment reports: the per-method result document, cross-report
//! aggregation into the benchmark tables, and CSV/plain-text emission.
//!
//! Reports are deterministic JSON documents: identical configurations and
//! seeds produce byte-identical files. Wall-clock metadata lives in a
//! separate sidecar written by the CLI, never inside the report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::InfoDecomposition;
use crate::game::TaskSpec;
use crate::mat::Mat;
use crate::policy::JointPolicy;
use crate::qed::{MapProvenance, OuterRecord, QedConfig};
use crate::symmetry::EquivalenceMap;
use crate::training::{LossBreakdown, TraceEntry, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sp,
    SpMaxFilter,
    OpGivenSymmetries,
    Qed,
    MaxClass,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Sp => "sp",
            Method::SpMaxFilter => "sp_max_filter",
            Method::OpGivenSymmetries => "op_given_symmetries",
            Method::Qed => "qed",
            Method::MaxClass => "max_class",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s {
            "sp" => Some(Method::Sp),
            "sp_max_filter" => Some(Method::SpMaxFilter),
            "op_given_symmetries" => Some(Method::OpGivenSymmetries),
            "qed" => Some(Method::Qed),
            "max_class" => Some(Method::MaxClass),
            _ => None,
        }
    }

    /// Display label used in rendered tables.
    pub fn label(&self) -> &'static str {
        match self {
            Method::Sp => "SP",
            Method::SpMaxFilter => "SP w/ max filtering",
            Method::OpGivenSymmetries => "OP",
            Method::Qed => "QED",
            Method::MaxClass => "Max Class (Baseline)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub sp_accuracy: f64,
    pub final_loss: Option<LossBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub policy: Option<JointPolicy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingRecord {
    pub map: EquivalenceMap,
    /// None for the identity seed map.
    pub provenance: Option<MapProvenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub task: TaskSpec,
    pub task_fingerprint: String,
    /// Training configuration behind each seed (the seed field holds the
    /// base seed).
    pub train_config: TrainConfig,
    /// Full outer-loop configuration, present for qed reports.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub qed_config: Option<QedConfig>,
    /// Population size behind the statistics (survivors for filtered runs).
    pub n: usize,
    pub per_seed: Vec<SeedRecord>,
    pub sp_mean: f64,
    pub sp_std: f64,
    pub xp_mean: f64,
    pub xp_std: f64,
    /// entry [i][j] = accuracy of sender i with receiver j, in per_seed order.
    pub crossplay: Vec<Vec<f64>>,
    pub diagnostics: Vec<InfoDecomposition>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mappings: Option<Vec<MappingRecord>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub outer_trace: Option<Vec<OuterRecord>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub converged: Option<bool>,
    /// Per-seed loss traces, present when trace export is enabled.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub traces: Option<Vec<Vec<TraceEntry>>>,
}

impl ExperimentReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let report: ExperimentReport = serde_json::from_str(&text)?;
        if report.task.fingerprint() != report.task_fingerprint {
            return Err(Error::Report(format!(
                "fingerprint mismatch in {}: task hashes to {}, report claims {}",
                path.display(),
                report.task.fingerprint(),
                report.task_fingerprint
            )));
        }
        Ok(report)
    }

    /// Condition tag distinguishing ablation cells.
    pub fn condition(&self) -> String {
        format!(
            "{}/{}",
            self.task.channel().as_str(),
            self.task.goal_kind().as_str()
        )
    }
}

/// One row of the long-format aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: Method,
    pub task: String,
    pub condition: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Flatten reports into table rows (method x task x {sp, xp}).
///
/// Reports that share a (task kind, condition) column must agree on the task
/// fingerprint; duplicated (method, task, condition) cells are conflicts.
pub fn aggregate(reports: &[&ExperimentReport]) -> Result<Vec<TableRow>> {
    let mut seen_cells = BTreeSet::new();
    let mut seen_columns: Vec<(String, String, String)> = Vec::new();
    for report in reports {
        let task = report.task.kind().as_str().to_string();
        let condition = report.condition();
        let cell = (
            report.method.as_str().to_string(),
            task.clone(),
            condition.clone(),
        );
        if !seen_cells.insert(cell) {
            return Err(Error::Report(format!(
                "duplicate rows for method {} on task {} ({})",
                report.method.as_str(),
                task,
                condition
            )));
        }
        if let Some((t, c, fp)) = seen_columns
            .iter()
            .find(|(t, c, _)| *t == task && *c == condition)
        {
            if *fp != report.task_fingerprint {
                return Err(Error::InvalidArgument(format!(
                    "task fingerprint mismatch for column {t}/{c}"
                )));
            }
        } else {
            seen_columns.push((task, condition, report.task_fingerprint.clone()));
        }
    }

    let mut rows = Vec::new();
    for report in reports {
        let task = report.task.kind().as_str().to_string();
        let condition = report.condition();
        rows.push(TableRow {
            method: report.method,
            task: task.clone(),
            condition: condition.clone(),
            metric: "sp".into(),
            mean: report.sp_mean,
            std: report.sp_std,
            n: report.n,
        });
        rows.push(TableRow {
            method: report.method,
            task,
            condition,
            metric: "xp".into(),
            mean: report.xp_mean,
            std: report.xp_std,
            n: report.n,
        });
    }
    Ok(rows)
}

/// Long-format CSV with the fixed header.
pub fn rows_to_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("method,task,condition,metric,mean,std,n\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.method.as_str(),
            row.task,
            row.condition,
            row.metric,
            row.mean,
            row.std,
            row.n
        );
    }
    out
}

/// Grid rendering in the published layout: one line per method, one
/// "SP | XP" column pair per (task, condition). Means to 2 decimals, stds
/// to 3.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut columns: Vec<(String, String)> = Vec::new();
    for row in rows {
        let key = (row.task.clone(), row.condition.clone());
        if !columns.contains(&key) {
            columns.push(key);
        }
    }
    let mut methods: Vec<Method> = Vec::new();
    for row in rows {
        if !methods.contains(&row.method) {
            methods.push(row.method);
        }
    }

    let cell = |method: Method, column: &(String, String), metric: &str| -> String {
        rows.iter()
            .find(|r| {
                r.method == method
                    && r.task == column.0
                    && r.condition == column.1
                    && r.metric == metric
            })
            .map(|r| {
                if r.n <= 1 {
                    format!("{:.2}", r.mean)
                } else {
                    format!("{:.2} +/- {:.3}", r.mean, r.std)
                }
            })
            .unwrap_or_default()
    };

    let method_width = methods
        .iter()
        .map(|m| m.label().len())
        .max()
        .unwrap_or(6)
        .max(6);
    let mut col_width = 16usize;
    for method in &methods {
        for column in &columns {
            for metric in ["sp", "xp"] {
                col_width = col_width.max(cell(*method, column, metric).len() + 1);
            }
        }
    }

    let mut out = String::new();
    let _ = write!(out, "{:<method_width$}", "");
    for column in &columns {
        let title = format!("{} ({})", column.0, column.1);
        let _ = write!(out, " | {:^width$}", title, width = col_width * 2 + 3);
    }
    let _ = writeln!(out);
    let _ = write!(out, "{:<method_width$}", "method");
    for _ in &columns {
        let _ = write!(
            out,
            " | {:^col_width$} | {:^col_width$}",
            "Training (SP)", "Test (XP)"
        );
    }
    let _ = writeln!(out);
    for method in &methods {
        let _ = write!(out, "{:<method_width$}", method.label());
        for column in &columns {
            let _ = write!(
                out,
                " | {:>col_width$} | {:>col_width$}",
                cell(*method, column, "sp"),
                cell(*method, column, "xp")
            );
        }
        let _ = writeln!(out);
    }
    out
}

/// Write a matrix as CSV with a header row of column labels.
pub fn matrix_to_csv(matrix: &Mat, row_label: &str, col_prefix: &str) -> String {
    let mut out = String::from(row_label);
    for c in 0..matrix.cols() {
        let _ = write!(out, ",{col_prefix}{c}");
    }
    out.push('\n');
    for r in 0..matrix.rows() {
        let _ = write!(out, "{r}");
        for c in 0..matrix.cols() {
            let _ = write!(out, ",{}", matrix.get(r, c));
        }
        out.push('\n');
    }
    out
}

/// Loss-trace CSV in the fixed column order.
pub fn trace_to_csv(trace: &[TraceEntry]) -> String {
    let mut out = String::from("iteration,total,cross_entropy,entropy,energy,accuracy\n");
    for entry in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            entry.iteration,
            entry.total,
            entry.cross_entropy,
            entry.entropy_bonus,
            entry.energy,
            entry.accuracy
        );
    }
    out
}
