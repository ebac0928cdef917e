use std::fmt::Write as _;
use std::path::Path;

use chrono::{Datelike, Days};

use super::stages::{load_metrics, ModelMetrics, IMPORTANCE, METRICS, STACKED_MODEL};
use super::{read_artifact, PipelineError, Result, RunManifest};
use crate::importance::ImportanceReport;
use crate::DateRange;

/// Row labels of every per-model table, in order.
pub const METRIC_ROWS: [&str; 5] = ["AUC", "Accuracy", "Precision", "Recall", "F1"];

/// `Apr-May 2018` for whole months, otherwise the plain date range.
pub fn window_label(r: &DateRange) -> String {
    let whole = r.start.day() == 1 && (r.end + Days::new(1)).day() == 1;
    if !whole {
        return r.to_string();
    }
    let (s, e) = (r.start, r.end);
    if s.year() == e.year() && s.month() == e.month() {
        s.format("%b %Y").to_string()
    } else if s.year() == e.year() {
        format!("{}-{}", s.format("%b"), e.format("%b %Y"))
    } else {
        format!("{}-{}", s.format("%b %Y"), e.format("%b %Y"))
    }
}

fn metric(m: &ModelMetrics, row: &str) -> String {
    let r = &m.report;
    let v = match row {
        "AUC" => r.auc,
        "Accuracy" => Some(r.accuracy),
        "Precision" => Some(r.precision),
        "Recall" => Some(r.recall),
        "F1" => Some(r.f1),
        _ => unreachable!("metric rows are fixed"),
    };
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn table(out: &mut String, model: &str, windows: &[DateRange; 2], metrics: &[ModelMetrics]) {
    let labels: Vec<String> = windows.iter().map(window_label).collect();
    let width = labels.iter().map(String::len).max().unwrap_or(0).max(8) + 2;
    let _ = writeln!(out, "Model: {model}");
    let _ = write!(out, "{:<12}", "Parameter");
    for l in &labels {
        let _ = write!(out, "{l:>width$}");
    }
    out.push('\n');
    for row in METRIC_ROWS {
        let _ = write!(out, "{row:<12}");
        for w in windows {
            let cell = metrics
                .iter()
                .find(|m| m.model == model && m.window == *w)
                .map_or_else(|| "missing".to_string(), |m| metric(m, row));
            let _ = write!(out, "{cell:>width$}");
        }
        out.push('\n');
    }
    out.push('\n');
}

/// Plain-text summary of a finished run, built only from the artifacts in
/// `out_dir`.
pub fn emit_report(out_dir: &Path) -> Result<String> {
    let manifest = RunManifest::load(out_dir)?;
    let metrics = load_metrics(&out_dir.join(METRICS))?;
    let imp_path = out_dir.join(IMPORTANCE);
    let importance: ImportanceReport =
        serde_json::from_str(&read_artifact(&imp_path)?).map_err(|e| PipelineError::bad(&imp_path, e))?;
    let c = &manifest.config;
    let w = &c.windows;
    let windows = [w.level1, w.evaluation];
    let families: Vec<&str> = c.search.families.iter().map(|f| f.as_str()).collect();
    let stacked = families.len() >= 2;

    let mut out = String::new();
    let _ = writeln!(out, "Daily direction classification report");
    let _ = writeln!(out);
    let _ = writeln!(out, "seed: {}", c.seed);
    let _ = writeln!(out, "level-0 models: {}", families.join(", "));
    let _ = writeln!(out, "level-0 training: {}", w.level0);
    let _ = writeln!(out, "level-1 training: {}", w.level1);
    let _ = writeln!(out, "evaluation: {}", w.evaluation);
    if stacked {
        let _ = writeln!(
            out,
            "stack: {:?} level-one inputs, {} hidden units",
            c.stack.mode, c.stack.hidden_width
        );
    }
    let _ = writeln!(out);
    if !manifest.notices.is_empty() {
        let _ = writeln!(out, "Notices");
        for n in &manifest.notices {
            let _ = writeln!(out, "- {n}");
        }
        let _ = writeln!(out);
    }
    for f in &families {
        table(&mut out, f, &windows, &metrics);
    }
    if stacked {
        table(&mut out, STACKED_MODEL, &windows, &metrics);
    }
    if stacked {
        let _ = writeln!(out, "Model importance in the stack");
        for m in &importance.models {
            let _ = writeln!(out, "  {:<14}{:>10.4}  weight {:.4}", m.model_id, m.score, m.weight);
        }
        let _ = writeln!(out);
    }
    let _ = writeln!(out, "Top features by combined importance");
    for (i, s) in importance.ranking().iter().take(15).enumerate() {
        let _ = writeln!(out, "  {:>2}. {:<28}{:.6}", i + 1, s.feature, s.score);
    }
    Ok(out)
}
