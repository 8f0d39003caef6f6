//! Plain-text and CSV rendering of evaluation reports.

use migrec_core::eval::{EvalReport, FailureDelta, EVAL_KS};

/// Fixed-width table: one row per run label, columns P@1/3/5/10 and MRR.
pub fn metrics_table(rows: &[(String, &EvalReport)]) -> String {
    let label_width = rows
        .iter()
        .map(|(label, _)| label.len())
        .chain(["run".len()])
        .max()
        .unwrap_or(3);
    let mut out = format!("{:<label_width$}  {:>6}  ", "run", "N");
    for k in EVAL_KS {
        out.push_str(&format!("{:>7}  ", format!("P@{k}")));
    }
    out.push_str(&format!("{:>7}\n", "MRR"));
    for (label, report) in rows {
        out.push_str(&format!("{label:<label_width$}  {:>6}  ", report.n_queries));
        for k in EVAL_KS {
            out.push_str(&format!("{:>7.3}  ", report.precision_at[&k]));
        }
        out.push_str(&format!("{:>7.3}\n", report.mrr));
    }
    out
}

/// Per-label breakdown as CSV: label, n, P@k columns, MRR.
pub fn per_label_csv(report: &EvalReport) -> String {
    let mut out = String::from("label,n,p_at_1,p_at_3,p_at_5,p_at_10,mrr\n");
    for (label, sub) in &report.per_label {
        out.push_str(&format!("\"{}\",{}", label.replace('"', "\"\""), sub.n));
        for k in EVAL_KS {
            out.push_str(&format!(",{:.6}", sub.precision_at[&k]));
        }
        out.push_str(&format!(",{:.6}\n", sub.mrr));
    }
    for (category, sub) in &report.per_category {
        out.push_str(&format!(
            "\"{} (category mean)\",{}",
            category.replace('"', "\"\""),
            sub.subcategories
        ));
        for k in EVAL_KS {
            out.push_str(&format!(",{:.6}", sub.precision_at[&k]));
        }
        out.push_str(&format!(",{:.6}\n", sub.mrr));
    }
    out
}

/// Failure-rate comparison table, largest disparity first.
pub fn comparison_table(run_a: &str, run_b: &str, deltas: &[FailureDelta]) -> String {
    let width = deltas
        .iter()
        .map(|d| d.label.len())
        .chain(["label".len()])
        .max()
        .unwrap_or(5);
    let mut out = format!(
        "{:<width$}  {:>12}  {:>12}  {:>8}\n",
        "label",
        truncate(run_a, 12),
        truncate(run_b, 12),
        "|delta|"
    );
    for delta in deltas {
        out.push_str(&format!(
            "{:<width$}  {:>12.3}  {:>12.3}  {:>8.3}\n",
            delta.label, delta.rate_a, delta.rate_b, delta.delta
        ));
    }
    out
}

fn truncate(text: &str, max: usize) -> String {
    if text.len() <= max {
        text.to_string()
    } else {
        text.chars().take(max).collect()
    }
}
