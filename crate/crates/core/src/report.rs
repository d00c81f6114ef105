//! Report emission: aligned text tables, `k,auc` CSV series and JSON.

use std::fmt::Write as _;

use crate::evaluation::{KnnPoint, MetricsReport};
use crate::trainer::{ComparisonTable, RunResult};
use crate::Result;

/// Table columns: (metric key, header).
pub const TABLE_COLUMNS: [(&str, &str); 7] = [
    ("auc", "AUC"),
    ("acc", "ACC"),
    ("sensitivity", "Sensitivity"),
    ("precision", "Precision"),
    ("specificity", "Specificity"),
    ("f1", "F1"),
    ("mcr", "MCR (lower is better)"),
];

/// `mean±std` in percent with one decimal, or `n/a`.
pub fn format_cell(mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{:.1}±{:.1}", 100.0 * m, 100.0 * s),
        (Some(m), None) => format!("{:.1}", 100.0 * m),
        _ => "n/a".to_string(),
    }
}

fn render(first_header: &str, rows: &[(String, Vec<String>)], headers: &[&str]) -> String {
    let mut widths: Vec<usize> = std::iter::once(first_header)
        .chain(headers.iter().copied())
        .map(|h| h.chars().count())
        .collect();
    for (label, cells) in rows {
        widths[0] = widths[0].max(label.chars().count());
        for (w, c) in widths[1..].iter_mut().zip(cells) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:<w$}", w = w))
            .collect();
        padded.join(" | ").trim_end().to_string()
    };
    let mut out = String::new();
    let mut head = vec![first_header];
    head.extend_from_slice(headers);
    let _ = writeln!(out, "{}", line(head));
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let _ = writeln!(out, "{}", rule.join("-+-"));
    for (label, cells) in rows {
        let mut all = vec![label.as_str()];
        all.extend(cells.iter().map(String::as_str));
        let _ = writeln!(out, "{}", line(all));
    }
    out
}

/// Human-readable table, one row per run, metrics as mean±std percent.
pub fn comparison_text(table: &ComparisonTable) -> String {
    let headers: Vec<&str> = TABLE_COLUMNS.iter().map(|c| c.1).collect();
    let rows: Vec<(String, Vec<String>)> = table
        .rows
        .iter()
        .map(|r| {
            let cells = TABLE_COLUMNS
                .iter()
                .map(|(key, _)| format_cell(r.mean_of(key), r.std_of(key)))
                .collect();
            (r.label.clone(), cells)
        })
        .collect();
    let folds = table.rows.first().map_or(0, |r| r.fold_count);
    format!(
        "{}\n(mean±std % over {folds} folds)\n\n{}",
        table.title,
        render("Method", &rows, &headers)
    )
}

/// Per-fold table of one run.
pub fn run_text(run: &RunResult) -> String {
    let headers: Vec<&str> = TABLE_COLUMNS.iter().map(|c| c.1).collect();
    let cell = |m: &MetricsReport, key: &str| format_cell(m.metric(key), None);
    let mut rows: Vec<(String, Vec<String>)> = run
        .folds
        .iter()
        .map(|f| {
            (
                format!("fold {}", f.fold),
                TABLE_COLUMNS
                    .iter()
                    .map(|(k, _)| cell(&f.metrics, k))
                    .collect(),
            )
        })
        .collect();
    rows.push((
        "mean±std".into(),
        TABLE_COLUMNS
            .iter()
            .map(|(k, _)| format_cell(run.mean_of(k), run.std_of(k)))
            .collect(),
    ));
    format!("{}\n\n{}", run.label, render("Fold", &rows, &headers))
}

/// Two-column CSV `k,auc`.
pub fn knn_csv(points: &[KnnPoint]) -> String {
    let mut out = String::from("k,auc\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.k, p.auc);
    }
    out
}

/// Flat key-value JSON of one metrics report; undefined metrics are `null`.
pub fn metrics_json(m: &MetricsReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(m)?)
}

pub fn run_json(run: &RunResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(run)?)
}

pub fn table_json(table: &ComparisonTable) -> Result<String> {
    Ok(serde_json::to_string_pretty(table)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells() {
        assert_eq!(format_cell(Some(0.962), Some(0.01)), "96.2±1.0");
        assert_eq!(format_cell(None, Some(0.01)), "n/a");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = knn_csv(&[KnnPoint { k: 1, auc: 1.0 }, KnnPoint { k: 5, auc: 0.75 }]);
        assert_eq!(s, "k,auc\n1,1\n5,0.75\n");
    }

    #[test]
    fn metrics_json_is_flat() {
        let m = MetricsReport {
            acc: Some(0.5),
            tp: 1,
            ..Default::default()
        };
        let v: serde_json::Value = serde_json::from_str(&metrics_json(&m).unwrap()).unwrap();
        let obj = v.as_object().unwrap();
        assert!(obj.values().all(|x| !x.is_object() && !x.is_array()));
        assert_eq!(obj["acc"], 0.5);
        assert!(obj["auc"].is_null());
        assert_eq!(obj["fn"], 0);
    }

    #[test]
    fn table_aligns_columns() {
        let rows = vec![
            ("Baseline".to_string(), vec!["94.7±1.7".to_string()]),
            ("LR".to_string(), vec!["96.2±1.0".to_string()]),
        ];
        let t = render("Method", &rows, &["AUC"]);
        let lines: Vec<&str> = t.lines().collect();
        let bar = lines[0].find('|').unwrap();
        assert!(lines.iter().skip(2).all(|l| l.find('|') == Some(bar)));
    }
}
