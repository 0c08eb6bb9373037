//! Run records on disk: the runs CSV, JSON reports, grouped aggregates,
//! and pairing helpers for significance testing.
//!
//! CSV schema, one row per run:
//! `method,dataset,setting,target_domain,seed,lambda,eta,dg_acc,zsdg_acc,wall_s`.
//! Floats print with Rust's shortest round-trip formatting, so a generic
//! reader reparses every numeric exactly.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::aggregate::{aggregate, AggregateCell};

pub const RUNS_CSV_HEADER: &str =
    "method,dataset,setting,target_domain,seed,lambda,eta,dg_acc,zsdg_acc,wall_s";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub method: String,
    pub dataset: String,
    pub setting: String,
    pub target_domain: usize,
    pub seed: u64,
    pub lambda: f64,
    pub eta: f64,
    pub dg_acc: f64,
    pub zsdg_acc: f64,
    pub wall_s: f64,
}

impl RunRow {
    fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.dataset,
            self.setting,
            self.target_domain,
            self.seed,
            self.lambda,
            self.eta,
            self.dg_acc,
            self.zsdg_acc,
            self.wall_s
        )
    }

    fn from_csv_line(line: &str, path: &Path, lineno: usize) -> Result<RunRow> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(Error::format(
                path,
                format!("line {lineno}: expected 10 fields, found {}", fields.len()),
            ));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format(path, format!("line {lineno}: bad {what} '{s}'")))
        };
        let parse_u = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::format(path, format!("line {lineno}: bad {what} '{s}'")))
        };
        Ok(RunRow {
            method: fields[0].to_string(),
            dataset: fields[1].to_string(),
            setting: fields[2].to_string(),
            target_domain: parse_u(fields[3], "target_domain")? as usize,
            seed: parse_u(fields[4], "seed")?,
            lambda: parse_f(fields[5], "lambda")?,
            eta: parse_f(fields[6], "eta")?,
            dg_acc: parse_f(fields[7], "dg_acc")?,
            zsdg_acc: parse_f(fields[8], "zsdg_acc")?,
            wall_s: parse_f(fields[9], "wall_s")?,
        })
    }
}

static CSV_APPEND_LOCK: Mutex<()> = Mutex::new(());

/// Append rows to the runs CSV, writing the header when the file is new.
/// Appends from parallel workers in this process are serialized by an
/// exclusive lock.
pub fn append_runs_csv(path: impl AsRef<Path>, rows: &[RunRow]) -> Result<()> {
    let path = path.as_ref();
    let _guard = CSV_APPEND_LOCK.lock().expect("csv lock poisoned");
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut out = String::new();
    if fresh {
        out.push_str(RUNS_CSV_HEADER);
        out.push('\n');
    }
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Vec<RunRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RUNS_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::format(
                path,
                format!("unexpected header '{header}'"),
            ))
        }
        None => return Err(Error::format(path, "empty runs file".to_string())),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| RunRow::from_csv_line(l, path, i + 1))
        .collect()
}

/// One aggregated table cell: a (method, dataset, setting, target, lambda,
/// eta) group summarized over its seeds.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub dataset: String,
    pub setting: String,
    pub target_domain: usize,
    pub lambda: f64,
    pub eta: f64,
    pub dg: AggregateCell,
    pub zsdg: AggregateCell,
}

/// Group rows by everything except the seed and aggregate each group.
/// Groups come back sorted by key.
pub fn aggregate_rows(rows: &[RunRow]) -> Result<Vec<AggregateRow>> {
    use std::collections::BTreeMap;
    // lambda/eta are keyed by their printed form so f64 grouping stays Ord
    type CellKey = (String, String, String, usize, String, String);
    let mut groups: BTreeMap<CellKey, Vec<&RunRow>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((
                row.method.clone(),
                row.dataset.clone(),
                row.setting.clone(),
                row.target_domain,
                format!("{}", row.lambda),
                format!("{}", row.eta),
            ))
            .or_default()
            .push(row);
    }
    groups
        .into_values()
        .map(|group| {
            let dg: Vec<f64> = group.iter().map(|r| r.dg_acc).collect();
            let zsdg: Vec<f64> = group.iter().map(|r| r.zsdg_acc).collect();
            let first = group[0];
            Ok(AggregateRow {
                method: first.method.clone(),
                dataset: first.dataset.clone(),
                setting: first.setting.clone(),
                target_domain: first.target_domain,
                lambda: first.lambda,
                eta: first.eta,
                dg: aggregate(&dg)?,
                zsdg: aggregate(&zsdg)?,
            })
        })
        .collect()
}

/// Write records to a CSV and a JSON report (runs plus aggregates).
pub fn emit_report(
    rows: &[RunRow],
    out_csv: impl AsRef<Path>,
    out_json: impl AsRef<Path>,
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::stats("no run records to report"));
    }
    let mut csv = String::from(RUNS_CSV_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.to_csv_line());
        csv.push('\n');
    }
    crate::engine::checkpoint::write_atomic(out_csv, csv.as_bytes())?;

    let report = serde_json::json!({
        "runs": rows,
        "aggregates": aggregate_rows(rows)?,
    });
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::usage(format!("report serialization failed: {e}")))?;
    crate::engine::checkpoint::write_atomic(out_json, text.as_bytes())
}

/// How runs are paired for the significance test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingGranularity {
    /// One paired value per (dataset, setting).
    Setting,
    /// One paired value per (dataset, setting, target domain).
    Domain,
}

/// Build paired per-cell mean accuracies for two methods. Cells missing
/// either method are skipped; the metric is ZSDG accuracy when `use_zsdg`,
/// DG accuracy otherwise. Returns `(a_means, b_means, cell_labels)`.
pub fn paired_means(
    rows: &[RunRow],
    method_a: &str,
    method_b: &str,
    pairing: PairingGranularity,
    use_zsdg: bool,
) -> Result<(Vec<f64>, Vec<f64>, Vec<String>)> {
    use std::collections::BTreeMap;
    type Key = (String, String, Option<usize>);
    type PairedValues = (Vec<f64>, Vec<f64>);
    let mut cells: BTreeMap<Key, PairedValues> = BTreeMap::new();
    for row in rows {
        let key: Key = match pairing {
            PairingGranularity::Setting => (row.dataset.clone(), row.setting.clone(), None),
            PairingGranularity::Domain => (
                row.dataset.clone(),
                row.setting.clone(),
                Some(row.target_domain),
            ),
        };
        let value = if use_zsdg { row.zsdg_acc } else { row.dg_acc };
        let entry = cells.entry(key).or_default();
        if row.method == method_a {
            entry.0.push(value);
        }
        if row.method == method_b {
            entry.1.push(value);
        }
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut labels = Vec::new();
    for ((dataset, setting, target), (va, vb)) in cells {
        if va.is_empty() || vb.is_empty() {
            continue;
        }
        a.push(va.iter().sum::<f64>() / va.len() as f64);
        b.push(vb.iter().sum::<f64>() / vb.len() as f64);
        labels.push(match target {
            Some(t) => format!("{dataset}/{setting}/D{t}"),
            None => format!("{dataset}/{setting}"),
        });
    }
    if a.is_empty() {
        return Err(Error::stats(format!(
            "no cells hold both '{method_a}' and '{method_b}' runs"
        )));
    }
    Ok((a, b, labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, target: usize, zsdg: f64) -> RunRow {
        RunRow {
            method: method.to_string(),
            dataset: "synthetic".to_string(),
            setting: "setting1".to_string(),
            target_domain: target,
            seed,
            lambda: 1.0,
            eta: 0.0,
            dg_acc: 0.5 + zsdg / 10.0,
            zsdg_acc: zsdg,
            wall_s: 0.0,
        }
    }

    #[test]
    fn append_then_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let rows = vec![row("s-agg", 0, 3, 0.8125), row("agg", 1, 3, 0.5)];
        append_runs_csv(&path, &rows[..1]).unwrap();
        append_runs_csv(&path, &rows[1..]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3, "header + 2 rows:\n{text}");
        let back = read_runs_csv(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn full_precision_floats_survive_reparse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("runs.csv");
        let mut r = row("s-agg", 0, 0, 0.1 + 0.2);
        r.wall_s = std::f64::consts::PI;
        r.lambda = 1.0 / 3.0;
        append_runs_csv(&path, &[r.clone()]).unwrap();
        let back = read_runs_csv(&path).unwrap();
        assert_eq!(back[0].zsdg_acc.to_bits(), r.zsdg_acc.to_bits());
        assert_eq!(back[0].wall_s.to_bits(), r.wall_s.to_bits());
        assert_eq!(back[0].lambda.to_bits(), r.lambda.to_bits());
    }

    #[test]
    fn aggregates_group_by_cell() {
        let rows = vec![
            row("s-agg", 0, 3, 0.8),
            row("s-agg", 1, 3, 0.9),
            row("agg", 0, 3, 0.5),
        ];
        let agg = aggregate_rows(&rows).unwrap();
        assert_eq!(agg.len(), 2);
        let sagg = agg.iter().find(|a| a.method == "s-agg").unwrap();
        assert_eq!(sagg.zsdg.n_seeds, 2);
        assert!((sagg.zsdg.mean - 0.85).abs() < 1e-12);
    }

    #[test]
    fn emit_report_writes_csv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("report.csv");
        let json = dir.path().join("report.json");
        let rows = vec![row("s-agg", 0, 3, 0.8), row("s-agg", 1, 3, 0.9)];
        emit_report(&rows, &csv, &json).unwrap();
        let text = fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        let parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        assert_eq!(parsed["runs"].as_array().unwrap().len(), 2);
        assert_eq!(parsed["aggregates"].as_array().unwrap().len(), 1);
        assert!(emit_report(&[], &csv, &json).is_err());
    }

    #[test]
    fn pairing_by_domain_and_setting() {
        let mut rows = Vec::new();
        for target in 0..3 {
            for seed in 0..2 {
                rows.push(row("s-agg", seed, target, 0.8 + target as f64 / 100.0));
                rows.push(row("agg", seed, target, 0.5));
            }
        }
        let (a, b, labels) =
            paired_means(&rows, "s-agg", "agg", PairingGranularity::Domain, true).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(b, vec![0.5, 0.5, 0.5]);
        assert!(labels[0].contains("D0"));
        let (a, _, labels) =
            paired_means(&rows, "s-agg", "agg", PairingGranularity::Setting, true).unwrap();
        assert_eq!(a.len(), 1);
        assert!((a[0] - 0.81).abs() < 1e-12);
        assert_eq!(labels, vec!["synthetic/setting1"]);
    }

    #[test]
    fn pairing_requires_both_methods() {
        let rows = vec![row("s-agg", 0, 0, 0.8)];
        assert!(paired_means(&rows, "s-agg", "agg", PairingGranularity::Setting, true).is_err());
    }
}
