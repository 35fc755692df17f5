//! Closed-form tables with their reference values embedded for comparison.

use std::path::{Path, PathBuf};

use attribution_core::metrics::{lcm_fairness_table, lcm_homog_bounds, pvm_homog_accuracy, ratio_table, tree_accuracy_lower};
use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableId {
    Bounds,
    Ratio,
    Fairness,
}

impl TableId {
    pub fn as_str(self) -> &'static str {
        match self {
            TableId::Bounds => "bounds",
            TableId::Ratio => "ratio",
            TableId::Fairness => "fairness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub table: &'static str,
    pub row: String,
    pub column: String,
    pub value: f64,
    /// Reference value, at its printed precision.
    pub expected: Option<String>,
    pub matches: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub id: TableId,
    pub cells: Vec<TableCell>,
}

impl TableReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &TableCell> {
        self.cells.iter().filter(|c| c.matches == Some(false))
    }

    pub fn passed(&self) -> bool {
        self.mismatches().next().is_none()
    }
}

/// `value` rounded to as many decimals as `expected` shows equals `expected`.
pub fn matches_reference(value: f64, expected: &str) -> bool {
    let decimals = expected.split_once('.').map_or(0, |(_, d)| d.len());
    format!("{value:.decimals$}") == expected
}

fn cell(table: TableId, row: impl Into<String>, column: &str, value: f64, expected: Option<&str>) -> TableCell {
    TableCell {
        table: table.as_str(),
        row: row.into(),
        column: column.to_string(),
        value,
        expected: expected.map(str::to_string),
        matches: expected.map(|e| matches_reference(value, e)),
    }
}

const PVM: [&str; 4] = ["0.75", "0.6151", "0.5275", "0.4650"];
const LCM_UPPER: [&str; 4] = ["0.3431", "0.3336", "0.2314", "0.1605"];
const RATIO: [&str; 4] = ["2.1857", "1.8437", "2.2799", "2.8977"];

pub fn build_table(id: TableId) -> TableReport {
    let mut cells = Vec::new();
    match id {
        TableId::Bounds => {
            for n in 2..=5usize {
                let row = format!("n={n}");
                let k = n - 2;
                let b = lcm_homog_bounds(n);
                cells.push(cell(id, &row, "pvm_homogeneous", pvm_homog_accuracy(n), Some(PVM[k])));
                match b.tight {
                    Some(t) => cells.push(cell(id, &row, "lcm_homogeneous_tight", t, Some(LCM_UPPER[k]))),
                    None => {
                        cells.push(cell(id, &row, "lcm_homogeneous_lower", b.lower, None));
                        cells.push(cell(id, &row, "lcm_homogeneous_upper", b.upper, Some(LCM_UPPER[k])));
                    }
                }
                if n == 2 {
                    cells.push(cell(id, &row, "pvm_heterogeneous", 19.0 / 27.0, Some("0.7037")));
                } else {
                    cells.push(cell(id, &row, "pvm_heterogeneous_lower", tree_accuracy_lower(n), None));
                    cells.push(cell(id, &row, "pvm_heterogeneous_upper", pvm_homog_accuracy(n), Some(PVM[k])));
                }
                cells.push(cell(id, &row, "lcm_heterogeneous", 0.0, Some("0")));
            }
        }
        TableId::Ratio => {
            for (k, r) in ratio_table().into_iter().enumerate() {
                let row = format!("n={}", r.n);
                cells.push(cell(id, &row, "pvm", r.pvm, Some(PVM[k])));
                cells.push(cell(id, &row, "lcm_upper", r.lcm, Some(LCM_UPPER[k])));
                cells.push(cell(id, &row, "ratio", r.ratio, Some(RATIO[k])));
            }
        }
        TableId::Fairness => {
            for r in lcm_fairness_table(5) {
                match r.scenario.as_str() {
                    "homogeneous n=2" => cells.push(cell(id, &r.scenario, "worst_case", r.upper, Some("0.828"))),
                    "heterogeneous" => cells.push(cell(id, &r.scenario, "worst_case", r.upper, Some("0"))),
                    _ => {
                        cells.push(cell(id, &r.scenario, "lower_open", r.lower, None));
                        cells.push(cell(id, &r.scenario, "upper", r.upper, None));
                    }
                }
            }
        }
    }
    TableReport { id, cells }
}

/// Writes `table_<id>.csv` and `table_<id>.json` into `dir`.
pub fn write_table(report: &TableReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("table_{}.csv", report.id.as_str()));
    let json_path = dir.join(format!("table_{}.json", report.id.as_str()));
    let mut w = csv::Writer::from_path(&csv_path)?;
    for c in &report.cells {
        w.serialize(c)?;
    }
    w.flush()?;
    std::fs::write(&json_path, serde_json::to_string_pretty(report)? + "\n")?;
    Ok((csv_path, json_path))
}

pub fn render(report: &TableReport) -> String {
    let mut s = String::new();
    for c in &report.cells {
        let status = match (&c.expected, c.matches) {
            (Some(e), Some(true)) => format!("ok ({e})"),
            (Some(e), _) => format!("MISMATCH, expected {e}"),
            _ => String::new(),
        };
        s.push_str(&format!("{:<18} {:<26} {:>10.6}  {status}\n", c.row, c.column, c.value));
    }
    s
}

pub fn cmd_table(id: TableId, out: &Path) -> Result<TableReport> {
    let report = build_table(id);
    write_table(&report, out)?;
    Ok(report)
}
