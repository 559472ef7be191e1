use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use super::stats::{Estimate, LineFit};
use super::ExperimentConfig;

/// A pass/fail check with the quantities it compared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

/// Named columns of numbers.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Vec<f64> {
        let i = self.columns.iter().position(|c| c == name).expect("known column");
        self.rows.iter().map(|r| r[i]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub name: String,
    pub config: Option<ExperimentConfig>,
    pub estimates: BTreeMap<String, Estimate>,
    pub values: BTreeMap<String, f64>,
    pub fits: BTreeMap<String, LineFit>,
    pub tables: BTreeMap<String, Table>,
    pub gates: Vec<Gate>,
}

impl SummaryReport {
    pub fn new(name: &str, config: Option<&ExperimentConfig>) -> Self {
        SummaryReport {
            name: name.to_string(),
            config: config.cloned(),
            estimates: BTreeMap::new(),
            values: BTreeMap::new(),
            fits: BTreeMap::new(),
            tables: BTreeMap::new(),
            gates: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }

    pub fn estimate(&mut self, key: &str, e: Estimate) {
        self.estimates.insert(key.to_string(), e);
    }

    pub fn value(&mut self, key: &str, v: f64) {
        self.values.insert(key.to_string(), v);
    }

    /// Records `value <= threshold`.
    pub fn gate_le(&mut self, name: &str, value: f64, threshold: f64, detail: impl Into<String>) -> bool {
        let passed = value <= threshold;
        self.gates.push(Gate { name: name.to_string(), passed, value, threshold, detail: detail.into() });
        passed
    }

    /// Records `|value - target| <= tol`.
    pub fn gate_within(&mut self, name: &str, value: f64, target: f64, tol: f64) -> bool {
        let passed = (value - target).abs() <= tol;
        self.gates.push(Gate {
            name: name.to_string(),
            passed,
            value,
            threshold: tol,
            detail: format!("target {target} +- {tol}"),
        });
        passed
    }

    pub fn gate_bool(&mut self, name: &str, passed: bool, detail: impl Into<String>) -> bool {
        self.gates.push(Gate {
            name: name.to_string(),
            passed,
            value: passed as u8 as f64,
            threshold: 1.0,
            detail: detail.into(),
        });
        passed
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== {} ==", self.name);
        if !self.estimates.is_empty() {
            let w = self.estimates.keys().map(|k| k.len()).max().unwrap_or(0);
            for (k, e) in &self.estimates {
                let _ = writeln!(out, "  {k:<w$}  {:>14.6e} +- {:<12.4e} (n = {})", e.mean, e.standard_error, e.count);
            }
        }
        if !self.values.is_empty() {
            let w = self.values.keys().map(|k| k.len()).max().unwrap_or(0);
            for (k, v) in &self.values {
                let _ = writeln!(out, "  {k:<w$}  {v:>14.6e}");
            }
        }
        for (k, f) in &self.fits {
            let _ = writeln!(out, "  fit {k}: slope {:.4} +- {:.4}", f.slope, f.slope_standard_error);
        }
        for (k, t) in &self.tables {
            let _ = writeln!(out, "  table {k}");
            let header: Vec<String> = t.columns.iter().map(|c| format!("{c:>14}")).collect();
            let _ = writeln!(out, "    {}", header.join(" "));
            for row in &t.rows {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
                let _ = writeln!(out, "    {}", cells.join(" "));
            }
        }
        for g in &self.gates {
            let mark = if g.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  [{mark}] {} (value {:.6e}, threshold {:.6e}) {}", g.name, g.value, g.threshold, g.detail);
        }
        out
    }
}

/// Reports of several suites run together.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedReport {
    pub seed: u64,
    pub passed: bool,
    pub reports: Vec<SummaryReport>,
}

impl CombinedReport {
    pub fn new(seed: u64, reports: Vec<SummaryReport>) -> Self {
        CombinedReport { seed, passed: reports.iter().all(|r| r.passed()), reports }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.reports {
            out.push_str(&r.to_text());
        }
        let _ = writeln!(out, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_csv_layout() {
        let mut t = Table::new(&["ell", "mse"]);
        t.push(vec![4.0, 0.5]);
        t.push(vec![8.0, 1e-7]);
        assert_eq!(t.to_csv(), "ell,mse\n4,0.5\n8,0.0000001\n");
        assert_eq!(t.column("mse"), vec![0.5, 1e-7]);
    }

    #[test]
    fn gates_and_rendering() {
        let mut r = SummaryReport::new("demo", None);
        assert!(r.gate_le("small", 1.0, 2.0, ""));
        assert!(!r.gate_within("near", 1.0, 3.0, 0.5));
        assert!(!r.passed());
        let text = r.to_text();
        assert!(text.contains("[PASS] small") && text.contains("[FAIL] near"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["gates"][1]["passed"], false);
        let all = CombinedReport::new(1, vec![r]);
        assert!(!all.passed);
    }
}
