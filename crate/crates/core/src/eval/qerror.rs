use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// `max(e, a) / min(e, a)` after flooring both at 1.
pub fn qerror(estimate: f64, actual: f64) -> f64 {
    let e = if estimate.is_finite() { estimate.max(1.0) } else { f64::MAX };
    let a = actual.max(1.0);
    e.max(a) / e.min(a)
}

/// Linear interpolation between closest ranks; `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QErrorRow {
    pub id: usize,
    pub label: String,
    pub estimate: f64,
    pub actual: u64,
    pub qerror: f64,
    /// `estimate / actual`, floored like the q-error.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QErrorReport {
    pub rows: Vec<QErrorRow>,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl QErrorReport {
    /// `entries` are `(label, estimate, actual)`.
    pub fn new(entries: impl IntoIterator<Item = (String, f64, u64)>) -> Self {
        let rows: Vec<QErrorRow> = entries
            .into_iter()
            .enumerate()
            .map(|(id, (label, estimate, actual))| QErrorRow {
                id,
                label,
                estimate,
                actual,
                qerror: qerror(estimate, actual as f64),
                ratio: estimate.max(1.0) / (actual as f64).max(1.0),
            })
            .collect();
        let mut q: Vec<f64> = rows.iter().map(|r| r.qerror).collect();
        q.sort_by(f64::total_cmp);
        if q.is_empty() {
            return Self { rows, mean: f64::NAN, p50: f64::NAN, p95: f64::NAN, p99: f64::NAN, max: f64::NAN };
        }
        Self {
            mean: q.iter().sum::<f64>() / q.len() as f64,
            p50: percentile(&q, 50.0),
            p95: percentile(&q, 95.0),
            p99: percentile(&q, 99.0),
            max: *q.last().unwrap(),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "label", "estimate", "actual", "qerror", "ratio"]).unwrap();
        for r in &self.rows {
            w.write_record([
                r.id.to_string(),
                r.label.clone(),
                format!("{:.6}", r.estimate),
                r.actual.to_string(),
                format!("{:.6}", r.qerror),
                format!("{:.6}", r.ratio),
            ])
            .unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:>8} {:>10} {:>10} {:>10} {:>10} {:>10}", "queries", "mean", "50th", "95th", "99th", "max")
            .unwrap();
        writeln!(
            s,
            "{:>8} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            self.rows.len(),
            self.mean,
            self.p50,
            self.p95,
            self.p99,
            self.max
        )
        .unwrap();
        writeln!(s, "zero estimates and zero true cardinalities are floored to 1").unwrap();
        s
    }
}
