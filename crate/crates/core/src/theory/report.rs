use std::fmt::Write as _;

use crate::solver::fmt_f64;

pub const REPORT_COLUMNS: &str = "check_name,metric,value,threshold,pass";

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRow {
    pub check_name: String,
    pub metric: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    /// Records `value ≤ threshold`.
    pub fn at_most(&mut self, check: &str, metric: &str, value: f64, threshold: f64) {
        self.push(check, metric, value, threshold, value <= threshold);
    }

    /// Records `value ≥ threshold`.
    pub fn at_least(&mut self, check: &str, metric: &str, value: f64, threshold: f64) {
        self.push(check, metric, value, threshold, value >= threshold);
    }

    pub fn push(&mut self, check: &str, metric: &str, value: f64, threshold: f64, pass: bool) {
        self.rows.push(ValidationRow {
            check_name: check.into(),
            metric: metric.into(),
            value,
            threshold,
            pass,
        });
    }

    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_COLUMNS);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.check_name,
                r.metric,
                fmt_f64(r.value),
                fmt_f64(r.threshold),
                r.pass
            );
        }
        s
    }
}
