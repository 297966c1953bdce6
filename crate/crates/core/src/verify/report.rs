use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// How a report decides pass or fail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Criterion {
    /// |estimate - target| <= k * stderr.
    StdErr { k: f64 },
    /// p_value >= threshold.
    PValue { threshold: f64 },
    /// |estimate / target - 1| <= tol.
    RelTol { tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub estimate: f64,
    pub target: f64,
    pub stderr: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub criterion: Criterion,
    pub pass: bool,
    /// Parameters of the run.
    pub config: serde_json::Value,
}

impl TestReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        estimate: f64,
        target: f64,
        stderr: Option<f64>,
        p_value: Option<f64>,
        n: usize,
        criterion: Criterion,
        config: serde_json::Value,
    ) -> Self {
        let mut r = Self {
            name: name.into(),
            estimate,
            target,
            stderr,
            p_value,
            n,
            criterion,
            pass: false,
            config,
        };
        r.pass = r.evaluate();
        r
    }

    /// Recomputes the pass flag from the other fields.
    pub fn evaluate(&self) -> bool {
        match self.criterion {
            Criterion::StdErr { k } => self
                .stderr
                .is_some_and(|se| (self.estimate - self.target).abs() <= k * se),
            Criterion::PValue { threshold } => self.p_value.is_some_and(|p| p >= threshold),
            Criterion::RelTol { tol } => (self.estimate / self.target - 1.0).abs() <= tol,
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

pub fn write_json_lines<W: Write>(mut w: W, reports: &[TestReport]) -> Result<()> {
    for r in reports {
        writeln!(w, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// Fixed-width summary, one line per report.
pub fn render_table(reports: &[TestReport]) -> String {
    let mut s = format!(
        "{:<28} {:>12} {:>12} {:>10} {:>10} {:>9} {:<6}\n",
        "test", "estimate", "target", "stderr", "p-value", "n", "result"
    );
    let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4e}"));
    for r in reports {
        let _ = writeln!(
            s,
            "{:<28} {:>12.6} {:>12.6} {:>10} {:>10} {:>9} {:<6}",
            r.name,
            r.estimate,
            r.target,
            opt(r.stderr),
            opt(r.p_value),
            r.n,
            if r.pass { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(criterion: Criterion) -> TestReport {
        TestReport::new("t", 0.70, 2.0 / 3.0, Some(0.01), Some(0.2), 100, criterion, serde_json::json!({}))
    }

    #[test]
    fn criteria() {
        assert!(report(Criterion::StdErr { k: 4.0 }).pass);
        assert!(!report(Criterion::StdErr { k: 3.0 }).pass);
        assert!(report(Criterion::PValue { threshold: 0.01 }).pass);
        assert!(!report(Criterion::PValue { threshold: 0.5 }).pass);
        assert!(report(Criterion::RelTol { tol: 0.06 }).pass);
        assert!(!report(Criterion::RelTol { tol: 0.04 }).pass);
    }

    #[test]
    fn json_round_trip_keeps_verdict() {
        let r = report(Criterion::StdErr { k: 4.0 });
        let back: TestReport = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.evaluate(), back.pass);
        let table = render_table(&[r]);
        assert!(table.lines().nth(1).unwrap().ends_with("PASS  "));
    }
}
