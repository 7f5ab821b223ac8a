//! Machine-readable command reports.
//!
//! JSON is emitted with sorted keys. [`Report::deterministic_json`] drops the
//! wall-clock total and the values of timing-derived metrics, so reruns with
//! the same seed, config and inputs compare byte for byte.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// How a metric value is compared against its tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `value <= tolerance`.
    AtMost,
    /// `value < tolerance`.
    Below,
    /// `value >= tolerance`.
    AtLeast,
    /// Informational; always passes.
    Info,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub metric: String,
    pub value: f64,
    pub unit: String,
    pub bound: Bound,
    pub tolerance: Option<f64>,
    pub pass: bool,
    /// Derived from wall-clock measurements.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub timing: bool,
}

impl Metric {
    fn checked(metric: &str, value: f64, unit: &str, bound: Bound, tolerance: Option<f64>) -> Self {
        let mut m = Metric {
            metric: metric.to_string(),
            value,
            unit: unit.to_string(),
            bound,
            tolerance,
            pass: false,
            timing: false,
        };
        m.evaluate();
        m
    }

    pub fn at_most(metric: &str, value: f64, unit: &str, tolerance: f64) -> Self {
        Self::checked(metric, value, unit, Bound::AtMost, Some(tolerance))
    }

    pub fn below(metric: &str, value: f64, unit: &str, tolerance: f64) -> Self {
        Self::checked(metric, value, unit, Bound::Below, Some(tolerance))
    }

    pub fn at_least(metric: &str, value: f64, unit: &str, tolerance: f64) -> Self {
        Self::checked(metric, value, unit, Bound::AtLeast, Some(tolerance))
    }

    pub fn info(metric: &str, value: f64, unit: &str) -> Self {
        Self::checked(metric, value, unit, Bound::Info, None)
    }

    pub fn timed(mut self) -> Self {
        self.timing = true;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = Some(tolerance);
        self.evaluate();
        self
    }

    /// Recomputes `pass`; NaN values never pass a checked bound.
    fn evaluate(&mut self) {
        self.pass = match (self.bound, self.tolerance) {
            (Bound::Info, _) => true,
            (_, None) => false,
            (Bound::AtMost, Some(t)) => self.value <= t,
            (Bound::Below, Some(t)) => self.value < t,
            (Bound::AtLeast, Some(t)) => self.value >= t,
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub results: Vec<Metric>,
    /// Command-specific structured output (e.g. pack manifests).
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
    pub wall_clock_s: f64,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Report {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            results: Vec::new(),
            details: Value::Null,
            wall_clock_s: 0.0,
        })
    }

    pub fn push(&mut self, m: Metric) {
        self.results.push(m);
    }

    pub fn extend(&mut self, ms: impl IntoIterator<Item = Metric>) {
        self.results.extend(ms);
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.results.iter().find(|m| m.metric == name)
    }

    pub fn all_pass(&self) -> bool {
        self.results.iter().all(|m| m.pass)
    }

    /// Replaces the tolerance of each named metric and re-evaluates it.
    pub fn apply_overrides(&mut self, overrides: &[(String, f64)]) -> Result<()> {
        for (name, tol) in overrides {
            let m = self
                .results
                .iter_mut()
                .find(|m| &m.metric == name)
                .ok_or_else(|| Error::InvalidArgument(format!("no metric named `{name}` in this report")))?;
            *m = m.clone().with_tolerance(*tol);
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        pretty(serde_json::to_value(self).expect("report serializes"))
    }

    /// JSON without the wall-clock total and without the values and verdicts
    /// of timing metrics.
    pub fn deterministic_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let obj = v.as_object_mut().expect("report is an object");
        obj.remove("wall_clock_s");
        if let Some(Value::Array(results)) = obj.get_mut("results") {
            for r in results {
                let r = r.as_object_mut().expect("metric is an object");
                if r.contains_key("timing") {
                    r.remove("value");
                    r.remove("pass");
                }
            }
        }
        pretty(v)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("report.json"), &self.to_json())
    }
}

fn pretty(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    let fail = |source| Error::Output {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(fail)?;
    }
    std::fs::write(path, contents).map_err(fail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Metric::at_most("a", 1.0, "", 1.0).pass);
        assert!(!Metric::below("a", 1.0, "", 1.0).pass);
        assert!(Metric::at_least("a", 2.0, "", 1.0).pass);
        assert!(!Metric::at_most("a", f64::NAN, "", 1.0).pass);
        assert!(!Metric::at_least("a", f64::NAN, "", 1.0).pass);
        assert!(Metric::info("a", f64::NAN, "").pass);
        assert!(!Metric::at_most("a", 1e-13, "", 1e-12).with_tolerance(0.0).pass);
    }

    #[test]
    fn keys_are_sorted_and_timing_is_stripped() {
        let mut r = Report::new("demo", 3, &serde_json::json!({"z": 1, "a": 2})).unwrap();
        r.push(Metric::at_most("err", 0.5, "abs", 1.0));
        r.push(Metric::info("slope", 1.1, "").timed());
        r.wall_clock_s = 12.5;
        let full = r.to_json();
        assert!(full.find("\"a\"").unwrap() < full.find("\"z\"").unwrap());
        assert!(full.find("\"command\"").unwrap() < full.find("\"wall_clock_s\"").unwrap());
        let det = r.deterministic_json();
        assert!(!det.contains("wall_clock_s"));
        assert!(!det.contains("1.1"));
        assert!(det.contains("0.5"));
        r.wall_clock_s = 99.0;
        r.results[1].value = 7.0;
        assert_eq!(r.deterministic_json(), det);
    }

    #[test]
    fn overrides() {
        let mut r = Report::new("demo", 0, &()).unwrap();
        r.push(Metric::at_most("err", 1e-14, "abs", 1e-12));
        assert!(r.all_pass());
        r.apply_overrides(&[("err".into(), 0.0)]).unwrap();
        assert!(!r.all_pass());
        assert!(r.apply_overrides(&[("missing".into(), 1.0)]).is_err());
    }
}
