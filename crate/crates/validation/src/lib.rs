//! Reporting helpers for the acceptance runner.
//!
//! A criterion is a list of named checks. It passes when every check does.
//! Each criterion prints one `[PASS]` or `[FAIL]` line followed by its
//! checks, so failures show what was measured against which bound.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

#[derive(Clone, Debug)]
pub struct Check {
    pub description: String,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct Criterion {
    pub id: u32,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl Criterion {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            out,
            "[{verdict}] criterion {}: {} ({:.2} s)",
            self.id,
            self.title,
            self.elapsed.as_secs_f64()
        );
        for c in &self.checks {
            let mark = if c.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(out, "         {mark} {}", c.description);
        }
        out
    }
}

/// Collects checks while timing the criterion body.
pub struct Recorder {
    id: u32,
    title: &'static str,
    start: Instant,
    checks: Vec<Check>,
}

impl Recorder {
    pub fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            start: Instant::now(),
            checks: Vec::new(),
        }
    }

    pub fn check(&mut self, passed: bool, description: impl Into<String>) -> bool {
        self.checks.push(Check {
            description: description.into(),
            passed,
        });
        passed
    }

    /// Records a failed check for an error that aborted part of the run.
    pub fn error(&mut self, context: &str, err: impl std::fmt::Display) {
        self.check(false, format!("{context}: error: {err}"));
    }

    pub fn elapsed(&self) -> Duration {
        self.start.elapsed()
    }

    pub fn finish(self) -> Criterion {
        Criterion {
            id: self.id,
            title: self.title,
            checks: self.checks,
            elapsed: self.start.elapsed(),
        }
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_line() {
        assert!((slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_criterion_fails() {
        assert!(!Recorder::new(1, "x").finish().passed());
    }
}
