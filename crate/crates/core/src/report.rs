//! Verdict reports in text and JSON form.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::assertions::{overall_status, EnsembleMode, EvalOptions, Evaluation, Status, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    /// Benchmark name or source file.
    pub target: String,
    pub bug: Option<String>,
    /// Ensemble size override; `None` means per-assertion defaults.
    pub shots: Option<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub mode: EnsembleMode,
    pub status: Status,
    pub verdicts: Vec<Verdict>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(target: &str, bug: Option<&str>, opts: &EvalOptions, eval: Evaluation) -> Self {
        Self {
            target: target.to_string(),
            bug: bug.map(str::to_string),
            shots: opts.shots,
            seed: opts.seed,
            alpha: opts.alpha,
            mode: opts.mode,
            status: overall_status(eval.verdicts.iter().map(|v| &v.check.status)),
            verdicts: eval.verdicts,
            warnings: eval.warnings,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_text(),
            Format::Json => self.to_json(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let bug = self
            .bug
            .as_deref()
            .map_or(String::new(), |b| format!(" bug={b}"));
        let _ = writeln!(
            out,
            "{}{bug} seed={} alpha={}",
            self.target, self.seed, self.alpha
        );
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        for v in &self.verdicts {
            out.push_str(&verdict_line(v));
            out.push('\n');
        }
        let _ = writeln!(out, "overall: {}", self.status);
        out
    }
}

fn verdict_line(v: &Verdict) -> String {
    let c = &v.check;
    let stat = c.statistic.map_or("-".to_string(), |s| format!("{s:.4}"));
    let dof = c.dof.map_or("-".to_string(), |d| d.to_string());
    let p = c.p_value.map_or("-".to_string(), |p| format!("{p:.4e}"));
    let mut flags = Vec::new();
    if c.low_power {
        flags.push("low-power");
    }
    if c.degenerate {
        flags.push("degenerate");
    }
    let mut line = format!(
        "line {:>3}  assert {:<28} shots={:<4} chi2={stat} dof={dof} p={p}  {}",
        v.assertion.line,
        v.assertion.kind.to_string(),
        v.shots,
        c.status
    );
    if !flags.is_empty() {
        let _ = write!(line, " [{}]", flags.join(", "));
    }
    if let Some(note) = &c.note {
        let _ = write!(line, " ({note})");
    }
    line
}
