use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{classify_failure, score, FailureCategory, Instance, Score, Tolerance};
use crate::agents::{AgentKind, FailStage, Outcome, RunRecord, RunSettings};
use crate::llm::{prompt_stats, PromptRecord, PromptStats};

/// One instance's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub id: String,
    /// `solved`, `budget_exhausted` or `failed`.
    pub outcome: String,
    pub score: Score,
    pub objective: Option<f64>,
    pub truth: f64,
    /// Relative to |truth|, or absolute when the truth is zero.
    pub rel_error: Option<f64>,
    pub category: Option<FailureCategory>,
    pub stage: Option<FailStage>,
    pub message: Option<String>,
    pub calls: IndexMap<AgentKind, u32>,
    pub total_calls: u32,
    pub fix_attempts: u32,
    pub prompts: usize,
    pub prompt_chars_mean: f64,
    pub prompt_chars_max: usize,
    pub wall_ms: u64,
}

impl Row {
    pub fn new(instance: &Instance, record: &RunRecord, tol: Tolerance, wall_ms: u64) -> Self {
        let s = score(&record.outcome, instance.optimal, tol);
        let objective = record.outcome.objective();
        let rel_error = objective.map(|o| {
            let d = (o - instance.optimal).abs();
            if instance.optimal == 0.0 {
                d
            } else {
                d / instance.optimal.abs()
            }
        });
        let (stage, message) = match &record.outcome {
            Outcome::Failed { stage, message } => (Some(*stage), Some(message.clone())),
            _ => (None, None),
        };
        let calls = AgentKind::ALL
            .iter()
            .map(|a| (*a, record.calls_used.get(a).copied().unwrap_or(0)))
            .collect();
        let chars: Vec<usize> = record.prompts.iter().map(|p| p.chars).collect();
        Row {
            id: instance.id.clone(),
            outcome: record.outcome.label().to_string(),
            score: s,
            objective,
            truth: instance.optimal,
            rel_error,
            category: (s != Score::Correct).then(|| classify_failure(record, instance)),
            stage,
            message,
            calls,
            total_calls: record.total_calls,
            fix_attempts: record.fix_attempts,
            prompts: chars.len(),
            prompt_chars_mean: if chars.is_empty() {
                0.0
            } else {
                chars.iter().sum::<usize>() as f64 / chars.len() as f64
            },
            prompt_chars_max: chars.iter().copied().max().unwrap_or(0),
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub settings: RunSettings,
    pub total: usize,
    pub correct: usize,
    pub incorrect: usize,
    pub failed: usize,
    pub accuracy: f64,
    /// Every category, including those with no failures.
    pub failures: IndexMap<FailureCategory, usize>,
    /// Mean calls per instance for each agent.
    pub mean_calls: IndexMap<AgentKind, f64>,
    pub mean_total_calls: f64,
    pub prompt_stats: Option<PromptStats>,
    pub rows: Vec<Row>,
    pub wall_ms: u64,
}

impl Report {
    /// Aggregate `rows`; `prompts` are every prompt sent by the runs.
    pub fn from_rows(settings: RunSettings, rows: Vec<Row>, prompts: &[PromptRecord]) -> Self {
        let total = rows.len();
        let count = |s: Score| rows.iter().filter(|r| r.score == s).count();
        let mut failures: IndexMap<FailureCategory, usize> =
            FailureCategory::ALL.iter().map(|c| (*c, 0)).collect();
        for c in rows.iter().filter_map(|r| r.category) {
            *failures.entry(c).or_insert(0) += 1;
        }
        let mean = |f: &dyn Fn(&Row) -> u32| {
            if total == 0 {
                0.0
            } else {
                rows.iter().map(|r| f(r) as f64).sum::<f64>() / total as f64
            }
        };
        let mean_calls = AgentKind::ALL
            .iter()
            .map(|a| (*a, mean(&|r: &Row| r.calls.get(a).copied().unwrap_or(0))))
            .collect();
        let correct = count(Score::Correct);
        Report {
            settings,
            total,
            correct,
            incorrect: count(Score::Incorrect),
            failed: count(Score::Failed),
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            failures,
            mean_calls,
            mean_total_calls: mean(&|r: &Row| r.total_calls),
            prompt_stats: prompt_stats(prompts).ok(),
            rows,
            wall_ms: 0,
        }
    }

    /// Recompute the aggregates from the rows and compare.
    pub fn verify(&self) -> Result<(), String> {
        let again = Report::from_rows(self.settings, self.rows.clone(), &[]);
        let fields = [
            ("total", self.total == again.total),
            ("correct", self.correct == again.correct),
            ("incorrect", self.incorrect == again.incorrect),
            ("failed", self.failed == again.failed),
            ("accuracy", self.accuracy == again.accuracy),
            ("failures", self.failures == again.failures),
            ("mean_calls", self.mean_calls == again.mean_calls),
            ("mean_total_calls", self.mean_total_calls == again.mean_total_calls),
            (
                "category sum",
                self.failures.values().sum::<usize>() == self.incorrect + self.failed,
            ),
        ];
        match fields.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(format!("report field `{name}` does not match its rows")),
            None => Ok(()),
        }
    }

    /// Copy with every timing set to zero, for byte-stable output.
    pub fn without_timing(&self) -> Report {
        let mut r = self.clone();
        r.wall_ms = 0;
        for row in &mut r.rows {
            row.wall_ms = 0;
        }
        r
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:<10} {:>14} {:>14} {:>10} {:>3} {:>3} {:>3}  {}",
            "instance", "score", "objective", "truth", "rel.err", "F", "P", "E", "category"
        );
        for r in &self.rows {
            let num = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
            let calls = |a: AgentKind| r.calls.get(&a).copied().unwrap_or(0);
            let score = match r.score {
                Score::Correct => "correct",
                Score::Incorrect => "incorrect",
                Score::Failed => "failed",
            };
            let _ = writeln!(
                out,
                "{:<24} {:<10} {:>14} {:>14.6} {:>10} {:>3} {:>3} {:>3}  {}",
                r.id,
                score,
                num(r.objective),
                r.truth,
                r.rel_error.map_or("-".to_string(), |e| format!("{e:.2e}")),
                calls(AgentKind::Formulator),
                calls(AgentKind::Programmer),
                calls(AgentKind::Evaluator),
                r.category.map_or("-".to_string(), |c| c.to_string()),
            );
        }
        let _ = writeln!(
            out,
            "\naccuracy {}/{} ({:.1}%)",
            self.correct,
            self.total,
            100.0 * self.accuracy
        );
        let failures: Vec<String> = self
            .failures
            .iter()
            .map(|(c, n)| format!("{c} {n}"))
            .collect();
        let _ = writeln!(out, "failures: {}", failures.join(", "));
        let calls: Vec<String> = self
            .mean_calls
            .iter()
            .map(|(a, m)| format!("{a} {m:.2}"))
            .collect();
        let _ = writeln!(
            out,
            "mean calls: {} (total {:.2})",
            calls.join(", "),
            self.mean_total_calls
        );
        if let Some(s) = &self.prompt_stats {
            let _ = writeln!(out, "prompt chars (mean / std / max / count):");
            let _ = writeln!(
                out,
                "  {:<14} {:>9.1} {:>9.1} {:>7} {:>5}",
                "overall", s.overall.mean, s.overall.std, s.overall.max, s.overall.count
            );
            for (agent, st) in &s.per_agent {
                let _ = writeln!(
                    out,
                    "  {:<14} {:>9.1} {:>9.1} {:>7} {:>5}",
                    agent, st.mean, st.std, st.max, st.count
                );
            }
        }
        out
    }
}
