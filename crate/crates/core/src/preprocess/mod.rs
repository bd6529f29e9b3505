//! Three LLM stages turn a description into a [`StructuredProblem`]:
//! parameter extraction (numbers move into the data bundle), segmentation
//! into background, objective and constraints, and filtering of constraints
//! that should not be modeled.

use std::fmt;
use std::path::Path;
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{ask, AskError, LlmClient, LlmError, Message, PromptLibrary, PromptMeta, TemplateError};
use crate::model::{
    validate, Clause, DataBundle, DataError, Dim, Parameter, StructuredProblem, Violation,
};

/// Longest background kept; longer text is cut and marked.
pub const BACKGROUND_CAP: usize = 400;
const TRUNCATION_MARK: &str = " [truncated]";

#[derive(Debug, Clone, PartialEq)]
pub struct RawProblem {
    pub description: String,
    /// Externally supplied data; wins over numbers found in the text.
    pub data: Option<DataBundle>,
}

impl RawProblem {
    pub fn new(description: impl Into<String>) -> Self {
        RawProblem {
            description: description.into(),
            data: None,
        }
    }

    /// Read `description.txt` and, if present, `data.json` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PreprocessError> {
        let description = std::fs::read_to_string(dir.join("description.txt")).map_err(|e| {
            PreprocessError::Unreadable(format!("{}: {e}", dir.join("description.txt").display()))
        })?;
        let data_path = dir.join("data.json");
        let data = if data_path.exists() {
            let text = std::fs::read_to_string(&data_path)
                .map_err(|e| PreprocessError::Unreadable(format!("{}: {e}", data_path.display())))?;
            Some(DataBundle::from_json(&text).map_err(PreprocessError::Data)?)
        } else {
            None
        };
        Ok(RawProblem { description, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Params,
    Segment,
    Filter,
}

impl Stage {
    fn template(self) -> &'static str {
        match self {
            Stage::Params => "preprocess_params",
            Stage::Segment => "preprocess_segment",
            Stage::Filter => "preprocess_filter",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Params => "params",
            Stage::Segment => "segment",
            Stage::Filter => "filter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Redundant,
    Unnecessary,
    Incorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub id: String,
    pub description: String,
    pub reason: RemovalReason,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub parameters: usize,
    /// Clauses produced by segmentation, objective included.
    pub segmented: usize,
    pub kept: usize,
    pub removed: Vec<Removal>,
    /// Extra attempts spent per stage.
    pub retries: IndexMap<String, u32>,
    pub background_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("empty problem description")]
    EmptyDescription,
    #[error("cannot read instance: {0}")]
    Unreadable(String),
    #[error(transparent)]
    Data(DataError),
    #[error("data does not fit parameter `{symbol}`: {reason}")]
    DataShapeMismatch { symbol: String, reason: String },
    #[error("{stage} stage: malformed LLM output after {attempts} attempts: {message}")]
    MalformedLlmOutput {
        stage: Stage,
        attempts: u32,
        message: String,
    },
    #[error("the description yields no objective")]
    MissingObjective,
    #[error("preprocessed problem is invalid: {}", list(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(Violation::to_string).collect::<Vec<_>>().join("; ")
}

impl PreprocessError {
    fn from_ask(stage: Stage, e: AskError) -> Self {
        match e {
            AskError::Llm(e) => PreprocessError::Llm(e),
            AskError::Malformed { attempts, message } => PreprocessError::MalformedLlmOutput {
                stage,
                attempts,
                message,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Retries per stage after the first attempt.
    pub retries: u32,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { retries: 2 }
    }
}

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b\d+(?:\.\d+)?\b").expect("number regex"));

/// Numbers from `data` that appear literally in `text`.
pub fn leaked_numbers(text: &str, data: &DataBundle) -> Vec<String> {
    let numbers = data.numbers();
    NUMBER
        .find_iter(text)
        .filter(|m| {
            m.as_str()
                .parse::<f64>()
                .is_ok_and(|v| numbers.iter().any(|n| *n == v))
        })
        .map(|m| m.as_str().to_string())
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsAnswer {
    parameters: Vec<Parameter>,
    #[serde(default)]
    dimensions: IndexMap<String, usize>,
    #[serde(default)]
    values: IndexMap<String, crate::model::ParamValue>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClauseAnswer {
    description: String,
    #[serde(default)]
    parameters: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentAnswer {
    #[serde(default)]
    background: String,
    objective: Option<ClauseAnswer>,
    #[serde(default)]
    constraints: Vec<ClauseAnswer>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RemovedAnswer {
    id: String,
    reason: RemovalReason,
    #[serde(default)]
    note: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterAnswer {
    removed: Vec<RemovedAnswer>,
}

fn decode<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, String> {
    serde_json::from_value(v).map_err(|e| format!("schema mismatch: {e}"))
}

/// Parameters, the merged data bundle, and extra attempts used.
pub type Extracted = (Vec<Parameter>, DataBundle, u32);

/// Segmented clauses: background, objective and constraints, as
/// `(description, parameter symbols)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Segments {
    pub background: String,
    pub truncated: bool,
    pub objective: (String, Vec<String>),
    pub constraints: Vec<(String, Vec<String>)>,
    pub retries: u32,
}

/// Everything needed by the three stages.
#[derive(Debug, Clone, Copy)]
pub struct Preprocessor<'a> {
    pub llm: &'a LlmClient,
    pub prompts: &'a PromptLibrary,
    pub config: PreprocessConfig,
}

fn render_parameters(params: &[Parameter]) -> String {
    if params.is_empty() {
        return "(none)\n".into();
    }
    params
        .iter()
        .map(|p| {
            format!(
                "- {} {}: {}\n",
                p.symbol,
                crate::model::shape_label(&p.shape),
                p.definition
            )
        })
        .collect()
}

impl<'a> Preprocessor<'a> {
    fn messages(&self, template: &str, vars: &[(&str, &str)]) -> Result<Vec<Message>, TemplateError> {
        Ok(vec![
            Message::system(self.prompts.get("system")?),
            Message::user(self.prompts.render(template, vars)?),
        ])
    }

    pub fn extract_parameters(&self, raw: &RawProblem) -> Result<Extracted, PreprocessError> {
        let stage = Stage::Params;
        let messages = self.messages(stage.template(), &[("description", &raw.description)])?;
        let external = raw.data.as_ref();
        let mut fatal: Option<PreprocessError> = None;
        let mut shape_error: Option<PreprocessError> = None;
        let asked = ask(
            self.llm,
            messages,
            &PromptMeta::new(stage.template(), "problem"),
            self.config.retries,
            |v| {
                shape_error = None;
                let a: ParamsAnswer = decode(v)?;
                let mut scratch = StructuredProblem::new("");
                for p in &a.parameters {
                    scratch
                        .add_entity(p.clone())
                        .map_err(|e| format!("parameter {}: {e}", p.symbol))?;
                }
                let mut data = DataBundle {
                    dimensions: a.dimensions,
                    values: a.values,
                };
                if let Some(ext) = external {
                    data.overlay(ext);
                }
                for p in &a.parameters {
                    let leaked = leaked_numbers(&p.definition, &data);
                    if !leaked.is_empty() {
                        return Err(format!(
                            "definition of {} contains data values {}; move numbers into the data",
                            p.symbol,
                            leaked.join(", ")
                        ));
                    }
                    if let Err(e) = data.check_parameter(&p.symbol, &p.shape) {
                        let mismatch = PreprocessError::DataShapeMismatch {
                            symbol: p.symbol.clone(),
                            reason: e.to_string(),
                        };
                        let from_external = external.is_some_and(|ext| {
                            ext.values.contains_key(&p.symbol)
                                || p.shape.iter().any(|d| {
                                    matches!(d, Dim::Named(n) if ext.dimensions.contains_key(n))
                                })
                        });
                        if from_external {
                            fatal = Some(mismatch);
                            return Ok(None);
                        }
                        let message = mismatch.to_string();
                        shape_error = Some(mismatch);
                        return Err(message);
                    }
                }
                Ok(Some((a.parameters, data)))
            },
        );
        match asked {
            Ok(got) => match got.value {
                Some((params, data)) => Ok((params, data, got.attempts - 1)),
                None => Err(fatal.expect("rejected answer records its cause")),
            },
            Err(AskError::Malformed { .. }) if shape_error.is_some() => {
                Err(shape_error.expect("checked"))
            }
            Err(e) => Err(PreprocessError::from_ask(stage, e)),
        }
    }

    pub fn segment_clauses(
        &self,
        raw: &RawProblem,
        params: &[Parameter],
        data: &DataBundle,
    ) -> Result<Segments, PreprocessError> {
        let stage = Stage::Segment;
        let rendered = render_parameters(params);
        let messages = self.messages(
            stage.template(),
            &[("description", &raw.description), ("parameters", &rendered)],
        )?;
        let known = |s: &str| params.iter().any(|p| p.symbol == s);
        let mut missing_objective = false;
        let asked = ask(
            self.llm,
            messages,
            &PromptMeta::new(stage.template(), "problem"),
            self.config.retries,
            |v| {
                let a: SegmentAnswer = decode(v)?;
                missing_objective = a.objective.is_none();
                let objective = a.objective.ok_or("no objective given")?;
                for c in std::iter::once(&objective).chain(&a.constraints) {
                    if c.description.trim().is_empty() {
                        return Err("clause with empty description".into());
                    }
                    if let Some(bad) = c.parameters.iter().find(|s| !known(s)) {
                        return Err(format!("unknown parameter `{bad}`"));
                    }
                    let leaked = leaked_numbers(&c.description, data);
                    if !leaked.is_empty() {
                        return Err(format!(
                            "clause \"{}\" contains data values {}; refer to parameters by symbol",
                            c.description,
                            leaked.join(", ")
                        ));
                    }
                }
                let leaked = leaked_numbers(&a.background, data);
                if !leaked.is_empty() {
                    return Err(format!("background contains data values {}", leaked.join(", ")));
                }
                Ok((a.background, objective, a.constraints))
            },
        );
        let got = match asked {
            Err(AskError::Malformed { .. }) if missing_objective => {
                return Err(PreprocessError::MissingObjective)
            }
            other => other.map_err(|e| PreprocessError::from_ask(stage, e))?,
        };
        let (background, objective, constraints) = got.value;
        let (background, truncated) = cap_background(background.trim());
        Ok(Segments {
            background,
            truncated,
            objective: (objective.description, objective.parameters),
            constraints: constraints
                .into_iter()
                .map(|c| (c.description, c.parameters))
                .collect(),
            retries: got.attempts - 1,
        })
    }

    /// Ask which constraints to drop. `problem` holds the segmented clauses.
    pub fn filter_clauses(
        &self,
        problem: &StructuredProblem,
        params: &[Parameter],
    ) -> Result<(Vec<Removal>, u32), PreprocessError> {
        let stage = Stage::Filter;
        let clauses: String = problem
            .clauses()
            .map(|c| format!("- {} ({}): {}\n", c.id, c.kind, c.description))
            .collect();
        let rendered = render_parameters(params);
        let messages = self.messages(
            stage.template(),
            &[
                ("background", &problem.background),
                ("parameters", &rendered),
                ("clauses", &clauses),
            ],
        )?;
        let asked = ask(
            self.llm,
            messages,
            &PromptMeta::new(stage.template(), "problem"),
            self.config.retries,
            |v| {
                let a: FilterAnswer = decode(v)?;
                let mut out: Vec<Removal> = Vec::new();
                for r in a.removed {
                    let clause = problem
                        .clause(&r.id)
                        .ok_or_else(|| format!("unknown clause `{}`", r.id))?;
                    if clause.kind == crate::model::ClauseKind::Objective {
                        return Err("the objective cannot be removed".into());
                    }
                    if out.iter().any(|o| o.id == r.id) {
                        return Err(format!("clause `{}` removed twice", r.id));
                    }
                    out.push(Removal {
                        id: r.id,
                        description: clause.description.clone(),
                        reason: r.reason,
                        note: r.note,
                    });
                }
                Ok(out)
            },
        )
        .map_err(|e| PreprocessError::from_ask(stage, e))?;
        Ok((asked.value, asked.attempts - 1))
    }

    /// Run all three stages. Nothing is returned unless every stage succeeds
    /// and the result passes [`validate`].
    pub fn run(&self, raw: &RawProblem) -> Result<(StructuredProblem, PreprocessReport), PreprocessError> {
        if raw.description.trim().is_empty() {
            return Err(PreprocessError::EmptyDescription);
        }
        let mut report = PreprocessReport::default();
        let (params, data, r) = self.extract_parameters(raw)?;
        report.retries.insert(Stage::Params.to_string(), r);
        report.parameters = params.len();

        let seg = self.segment_clauses(raw, &params, &data)?;
        report.retries.insert(Stage::Segment.to_string(), seg.retries);
        report.background_truncated = seg.truncated;

        let mut problem = StructuredProblem::new(seg.background);
        for p in &params {
            problem.add_entity(p.clone()).map_err(invalid)?;
        }
        let (desc, links) = &seg.objective;
        problem.add_entity(Clause::objective(desc.clone())).map_err(invalid)?;
        problem.set_links("obj", links).map_err(invalid)?;
        for (desc, links) in &seg.constraints {
            let id = problem.next_constraint_id();
            problem.add_entity(Clause::constraint(&id, desc.clone())).map_err(invalid)?;
            problem.set_links(&id, links).map_err(invalid)?;
        }
        report.segmented = problem.clauses().len();

        let (removed, r) = self.filter_clauses(&problem, &params)?;
        report.retries.insert(Stage::Filter.to_string(), r);
        for rm in &removed {
            problem.remove_clause(&rm.id).map_err(invalid)?;
        }
        report.kept = problem.clauses().len();
        report.removed = removed;

        problem.data = Some(data);
        let violations = validate(&problem);
        if !violations.is_empty() {
            return Err(PreprocessError::Invalid(violations));
        }
        Ok((problem, report))
    }
}

fn invalid(e: crate::model::ModelError) -> PreprocessError {
    PreprocessError::Invalid(vec![Violation {
        entity: "problem".into(),
        rule: e.to_string(),
    }])
}

fn cap_background(text: &str) -> (String, bool) {
    if text.chars().count() <= BACKGROUND_CAP {
        return (text.to_string(), false);
    }
    let keep = BACKGROUND_CAP - TRUNCATION_MARK.chars().count();
    let mut out: String = text.chars().take(keep).collect();
    out.push_str(TRUNCATION_MARK);
    log::warn!("background longer than {BACKGROUND_CAP} characters; truncated");
    (out, true)
}

/// Convenience wrapper over [`Preprocessor::run`].
pub fn preprocess(
    raw: &RawProblem,
    llm: &LlmClient,
    prompts: &PromptLibrary,
    config: PreprocessConfig,
) -> Result<(StructuredProblem, PreprocessReport), PreprocessError> {
    Preprocessor {
        llm,
        prompts,
        config,
    }
    .run(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_cap() {
        let (s, t) = cap_background("short");
        assert_eq!((s.as_str(), t), ("short", false));
        let long = "a".repeat(1000);
        let (s, t) = cap_background(&long);
        assert!(t);
        assert_eq!(s.chars().count(), BACKGROUND_CAP);
        assert!(s.ends_with(TRUNCATION_MARK));
    }

    #[test]
    fn leaks_are_whole_numbers_only() {
        let d = DataBundle::from_json(r#"{"dimensions":{"P":2},"values":{"Cap":[8,9.5]}}"#).unwrap();
        assert_eq!(leaked_numbers("at most 9.5 hours on Cap2", &d), ["9.5"]);
        assert!(leaked_numbers("hours on machine m", &d).is_empty());
        assert_eq!(leaked_numbers("2 products", &d), ["2"]);
    }
}
