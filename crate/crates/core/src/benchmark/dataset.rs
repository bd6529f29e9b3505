use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Why a run did not produce the right answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    CodingErrors,
    IncorrectModeling,
    MissingOrWrongConstraints,
    Unlabeled,
}

impl FailureCategory {
    pub const ALL: [FailureCategory; 4] = [
        FailureCategory::CodingErrors,
        FailureCategory::IncorrectModeling,
        FailureCategory::MissingOrWrongConstraints,
        FailureCategory::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::CodingErrors => "coding_errors",
            FailureCategory::IncorrectModeling => "incorrect_modeling",
            FailureCategory::MissingOrWrongConstraints => "missing_or_wrong_constraints",
            FailureCategory::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for FailureCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        FailureCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| format!("unknown failure category `{}`", s.trim()))
    }
}

/// One benchmark problem on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub dir: PathBuf,
    pub optimal: f64,
    /// Human-assigned category used when the run fails.
    pub label: Option<FailureCategory>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DatasetError {
    #[error("instance `{id}` is malformed: {reason}")]
    MalformedInstance { id: String, reason: String },
    #[error("cannot read dataset {path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub const INSTANCES_DIR: &str = "instances";
pub const TRANSCRIPTS_DIR: &str = "transcripts";
pub const LABEL_FILE: &str = "labels.txt";

fn malformed(id: &str, reason: impl Into<String>) -> DatasetError {
    DatasetError::MalformedInstance {
        id: id.to_string(),
        reason: reason.into(),
    }
}

/// Load one instance directory; the id is the directory name.
pub fn load_instance(dir: &Path) -> Result<Instance, DatasetError> {
    let id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if !dir.join("description.txt").is_file() {
        return Err(malformed(&id, "missing description.txt"));
    }
    let truth = std::fs::read_to_string(dir.join("optimal_value.txt"))
        .map_err(|_| malformed(&id, "missing optimal_value.txt"))?;
    let optimal: f64 = truth
        .trim()
        .parse()
        .map_err(|_| malformed(&id, format!("optimal value `{}` is not a number", truth.trim())))?;
    if !optimal.is_finite() {
        return Err(malformed(&id, "optimal value is not finite"));
    }
    let label_path = dir.join(LABEL_FILE);
    let label = if label_path.is_file() {
        let text = std::fs::read_to_string(&label_path).map_err(|e| malformed(&id, e.to_string()))?;
        let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        Some(first.parse().map_err(|e: String| malformed(&id, e))?)
    } else {
        None
    };
    Ok(Instance {
        id,
        dir: dir.to_path_buf(),
        optimal,
        label,
    })
}

/// Every instance under `<dir>/instances`, sorted by id. A dataset without
/// an `instances` directory is empty.
pub fn load_dataset(dir: &Path) -> Result<Vec<Instance>, DatasetError> {
    let root = dir.join(INSTANCES_DIR);
    if !dir.is_dir() {
        return Err(DatasetError::Io {
            path: dir.to_path_buf(),
            message: "not a directory".into(),
        });
    }
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let io = |e: std::io::Error| DatasetError::Io {
        path: root.clone(),
        message: e.to_string(),
    };
    let mut dirs = Vec::new();
    for entry in std::fs::read_dir(&root).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    dirs.iter().map(|d| load_instance(d)).collect()
}
