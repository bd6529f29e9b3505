use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

/// Names of the prompt templates every library must provide.
pub const TEMPLATE_NAMES: &[&str] = &[
    "system",
    "preprocess_params",
    "preprocess_segment",
    "preprocess_filter",
    "manager",
    "formulate",
    "reformulate",
    "technique",
    "code_variable",
    "code_clause",
    "debug",
    "review",
    "syntax_amdl",
    "syntax_script",
];

const BUILTIN: &[(&str, &str)] = &[
    ("system", include_str!("../../prompts/system.txt")),
    ("preprocess_params", include_str!("../../prompts/preprocess_params.txt")),
    ("preprocess_segment", include_str!("../../prompts/preprocess_segment.txt")),
    ("preprocess_filter", include_str!("../../prompts/preprocess_filter.txt")),
    ("manager", include_str!("../../prompts/manager.txt")),
    ("formulate", include_str!("../../prompts/formulate.txt")),
    ("reformulate", include_str!("../../prompts/reformulate.txt")),
    ("technique", include_str!("../../prompts/technique.txt")),
    ("code_variable", include_str!("../../prompts/code_variable.txt")),
    ("code_clause", include_str!("../../prompts/code_clause.txt")),
    ("debug", include_str!("../../prompts/debug.txt")),
    ("review", include_str!("../../prompts/review.txt")),
    ("syntax_amdl", include_str!("../../prompts/syntax_amdl.txt")),
    ("syntax_script", include_str!("../../prompts/syntax_script.txt")),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{template}` uses `{{{{{name}}}}}` but no value was given")]
    UnboundPlaceholder { template: String, name: String },
    #[error("cannot read template `{name}`: {message}")]
    Io { name: String, message: String },
}

/// Prompt templates with `{{name}}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<String, String>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        PromptLibrary {
            templates: BUILTIN
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Built-in templates, with any `<name>.txt` found in `dir` taking
    /// precedence.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut lib = Self::builtin();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    name: name.to_string(),
                    message: e.to_string(),
                })?;
                lib.templates.insert(name.to_string(), text);
            }
        }
        Ok(lib)
    }

    pub fn get(&self, name: &str) -> Result<&str, TemplateError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::UnknownTemplate(name.to_string()))
    }

    /// Substitute every `{{key}}` in template `name`. Values are inserted
    /// verbatim and not rescanned.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let text = self.get(name)?;
        let mut out = String::with_capacity(text.len());
        let mut rest = text;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else {
                out.push_str(&rest[start..]);
                rest = "";
                break;
            };
            let key = after[..end].trim();
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::UnboundPlaceholder {
                    template: name.to_string(),
                    name: key.to_string(),
                })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_and_reports_unbound() {
        let mut lib = PromptLibrary::builtin();
        lib.templates
            .insert("t".into(), "a {{x}} b {{ y }} {{x}}".into());
        assert_eq!(lib.render("t", &[("x", "1"), ("y", "{{z}}")]).unwrap(), "a 1 b {{z}} 1");
        assert_eq!(
            lib.render("t", &[("x", "1")]),
            Err(TemplateError::UnboundPlaceholder {
                template: "t".into(),
                name: "y".into()
            })
        );
        assert!(matches!(lib.render("nope", &[]), Err(TemplateError::UnknownTemplate(_))));
    }

    #[test]
    fn builtin_covers_all_names() {
        let lib = PromptLibrary::builtin();
        for n in TEMPLATE_NAMES {
            assert!(!lib.get(n).unwrap().trim().is_empty());
        }
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("review.txt"), "custom {{code}}").unwrap();
        let lib = PromptLibrary::from_dir(dir.path()).unwrap();
        assert_eq!(lib.render("review", &[("code", "c")]).unwrap(), "custom c");
    }
}
