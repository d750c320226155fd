//! Prompt templates for the six generation steps.
//!
//! Templates are plain text with `{name}` placeholders and are substituted
//! verbatim, without escaping. The built-in set is compiled in; a directory
//! holding `<step>.txt` files can override any of them at runtime.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReferenceEntry;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("cannot format an empty reference list")]
    EmptyReferences,
    #[error("step `{step}` needs placeholder `{placeholder}` but the context has none")]
    MissingPlaceholder {
        step: PromptStep,
        placeholder: &'static str,
    },
    #[error("failed to read template override {path}: {message}")]
    Override { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStep {
    Title,
    Sections,
    Abstract,
    SelectRefs,
    Subsections,
    Content,
}

impl PromptStep {
    pub const ALL: [PromptStep; 6] = [
        PromptStep::Title,
        PromptStep::Sections,
        PromptStep::Abstract,
        PromptStep::SelectRefs,
        PromptStep::Subsections,
        PromptStep::Content,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptStep::Title => "title",
            PromptStep::Sections => "sections",
            PromptStep::Abstract => "abstract",
            PromptStep::SelectRefs => "select_refs",
            PromptStep::Subsections => "subsections",
            PromptStep::Content => "content",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptStep::Title => include_str!("templates/title.txt"),
            PromptStep::Sections => include_str!("templates/sections.txt"),
            PromptStep::Abstract => include_str!("templates/abstract.txt"),
            PromptStep::SelectRefs => include_str!("templates/select_refs.txt"),
            PromptStep::Subsections => include_str!("templates/subsections.txt"),
            PromptStep::Content => include_str!("templates/content.txt"),
        }
    }
}

impl fmt::Display for PromptStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptStep::ALL
            .into_iter()
            .find(|step| step.name() == s)
            .ok_or_else(|| format!("unknown prompt step `{s}`"))
    }
}

/// Everything a template may refer to. Fields are pre-rendered text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptContext {
    /// Subjects joined with "; ".
    pub subject_line: String,
    /// Lines of "[k] title", joined with "\n".
    pub reference_block: Option<String>,
    pub title: Option<String>,
    pub outline_block: Option<String>,
    pub section_heading: Option<String>,
    pub subsection_heading: Option<String>,
    pub reference_subset_block: Option<String>,
}

impl PromptContext {
    pub fn new<S: AsRef<str>>(subjects: &[S]) -> Self {
        Self {
            subject_line: join_subjects(subjects),
            ..Self::default()
        }
    }

    fn lookup(&self, placeholder: &str) -> Option<&str> {
        match placeholder {
            "subject" => (!self.subject_line.is_empty()).then_some(self.subject_line.as_str()),
            "references" => self.reference_block.as_deref(),
            "title" => self.title.as_deref(),
            "outline" => self.outline_block.as_deref(),
            "section" => self.section_heading.as_deref(),
            "subsection" => self.subsection_heading.as_deref(),
            "subset_references" => self.reference_subset_block.as_deref(),
            _ => None,
        }
    }
}

const PLACEHOLDERS: [&str; 7] = [
    "subject",
    "references",
    "title",
    "outline",
    "section",
    "subsection",
    "subset_references",
];

pub fn join_subjects<S: AsRef<str>>(subjects: &[S]) -> String {
    subjects
        .iter()
        .map(|s| s.as_ref().trim())
        .collect::<Vec<_>>()
        .join("; ")
}

/// One "[k] title" line per entry, keeping master indices as given.
pub fn format_references(entries: &[ReferenceEntry]) -> Result<String, PromptError> {
    if entries.is_empty() {
        return Err(PromptError::EmptyReferences);
    }
    Ok(entries
        .iter()
        .map(|e| format!("[{}] {}", e.index, e.title))
        .collect::<Vec<_>>()
        .join("\n"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlineDepth {
    SectionsOnly,
    WithSubsections,
}

/// Numbered outline: "1. A" for sections, "1.1 B" for their subsections.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutlineText {
    pub lines: Vec<String>,
    pub depth: OutlineDepth,
}

impl OutlineText {
    pub fn sections_only<S: AsRef<str>>(sections: &[S]) -> Self {
        Self {
            lines: sections
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{}. {}", i + 1, s.as_ref()))
                .collect(),
            depth: OutlineDepth::SectionsOnly,
        }
    }

    /// `sections` pairs each heading with its subsection headings.
    pub fn with_subsections<S: AsRef<str>, T: AsRef<str>>(sections: &[(S, Vec<T>)]) -> Self {
        let mut lines = Vec::new();
        for (i, (heading, subsections)) in sections.iter().enumerate() {
            lines.push(format!("{}. {}", i + 1, heading.as_ref()));
            for (j, sub) in subsections.iter().enumerate() {
                lines.push(format!("{}.{} {}", i + 1, j + 1, sub.as_ref()));
            }
        }
        Self {
            lines,
            depth: OutlineDepth::WithSubsections,
        }
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

const TITLE_RETRY_PREFIX: &str = "The response format is incorrect. Note that only one guess is required. The title should start with \"Title: \". ";

/// Template set, built-in unless overridden per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: [String; 6],
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: PromptStep::ALL.map(|s| s.builtin().to_string()),
        }
    }
}

impl PromptSet {
    /// Built-in templates, with any `<step>.txt` found in `dir` taking
    /// precedence. A single trailing newline in an override file is ignored.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let mut set = Self::default();
        for step in PromptStep::ALL {
            let path = dir.as_ref().join(format!("{}.txt", step.name()));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| PromptError::Override {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let text = text
                .strip_suffix("\r\n")
                .or_else(|| text.strip_suffix('\n'))
                .unwrap_or(&text);
            set.templates[step as usize] = text.to_string();
        }
        Ok(set)
    }

    pub fn template(&self, step: PromptStep) -> &str {
        &self.templates[step as usize]
    }

    pub fn render(&self, step: PromptStep, ctx: &PromptContext) -> Result<String, PromptError> {
        substitute(self.template(step), step, ctx)
    }

    /// Retry request for a title reply without the "Title:" marker: the fixed
    /// correction sentence followed by the full title prompt.
    pub fn retry_prefix_title(&self, ctx: &PromptContext) -> Result<String, PromptError> {
        Ok(format!(
            "{TITLE_RETRY_PREFIX}{}",
            self.render(PromptStep::Title, ctx)?
        ))
    }
}

pub fn render(step: PromptStep, ctx: &PromptContext) -> Result<String, PromptError> {
    substitute(step.builtin(), step, ctx)
}

pub fn retry_prefix_title(ctx: &PromptContext) -> Result<String, PromptError> {
    PromptSet::default().retry_prefix_title(ctx)
}

/// Single left-to-right pass, so braces inside substituted values are never
/// re-expanded. Unknown `{...}` sequences are literal text.
fn substitute(template: &str, step: PromptStep, ctx: &PromptContext) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let known = after.find('}').and_then(|close| {
            let name = &after[..close];
            PLACEHOLDERS
                .iter()
                .find(|p| **p == name)
                .map(|p| (*p, close))
        });
        match known {
            Some((name, close)) => {
                let value = ctx.lookup(name).ok_or(PromptError::MissingPlaceholder {
                    step,
                    placeholder: name,
                })?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
