//! The generated survey and its markdown form.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::ReferenceEntry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BodyEntry {
    /// 1 for sections, 2 for subsections.
    pub level: u8,
    pub heading: String,
    pub content: String,
}

impl BodyEntry {
    pub fn section(heading: impl Into<String>) -> Self {
        Self {
            level: 1,
            heading: heading.into(),
            content: String::new(),
        }
    }

    pub fn subsection(heading: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            level: 2,
            heading: heading.into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedSurvey {
    pub title: String,
    pub abstract_text: String,
    pub body: Vec<BodyEntry>,
    pub cited_indices: BTreeSet<usize>,
    /// The record's full reference list; citations use these master indices.
    pub references: Vec<ReferenceEntry>,
}

impl GeneratedSurvey {
    /// Headings scored by the structure metric: every section and subsection.
    pub fn headings(&self) -> Vec<String> {
        self.body.iter().map(|e| e.heading.clone()).collect()
    }
}

fn heading_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(#{1,6})[ \t]+(.*?)[ \t]*#*[ \t]*$").unwrap())
}

fn section_number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d+\.[ \t]+").unwrap())
}

fn subsection_number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d+\.\d+\.?[ \t]+").unwrap())
}

/// Content lines that would read as markdown headings are emitted in bold
/// so the document structure stays the one the pipeline planned.
fn neutralize_headings(content: &str) -> String {
    content
        .trim()
        .lines()
        .map(|line| match heading_line().captures(line.trim_start()) {
            Some(c) if !c[2].is_empty() => format!("**{}**", &c[2]),
            _ => line.to_string(),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn assemble_markdown(survey: &GeneratedSurvey) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {}\n", survey.title.trim());
    let _ = writeln!(out, "## Abstract\n");
    let abstract_text = neutralize_headings(&survey.abstract_text);
    if !abstract_text.is_empty() {
        let _ = writeln!(out, "{abstract_text}\n");
    }

    let (mut section, mut subsection) = (0, 0);
    for entry in &survey.body {
        if entry.level <= 1 {
            section += 1;
            subsection = 0;
            let _ = writeln!(out, "## {section}. {}\n", entry.heading.trim());
        } else {
            subsection += 1;
            let _ = writeln!(out, "### {section}.{subsection} {}\n", entry.heading.trim());
        }
        let content = neutralize_headings(&entry.content);
        if !content.is_empty() {
            let _ = writeln!(out, "{content}\n");
        }
    }

    let _ = writeln!(out, "## References\n");
    for r in &survey.references {
        let _ = writeln!(out, "[{}] {}\n", r.index, r.title.trim());
    }
    out.truncate(out.trim_end().len());
    out.push('\n');
    out
}

/// A survey read back from markdown, whether produced by
/// [`assemble_markdown`] or written by hand.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SurveyDocument {
    pub title: Option<String>,
    pub abstract_text: Option<String>,
    pub body: Vec<BodyEntry>,
    pub references: Vec<String>,
}

impl SurveyDocument {
    pub fn headings(&self) -> Vec<String> {
        self.body.iter().map(|e| e.heading.clone()).collect()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Target {
    Preamble,
    Abstract,
    Entry,
    References,
}

fn is_scaffold(heading: &str, names: &[&str]) -> bool {
    let h = heading.trim().trim_end_matches(':').to_ascii_lowercase();
    names.contains(&h.as_str())
}

pub fn parse_markdown(text: &str) -> SurveyDocument {
    let mut doc = SurveyDocument::default();
    let mut target = Target::Preamble;
    let mut preamble: Vec<&str> = Vec::new();
    let mut abstract_lines: Vec<&str> = Vec::new();
    let mut entry_lines: Vec<Vec<&str>> = Vec::new();

    for line in text.lines() {
        if let Some(c) = heading_line().captures(line) {
            let hashes = c[1].len();
            let heading = c[2].trim();
            if hashes == 1 && doc.title.is_none() && doc.body.is_empty() {
                doc.title = Some(heading.to_string());
                target = Target::Preamble;
                continue;
            }
            if is_scaffold(heading, &["abstract"]) {
                target = Target::Abstract;
                continue;
            }
            if is_scaffold(heading, &["references", "reference", "bibliography"]) {
                target = Target::References;
                continue;
            }
            let (level, heading) = if hashes <= 2 {
                (1, section_number().replace(heading, "").into_owned())
            } else {
                (2, subsection_number().replace(heading, "").into_owned())
            };
            doc.body.push(BodyEntry {
                level,
                heading: heading.trim().to_string(),
                content: String::new(),
            });
            entry_lines.push(Vec::new());
            target = Target::Entry;
            continue;
        }
        match target {
            Target::Preamble => preamble.push(line),
            Target::Abstract => abstract_lines.push(line),
            Target::Entry => entry_lines.last_mut().expect("entry open").push(line),
            Target::References => {
                if !line.trim().is_empty() {
                    doc.references.push(line.trim().to_string());
                }
            }
        }
    }

    let join = |lines: &[&str]| lines.join("\n").trim().to_string();
    let abstract_text = if abstract_lines.is_empty() {
        join(&preamble)
    } else {
        join(&abstract_lines)
    };
    doc.abstract_text = (!abstract_text.is_empty()).then_some(abstract_text);
    for (entry, lines) in doc.body.iter_mut().zip(&entry_lines) {
        entry.content = join(lines);
    }
    doc
}

/// Text scored by ROUGE: the markdown without the "Abstract" scaffold
/// heading and without the references section.
pub fn rouge_text(markdown: &str) -> String {
    let mut out = Vec::new();
    let mut in_references = false;
    for line in markdown.lines() {
        if let Some(c) = heading_line().captures(line) {
            let heading = c[2].trim();
            if is_scaffold(heading, &["abstract"]) {
                in_references = false;
                continue;
            }
            if is_scaffold(heading, &["references", "reference", "bibliography"]) {
                in_references = true;
                continue;
            }
            in_references = false;
        }
        if !in_references {
            out.push(line);
        }
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> GeneratedSurvey {
        GeneratedSurvey {
            title: "A Survey".into(),
            abstract_text: "We review things.".into(),
            body: vec![
                BodyEntry::section("Introduction"),
                BodyEntry::subsection("Background", "Text citing [2].\n\nSecond paragraph."),
            ],
            cited_indices: [2].into_iter().collect(),
            references: vec![ReferenceEntry::new(1, "Alpha"), ReferenceEntry::new(2, "Beta")],
        }
    }

    #[test]
    fn five_heading_lines_in_order() {
        let md = assemble_markdown(&toy());
        let headings: Vec<&str> = md.lines().filter(|l| l.starts_with('#')).collect();
        assert_eq!(
            headings,
            vec![
                "# A Survey",
                "## Abstract",
                "## 1. Introduction",
                "### 1.1 Background",
                "## References"
            ]
        );
        assert!(md.lines().any(|l| l == "[2] Beta"));
        assert!(md.ends_with("[2] Beta\n"));
    }

    #[test]
    fn markdown_round_trip() {
        let survey = toy();
        let doc = parse_markdown(&assemble_markdown(&survey));
        assert_eq!(doc.title.as_deref(), Some("A Survey"));
        assert_eq!(doc.abstract_text.as_deref(), Some("We review things."));
        assert_eq!(doc.body, survey.body);
        assert_eq!(doc.references, vec!["[1] Alpha", "[2] Beta"]);
    }

    #[test]
    fn stray_headings_in_content_are_bolded() {
        let mut s = toy();
        s.body[1].content = "Intro.\n### Sneaky\nMore.".into();
        let md = assemble_markdown(&s);
        assert!(md.contains("**Sneaky**"));
        assert_eq!(parse_markdown(&md).body.len(), 2);
    }

    #[test]
    fn rouge_text_drops_scaffold() {
        let md = assemble_markdown(&toy());
        let text = rouge_text(&md);
        assert!(!text.contains("Abstract"));
        assert!(!text.contains("Alpha"));
        assert!(text.contains("We review things."));
        assert!(text.contains("## 1. Introduction"));
    }

    #[test]
    fn hand_written_markdown() {
        let doc = parse_markdown("Opening words.\n## 1. Introduction\nalpha\n## 2. Methods\nbeta\n### 2.1 Data\ngamma");
        assert_eq!(doc.title, None);
        assert_eq!(doc.abstract_text.as_deref(), Some("Opening words."));
        assert_eq!(doc.headings(), vec!["Introduction", "Methods", "Data"]);
        assert_eq!(doc.body[2].level, 2);
        assert_eq!(doc.body[2].content, "gamma");
    }
}
