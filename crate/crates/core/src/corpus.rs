//! Survey corpus loading and dataset statistics.
//!
//! The corpus is a line-delimited JSON file with one survey per line. Test
//! split records carry only subjects, references and reference contents;
//! train split records additionally carry the gold title, abstract and body.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing mandatory field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("unknown split `{0}` (expected `train` or `test`)")]
    UnknownSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One entry of a record's reference list. `index` is the 1-based master
/// index used in every prompt, citation and the final references section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub index: usize,
    pub title: String,
}

impl ReferenceEntry {
    pub fn new(index: usize, title: impl Into<String>) -> Self {
        Self {
            index,
            title: title.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyRecord {
    pub article_id: Option<String>,
    pub subjects: Vec<String>,
    pub references: Vec<ReferenceEntry>,
    pub gold_title: Option<String>,
    pub gold_abstract: Option<String>,
    pub gold_content: Option<String>,
    /// Kept for statistics only. Nothing on the generation path reads this.
    pub reference_contents: BTreeMap<usize, String>,
}

impl SurveyRecord {
    /// Builds a record from subject and reference strings, numbering the
    /// references from 1.
    pub fn new<S: AsRef<str>, R: AsRef<str>>(subjects: &[S], references: &[R]) -> Self {
        Self {
            article_id: None,
            subjects: subjects.iter().map(|s| s.as_ref().to_string()).collect(),
            references: references
                .iter()
                .enumerate()
                .map(|(i, r)| ReferenceEntry::new(i + 1, r.as_ref()))
                .collect(),
            gold_title: None,
            gold_abstract: None,
            gold_content: None,
            reference_contents: BTreeMap::new(),
        }
    }

    /// Identifier used for output file names: the article id when present,
    /// otherwise the 1-based row number in the corpus.
    pub fn display_id(&self, row_number: usize) -> String {
        match &self.article_id {
            Some(id) if !id.trim().is_empty() => id.trim().to_string(),
            _ => row_number.to_string(),
        }
    }
}

/// JSON keys of the record format. Task releases have varied in naming, so
/// every key can be overridden.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldNames {
    pub title: String,
    pub article_id: String,
    pub subject: String,
    #[serde(rename = "abstract")]
    pub abstract_: String,
    pub content: String,
    pub reference: String,
    pub reference_content: String,
}

impl Default for FieldNames {
    fn default() -> Self {
        Self {
            title: "title".into(),
            article_id: "article_id".into(),
            subject: "subject".into(),
            abstract_: "abstract".into(),
            content: "content".into(),
            reference: "reference".into(),
            reference_content: "reference_content".into(),
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, split: Split) -> Result<Vec<SurveyRecord>, CorpusError> {
    load_corpus_with(path, split, &FieldNames::default())
}

pub fn load_corpus_with(
    path: impl AsRef<Path>,
    split: Split,
    fields: &FieldNames,
) -> Result<Vec<SurveyRecord>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, split, fields)
}

/// Parses corpus text already in memory. Blank lines are skipped but still
/// counted for error line numbers.
pub fn parse_corpus(
    text: &str,
    split: Split,
    fields: &FieldNames,
) -> Result<Vec<SurveyRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let Value::Object(map) = value else {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: "record is not a JSON object".into(),
            });
        };
        records.push(record_from_map(&map, split, fields, line_no)?);
    }
    Ok(records)
}

fn record_from_map(
    map: &Map<String, Value>,
    split: Split,
    fields: &FieldNames,
    line: usize,
) -> Result<SurveyRecord, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };

    let subject_value = non_null(map, &fields.subject).ok_or_else(|| CorpusError::MissingField {
        line,
        field: fields.subject.clone(),
    })?;
    let subjects = split_subjects(subject_value)
        .ok_or_else(|| malformed(format!("`{}` must be a string or list of strings", fields.subject)))?;
    if subjects.is_empty() {
        return Err(CorpusError::MissingField {
            line,
            field: fields.subject.clone(),
        });
    }

    let reference_value =
        non_null(map, &fields.reference).ok_or_else(|| CorpusError::MissingField {
            line,
            field: fields.reference.clone(),
        })?;
    let raw_references = string_list(reference_value)
        .ok_or_else(|| malformed(format!("`{}` must be a list of strings", fields.reference)))?;

    // Empty reference strings are dropped; `renumber` maps original
    // 0-based positions onto the surviving 1-based master indices.
    let mut references = Vec::new();
    let mut renumber = BTreeMap::new();
    for (pos, title) in raw_references.iter().enumerate() {
        let title = title.trim();
        if title.is_empty() {
            continue;
        }
        let index = references.len() + 1;
        renumber.insert(pos, index);
        references.push(ReferenceEntry::new(index, title));
    }

    let reference_contents = match non_null(map, &fields.reference_content) {
        None => BTreeMap::new(),
        Some(v) => reference_contents(v, &references, &renumber).ok_or_else(|| {
            malformed(format!("`{}` must be a list or a map", fields.reference_content))
        })?,
    };

    let text_field = |key: &str| -> Result<Option<String>, CorpusError> {
        match non_null(map, key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(_) => Err(malformed(format!("`{key}` must be a string"))),
        }
    };

    let article_id = text_field(&fields.article_id)?;
    let (gold_title, gold_abstract, gold_content) = match split {
        Split::Train => (
            text_field(&fields.title)?,
            text_field(&fields.abstract_)?,
            text_field(&fields.content)?,
        ),
        Split::Test => (None, None, None),
    };

    Ok(SurveyRecord {
        article_id,
        subjects,
        references,
        gold_title,
        gold_abstract,
        gold_content,
        reference_contents,
    })
}

fn non_null<'a>(map: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    map.get(key).filter(|v| !v.is_null())
}

fn split_subjects(value: &Value) -> Option<Vec<String>> {
    let parts: Vec<String> = match value {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<_>>()?,
        _ => return None,
    };
    Some(
        parts
            .iter()
            .flat_map(|s| s.split(';'))
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect(),
    )
}

fn string_list(value: &Value) -> Option<Vec<String>> {
    match value {
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Null => Some(String::new()),
                _ => None,
            })
            .collect(),
        Value::String(s) => Some(s.lines().map(str::to_string).collect()),
        _ => None,
    }
}

fn reference_contents(
    value: &Value,
    references: &[ReferenceEntry],
    renumber: &BTreeMap<usize, usize>,
) -> Option<BTreeMap<usize, String>> {
    let mut out = BTreeMap::new();
    match value {
        Value::Array(items) => {
            for (pos, item) in items.iter().enumerate() {
                if let (Some(text), Some(&index)) = (content_text(item), renumber.get(&pos)) {
                    out.insert(index, text);
                }
            }
        }
        Value::Object(entries) => {
            for (key, item) in entries {
                let Some(text) = content_text(item) else {
                    continue;
                };
                // Keys are either 1-based indices or the reference string itself.
                let index = match key.trim().parse::<usize>() {
                    Ok(i) if i >= 1 && i <= references.len() => Some(i),
                    _ => references
                        .iter()
                        .find(|r| r.title == key.trim())
                        .map(|r| r.index),
                };
                if let Some(index) = index {
                    out.insert(index, text);
                }
            }
        }
        _ => return None,
    }
    Some(out)
}

fn content_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        Value::Array(parts) => {
            let joined: Vec<&str> = parts.iter().filter_map(Value::as_str).collect();
            let joined = joined.join("\n");
            (!joined.trim().is_empty()).then_some(joined)
        }
        _ => None,
    }
}

/// Serializes a record back into one line of the record format.
pub fn record_to_json(record: &SurveyRecord, fields: &FieldNames) -> Value {
    let mut map = Map::new();
    if let Some(id) = &record.article_id {
        map.insert(fields.article_id.clone(), Value::String(id.clone()));
    }
    map.insert(
        fields.subject.clone(),
        Value::Array(record.subjects.iter().cloned().map(Value::String).collect()),
    );
    map.insert(
        fields.reference.clone(),
        Value::Array(
            record
                .references
                .iter()
                .map(|r| Value::String(r.title.clone()))
                .collect(),
        ),
    );
    if !record.reference_contents.is_empty() {
        let contents: Map<String, Value> = record
            .reference_contents
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
            .collect();
        map.insert(fields.reference_content.clone(), Value::Object(contents));
    }
    for (key, value) in [
        (&fields.title, &record.gold_title),
        (&fields.abstract_, &record.gold_abstract),
        (&fields.content, &record.gold_content),
    ] {
        if let Some(v) = value {
            map.insert(key.clone(), Value::String(v.clone()));
        }
    }
    Value::Object(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorpusStats {
    pub paper_count: usize,
    pub avg_subjects: f64,
    pub avg_references: f64,
    pub avg_reference_contents: f64,
    /// Mean gold content length in characters, over records that have content.
    pub avg_content_chars: f64,
    pub records_with_content: usize,
}

pub fn compute_stats(records: &[SurveyRecord]) -> CorpusStats {
    let n = records.len();
    let mean = |total: usize, count: usize| {
        if count == 0 {
            0.0
        } else {
            total as f64 / count as f64
        }
    };
    let subjects: usize = records.iter().map(|r| r.subjects.len()).sum();
    let references: usize = records.iter().map(|r| r.references.len()).sum();
    let contents: usize = records.iter().map(|r| r.reference_contents.len()).sum();
    let content_lengths: Vec<usize> = records
        .iter()
        .filter_map(|r| r.gold_content.as_ref())
        .map(|c| c.chars().count())
        .collect();

    CorpusStats {
        paper_count: n,
        avg_subjects: mean(subjects, n),
        avg_references: mean(references, n),
        avg_reference_contents: mean(contents, n),
        avg_content_chars: mean(content_lengths.iter().sum(), content_lengths.len()),
        records_with_content: content_lengths.len(),
    }
}
