//! Extraction of titles, bullet lists and citation indices from model replies.

use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TitleError {
    #[error("no line starting with \"Title:\" found")]
    MarkerMissing,
    #[error("\"Title:\" marker present but no title follows it")]
    EmptyTitle,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTitle {
    pub title: String,
    pub raw_line: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BulletList {
    pub items: Vec<String>,
}

impl BulletList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CitationSelection {
    pub indices: Vec<usize>,
}

impl CitationSelection {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountCheck {
    Accept,
    Regenerate,
}

const QUOTES: &[char] = &['"', '\'', '“', '”', '‘', '’', '«', '»', '`', '「', '」'];
const DECORATION: &[char] = &['*', '_', '#', '>', '~'];

fn title_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)title\s*:").unwrap())
}

/// Finds the last line carrying the "Title:" marker and cleans it up.
pub fn extract_title(reply: &str) -> Result<ParsedTitle, TitleError> {
    for line in reply.lines().rev() {
        let trimmed = line.trim();
        let undecorated = trimmed.trim_start_matches(|c: char| DECORATION.contains(&c) || c.is_whitespace());
        if !undecorated.to_ascii_lowercase().starts_with("title") {
            continue;
        }
        let Some(m) = title_marker().find(undecorated) else {
            continue;
        };
        if m.start() != 0 {
            continue;
        }
        let title = clean_title(&undecorated[m.end()..]);
        if title.is_empty() {
            return Err(TitleError::EmptyTitle);
        }
        return Ok(ParsedTitle {
            title,
            raw_line: trimmed.to_string(),
        });
    }
    Err(TitleError::MarkerMissing)
}

fn clean_title(raw: &str) -> String {
    let mut text = raw.to_string();
    loop {
        let before = text.clone();
        text = text
            .trim_matches(|c: char| c.is_whitespace() || DECORATION.contains(&c))
            .to_string();
        // "Title: Title: X" and bold markers like "**Title:** X"
        if let Some(m) = title_marker().find(&text) {
            if m.start() == 0 {
                text = text[m.end()..].to_string();
            }
        }
        text = strip_wrapping_quotes(&text);
        text = text
            .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')' && c != '?' && c != '!' && !QUOTES.contains(&c))
            .to_string();
        if text == before {
            break;
        }
    }
    // Whatever is left must not carry the marker anywhere.
    title_marker().replace_all(&text, "").trim().to_string()
}

fn strip_wrapping_quotes(text: &str) -> String {
    let t = text.trim();
    let mut chars = t.chars();
    match (chars.next(), chars.next_back()) {
        (Some(a), Some(b)) if QUOTES.contains(&a) && QUOTES.contains(&b) => {
            chars.as_str().trim().to_string()
        }
        (Some(a), None) if QUOTES.contains(&a) => String::new(),
        _ => t.to_string(),
    }
}

fn list_numbering() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:\(\d+\)|\d+(?:\.\d+)*[.)]?)\s+").unwrap())
}

/// Returns the item text when `line` is a bullet, `None` otherwise.
fn bullet_body(line: &str) -> Option<&str> {
    let t = line.trim();
    if let Some(rest) = t.strip_prefix("- ") {
        return Some(rest);
    }
    if let Some(rest) = t.strip_prefix("• ").or_else(|| t.strip_prefix('•')) {
        return Some(rest);
    }
    t.strip_prefix('*')
}

pub fn extract_bullets(reply: &str) -> BulletList {
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for line in reply.lines() {
        let Some(body) = bullet_body(line) else {
            continue;
        };
        let mut item = body.trim();
        // "**Heading**" emphasis and stray numbering inside the bullet
        item = item.trim_matches(|c: char| c == '*' || c == '_').trim();
        if let Some(m) = list_numbering().find(item) {
            item = item[m.end()..].trim();
        }
        item = item.trim_matches(|c: char| c == '*' || c == '_').trim();
        if item.is_empty() {
            continue;
        }
        if seen.insert(item.to_string()) {
            items.push(item.to_string());
        }
    }
    BulletList { items }
}

fn citation_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)\]").unwrap())
}

/// Collects `[k]` indices from bullet lines in reading order, or from every
/// line when no bullet line has one. Out-of-range and repeated indices are
/// dropped.
pub fn extract_citations(reply: &str, max_index: usize) -> CitationSelection {
    let bullet_lines: Vec<&str> = reply.lines().filter(|l| bullet_body(l).is_some()).collect();
    let has_bracket = bullet_lines.iter().any(|l| citation_pattern().is_match(l));
    let lines: Vec<&str> = if has_bracket {
        bullet_lines
    } else {
        reply.lines().collect()
    };
    let mut seen = HashSet::new();
    let indices = lines
        .iter()
        .flat_map(|l| citation_pattern().captures_iter(l))
        .filter_map(|c| c[1].parse::<usize>().ok())
        .filter(|&k| k >= 1 && k <= max_index)
        .filter(|k| seen.insert(*k))
        .collect();
    CitationSelection { indices }
}

/// Every distinct `[k]` with `1 <= k <= max_index` anywhere in `text`.
pub fn cited_indices(text: &str, max_index: usize) -> Vec<usize> {
    let mut seen = HashSet::new();
    citation_pattern()
        .captures_iter(text)
        .filter_map(|c| c[1].parse::<usize>().ok())
        .filter(|&k| k >= 1 && k <= max_index && seen.insert(k))
        .collect()
}

pub fn validate_count(items: &BulletList, hard_min: usize, hard_max: usize) -> CountCheck {
    debug_assert!(hard_min <= hard_max);
    if (hard_min..=hard_max).contains(&items.len()) {
        CountCheck::Accept
    } else {
        CountCheck::Regenerate
    }
}
