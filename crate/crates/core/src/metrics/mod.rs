//! Survey evaluation: ROUGE-1/2/L, soft heading recall and the overall score.

mod embed;
mod heading;
mod rouge;

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{EmbedError, Embedder, HashedBowEmbedder, HttpEmbedder, HASHED_BOW};
pub use heading::{
    cosine, embed_headings, similarity_matrix, soft_cardinality, soft_cardinality_of_matrix,
    soft_heading_recall, HeadingSet,
};
pub use rouge::{lcs_length, rouge_l, rouge_n, tokenize, RougeComponent, RougeScore, TokenSequence};

use crate::corpus::SurveyRecord;
use crate::pipeline::survey::{assemble_markdown, parse_markdown, rouge_text, GeneratedSurvey};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{name} = {value} is outside [0, 100]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Mean of (mean ROUGE, soft heading recall, human score); all inputs and
/// the result are percentages.
pub fn overall_score(
    rouge1_pct: f64,
    rouge2_pct: f64,
    rouge_l_pct: f64,
    shr_pct: f64,
    human_pct: f64,
) -> Result<f64, MetricsError> {
    for (name, value) in [
        ("rouge1", rouge1_pct),
        ("rouge2", rouge2_pct),
        ("rougeL", rouge_l_pct),
        ("soft heading recall", shr_pct),
        ("human", human_pct),
    ] {
        if !(0.0..=100.0).contains(&value) {
            return Err(MetricsError::OutOfRange { name, value });
        }
    }
    let rouge = (rouge1_pct + rouge2_pct + rouge_l_pct) / 3.0;
    Ok((rouge + shr_pct + human_pct) / 3.0)
}

/// Rounds to two decimals, the precision scores are reported at.
pub fn round2(value: f64) -> f64 {
    (value * 100.0).round() / 100.0
}

fn gold_heading_patterns() -> &'static [Regex; 4] {
    static RE: OnceLock<[Regex; 4]> = OnceLock::new();
    RE.get_or_init(|| {
        [
            Regex::new(r"^#{1,6}[ \t]+(.+?)[ \t#]*$").unwrap(),
            Regex::new(r"^\d{1,2}(?:\.\d{1,2})*\.?[ \t]+(\S.*)$").unwrap(),
            Regex::new(r"^[IVXLC]{1,6}\.[ \t]+(\S.*)$").unwrap(),
            Regex::new(r"^[A-Z]\.[ \t]+(\S.*)$").unwrap(),
        ]
    })
}

fn leading_number() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(?:\d{1,2}(?:\.\d{1,2})*\.?|[IVXLC]{1,6}\.|[A-Z]\.)[ \t]+").unwrap()
    })
}

const MAX_HEADING_WORDS: usize = 15;

/// Heading lines of a gold survey body: markdown `#` headings and lines
/// numbered like "1.", "1.1", "I." or "A.". Numbered lines only count when
/// they are short, start with a capital and do not end like a sentence, so
/// numbered prose lists are not mistaken for structure.
pub fn extract_gold_headings(content: &str) -> Vec<String> {
    let [markdown, arabic, roman, letter] = gold_heading_patterns();
    let mut out = Vec::new();
    for line in content.lines() {
        let line = line.trim();
        if let Some(c) = markdown.captures(line) {
            let text = leading_number().replace(c[1].trim(), "").trim().to_string();
            if !text.is_empty() {
                out.push(text);
            }
            continue;
        }
        let Some(c) = [arabic, roman, letter]
            .iter()
            .find_map(|re| re.captures(line))
        else {
            continue;
        };
        let text = c[1].trim();
        let starts_upper = text.chars().next().is_some_and(char::is_uppercase);
        let sentence_end = text.ends_with(['.', ',', ';', ':']);
        if starts_upper && !sentence_end && text.split_whitespace().count() <= MAX_HEADING_WORDS {
            out.push(text.to_string());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeTriple {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

impl RougeTriple {
    pub fn compute(candidate: &str, reference: &str) -> Self {
        let c = tokenize(candidate);
        let r = tokenize(reference);
        Self {
            rouge1: rouge_n(&c, &r, 1),
            rouge2: rouge_n(&c, &r, 2),
            rouge_l: rouge_l(&c, &r),
        }
    }

    pub fn average(&self, which: RougeComponent) -> f64 {
        (self.rouge1.component(which) + self.rouge2.component(which) + self.rouge_l.component(which))
            / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rouge: Option<RougeTriple>,
    pub component: RougeComponent,
    /// Mean of the selected ROUGE components, as a fraction.
    pub rouge_avg: Option<f64>,
    /// As a fraction; multiply by 100 for the reported percentage.
    pub soft_heading_recall: Option<f64>,
    /// Percentage supplied by human judges.
    pub human: Option<f64>,
    /// Percentage; present only when a human score was supplied.
    pub overall: Option<f64>,
    /// Why any metric above is missing.
    pub absent: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub component: RougeComponent,
    pub human_pct: Option<f64>,
}

pub fn evaluate_pair(
    generated: &GeneratedSurvey,
    gold: &SurveyRecord,
    embedder: &dyn Embedder,
    options: EvalOptions,
) -> Result<EvalReport, MetricsError> {
    evaluate_markdown(&assemble_markdown(generated), gold, embedder, options)
}

/// Scores a generated survey given as markdown against a gold record.
pub fn evaluate_markdown(
    markdown: &str,
    gold: &SurveyRecord,
    embedder: &dyn Embedder,
    options: EvalOptions,
) -> Result<EvalReport, MetricsError> {
    let mut absent = Vec::new();
    let gold_content = gold
        .gold_content
        .as_deref()
        .filter(|c| !c.trim().is_empty());

    let rouge = match gold_content {
        Some(content) => Some(RougeTriple::compute(&rouge_text(markdown), content)),
        None => {
            absent.push("rouge: gold record has no content".to_string());
            None
        }
    };

    let generated_headings = parse_markdown(markdown).headings();
    let gold_headings = gold_content.map(extract_gold_headings).unwrap_or_default();
    let soft_heading_recall = if gold_content.is_none() {
        absent.push("soft heading recall: gold record has no content".to_string());
        None
    } else if gold_headings.is_empty() {
        absent.push("soft heading recall: no headings found in gold content".to_string());
        None
    } else if generated_headings.is_empty() {
        // Nothing generated recalls nothing; this is a real zero.
        Some(0.0)
    } else {
        let reference = embed_headings(&gold_headings, embedder)?;
        let generated = embed_headings(&generated_headings, embedder)?;
        Some(soft_heading_recall(&generated, &reference)?)
    };

    let rouge_avg = rouge.map(|r| r.average(options.component));
    let overall = match (options.human_pct, rouge, soft_heading_recall) {
        (Some(human), Some(r), Some(shr)) => Some(overall_score(
            (r.rouge1.component(options.component) * 100.0).clamp(0.0, 100.0),
            (r.rouge2.component(options.component) * 100.0).clamp(0.0, 100.0),
            (r.rouge_l.component(options.component) * 100.0).clamp(0.0, 100.0),
            (shr * 100.0).clamp(0.0, 100.0),
            human,
        )?),
        (Some(_), _, _) => {
            absent.push("overall: a component metric is missing".to_string());
            None
        }
        (None, _, _) => None,
    };

    Ok(EvalReport {
        rouge,
        component: options.component,
        rouge_avg,
        soft_heading_recall,
        human: options.human_pct,
        overall,
        absent,
    })
}
