use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Lowercased alphanumeric tokens. Everything that is not a letter or digit
/// separates tokens; there is no stemming.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence { tokens }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        if candidate_total == 0 || reference_total == 0 {
            return Self::default();
        }
        Self::from_pr(
            overlap as f64 / candidate_total as f64,
            overlap as f64 / reference_total as f64,
        )
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    pub fn component(&self, which: RougeComponent) -> f64 {
        match which {
            RougeComponent::F1 => self.f1,
            RougeComponent::Recall => self.recall,
        }
    }
}

/// Which part of a [`RougeScore`] is reported as "the" ROUGE number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeComponent {
    #[default]
    F1,
    Recall,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram overlap between candidate and reference.
pub fn rouge_n(candidate: &TokenSequence, reference: &TokenSequence, n: usize) -> RougeScore {
    let cand = ngram_counts(&candidate.tokens, n);
    let refs = ngram_counts(&reference.tokens, n);
    let overlap: usize = refs
        .iter()
        .map(|(gram, &r)| cand.get(gram).map_or(0, |&c| c.min(r)))
        .sum();
    RougeScore::from_counts(overlap, cand.values().sum(), refs.values().sum())
}

/// Length of the longest common subsequence, in O(|a|·|b|) time and
/// O(min(|a|,|b|)) memory.
pub fn lcs_length(a: &[String], b: &[String]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0u32; short.len() + 1];
    let mut row = vec![0u32; short.len() + 1];
    for x in long {
        for (j, y) in short.iter().enumerate() {
            row[j + 1] = if x == y {
                prev[j] + 1
            } else {
                row[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut row);
    }
    prev[short.len()] as usize
}

pub fn rouge_l(candidate: &TokenSequence, reference: &TokenSequence) -> RougeScore {
    let lcs = lcs_length(&candidate.tokens, &reference.tokens);
    RougeScore::from_counts(lcs, candidate.len(), reference.len())
}
