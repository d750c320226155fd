//! Soft cardinality and soft heading recall.
//!
//! `card(T) = Σ_i 1 / Σ_j Sim(t_i, t_j)` counts near-duplicate headings
//! fractionally; the recall of generated headings G against reference
//! headings R is `(card(R) + card(G) - card(R ∪ G)) / card(R)`, with the
//! union taken as the concatenated heading list.

use super::embed::{EmbedError, Embedder};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadingSet {
    pub headings: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl HeadingSet {
    pub fn new(headings: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, EmbedError> {
        if headings.is_empty() {
            return Err(EmbedError::EmptyHeadings);
        }
        if headings.len() != vectors.len() {
            return Err(EmbedError::CountMismatch {
                expected: headings.len(),
                found: vectors.len(),
            });
        }
        let dim = vectors[0].len();
        if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self { headings, vectors })
    }

    pub fn len(&self) -> usize {
        self.headings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headings.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vectors[0].len()
    }

    /// Both sets concatenated, reference-side first.
    pub fn union(&self, other: &HeadingSet) -> Result<HeadingSet, EmbedError> {
        if self.dimension() != other.dimension() {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension(),
                found: other.dimension(),
            });
        }
        let mut headings = self.headings.clone();
        headings.extend(other.headings.iter().cloned());
        let mut vectors = self.vectors.clone();
        vectors.extend(other.vectors.iter().cloned());
        Ok(HeadingSet { headings, vectors })
    }
}

pub fn embed_headings(headings: &[String], embedder: &dyn Embedder) -> Result<HeadingSet, EmbedError> {
    if headings.is_empty() {
        return Err(EmbedError::EmptyHeadings);
    }
    let vectors = embedder.embed(headings)?;
    HeadingSet::new(headings.to_vec(), vectors)
}

/// Neumaier-compensated sum; keeps e.g. ten copies of 0.1 summing to 1.0.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut compensation = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Cosine similarity. Zero vectors are dissimilar to everything; bitwise
/// identical non-zero vectors are exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot = compensated_sum(a.iter().zip(b).map(|(x, y)| x * y));
    let na = compensated_sum(a.iter().map(|x| x * x)).sqrt();
    let nb = compensated_sum(b.iter().map(|x| x * x)).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    dot / (na * nb)
}

/// Pairwise similarity clamped into [0, 1], with the self term fixed at 1.
pub fn similarity_matrix(set: &HeadingSet) -> Vec<Vec<f64>> {
    let n = set.len();
    let mut sim = vec![vec![1.0; n]; n];
    for (i, a) in set.vectors.iter().enumerate() {
        for (j, b) in set.vectors.iter().enumerate().skip(i + 1) {
            let s = cosine(a, b).clamp(0.0, 1.0);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    sim
}

pub fn soft_cardinality_of_matrix(sim: &[Vec<f64>]) -> f64 {
    compensated_sum(sim.iter().map(|row| 1.0 / compensated_sum(row.iter().copied())))
}

pub fn soft_cardinality(set: &HeadingSet) -> f64 {
    soft_cardinality_of_matrix(&similarity_matrix(set))
}

pub fn soft_heading_recall(generated: &HeadingSet, reference: &HeadingSet) -> Result<f64, EmbedError> {
    let union = reference.union(generated)?;
    let card_r = soft_cardinality(reference);
    let card_g = soft_cardinality(generated);
    let card_u = soft_cardinality(&union);
    Ok((card_r + card_g - card_u) / card_r)
}
