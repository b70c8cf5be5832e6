//! Sibling similarity (skip-pattern, type and embedding evidence combined
//! multiplicatively) and parenthood similarity (embedding-offset agreement
//! with a set of reference edges).

use thiserror::Error;

use crate::corpus::{FeatureStore, PatternId, TermIndex};
use crate::embeddings::{cosine, EmbeddingError, EmbeddingStore};
use crate::typestore::TypeStore;
use crate::TermId;

#[derive(Debug, Error)]
pub enum SimilarityError {
    #[error("no reference edges")]
    EmptyReference,
    #[error("zero offset vector: similarity undefined")]
    ZeroOffset,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// A set of skip-patterns that similarity is conditioned on. Kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureSubset {
    patterns: Vec<PatternId>,
}

impl FeatureSubset {
    pub fn new(patterns: impl IntoIterator<Item = PatternId>) -> Self {
        let mut patterns: Vec<PatternId> = patterns.into_iter().collect();
        patterns.sort_unstable();
        patterns.dedup();
        FeatureSubset { patterns }
    }

    pub fn patterns(&self) -> &[PatternId] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn contains(&self, p: PatternId) -> bool {
        self.patterns.binary_search(&p).is_ok()
    }
}

/// `Σ min(a_i, b_i) / Σ max(a_i, b_i)`, 0 when the denominator vanishes.
pub fn min_max_ratio(a: &[f64], b: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += x.min(*y);
        den += x.max(*y);
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Mean of `v(parent) - v(child)` over a set of reference edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceOffset(Vec<f64>);

impl ReferenceOffset {
    pub fn from_edges(emb: &EmbeddingStore, edges: &[(TermId, TermId)]) -> Result<Self, SimilarityError> {
        if edges.is_empty() {
            return Err(SimilarityError::EmptyReference);
        }
        let mut mean = vec![0.0; emb.dim()];
        for (p, c) in edges {
            for (m, d) in mean.iter_mut().zip(emb.offset(p, c)?) {
                *m += d;
            }
        }
        let n = edges.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        if mean.iter().all(|&x| x == 0.0) {
            return Err(SimilarityError::ZeroOffset);
        }
        Ok(ReferenceOffset(mean))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Read-only view over the three feature sources.
#[derive(Clone, Copy)]
pub struct SimilarityModel<'a> {
    pub features: &'a FeatureStore,
    pub types: &'a TypeStore,
    pub embeddings: &'a EmbeddingStore,
}

impl<'a> SimilarityModel<'a> {
    pub fn new(features: &'a FeatureStore, types: &'a TypeStore, embeddings: &'a EmbeddingStore) -> Self {
        SimilarityModel {
            features,
            types,
            embeddings,
        }
    }

    /// Weights of `term` projected onto `sk`, in subset order.
    pub fn subset_weights(&self, term: &str, sk: &FeatureSubset) -> Vec<f64> {
        match self.features.index_of(term) {
            Some(idx) => self.subset_weights_idx(idx, sk),
            None => vec![0.0; sk.len()],
        }
    }

    pub(crate) fn subset_weights_idx(&self, idx: TermIndex, sk: &FeatureSubset) -> Vec<f64> {
        let row = self.features.row(idx);
        // Merge-walk: both sides are sorted by pattern id.
        let mut out = Vec::with_capacity(sk.len());
        let mut j = 0;
        for &p in sk.patterns() {
            while j < row.len() && row[j].pattern < p {
                j += 1;
            }
            out.push(if j < row.len() && row[j].pattern == p { row[j].weight } else { 0.0 });
        }
        out
    }

    /// Skip-pattern sibling similarity restricted to `sk`.
    pub fn sib_sim_sk(&self, e1: &str, e2: &str, sk: &FeatureSubset) -> f64 {
        min_max_ratio(&self.subset_weights(e1, sk), &self.subset_weights(e2, sk))
    }

    /// Embedding cosine clamped at 0; 0 when either vector is missing.
    pub fn embedding_sim(&self, e1: &str, e2: &str) -> f64 {
        self.embeddings.similarity(e1, e2).map_or(0.0, |c| c.max(0.0))
    }

    pub fn type_sim(&self, e1: &str, e2: &str) -> f64 {
        self.types.type_similarity(e1, e2)
    }

    /// `sqrt((1 + sim_sk) * sim_emb) * sqrt(1 + sim_type)`.
    pub fn sib_sim(&self, e1: &str, e2: &str, sk: &FeatureSubset) -> f64 {
        combine_sibling(self.sib_sim_sk(e1, e2, sk), self.embedding_sim(e1, e2), self.type_sim(e1, e2))
    }

    /// Sibling similarity with precomputed subset weights for both sides.
    pub(crate) fn sib_sim_with(&self, e1: &str, w1: &[f64], e2: &str, w2: &[f64]) -> f64 {
        combine_sibling(min_max_ratio(w1, w2), self.embedding_sim(e1, e2), self.type_sim(e1, e2))
    }

    /// Cosine between `v(parent) - v(x)` and the mean reference offset.
    pub fn par_sim(&self, parent: &str, x: &str, reference_edges: &[(TermId, TermId)]) -> Result<f64, SimilarityError> {
        let reference = ReferenceOffset::from_edges(self.embeddings, reference_edges)?;
        self.par_sim_with(parent, x, &reference)
    }

    pub fn par_sim_with(&self, parent: &str, x: &str, reference: &ReferenceOffset) -> Result<f64, SimilarityError> {
        let offset = self.embeddings.offset(parent, x)?;
        if offset.iter().all(|&d| d == 0.0) {
            return Err(SimilarityError::ZeroOffset);
        }
        Ok(cosine(&offset, reference.as_slice())?)
    }
}

fn combine_sibling(sk: f64, emb: f64, tp: f64) -> f64 {
    ((1.0 + sk) * emb.max(0.0)).sqrt() * (1.0 + tp).sqrt()
}
