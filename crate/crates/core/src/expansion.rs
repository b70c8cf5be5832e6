//! Width expansion (ensemble set expansion with a mean-reciprocal-rank gate)
//! and depth expansion (initial children from embedding offsets).
//!
//! Width expansion works in four steps:
//!
//! 1. score every skip-pattern by its summed weight over the seed set and keep
//!    the top `top_features` as the feature pool;
//! 2. draw `num_subsets` random subsets of the pool without replacement;
//! 3. per subset, rank every candidate associated with at least one pattern
//!    of the subset by its mean sibling similarity to the seeds;
//! 4. admit candidates whose mean reciprocal rank across the lists exceeds
//!    `1 / mrr_rank_threshold`.
//!
//! A candidate that only does well under a few feature subsets gets a low
//! mean reciprocal rank, which keeps noisy terms out.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{FeatureStore, PatternId, TermIndex};
use crate::similarity::{FeatureSubset, ReferenceOffset, SimilarityError, SimilarityModel};
use crate::TermId;

/// Number of initial children seeded by depth expansion.
pub const DEPTH_SEED_CHILDREN: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub top_features: usize,
    pub num_subsets: usize,
    pub subset_size: usize,
    pub mrr_rank_threshold: usize,
    pub rng_seed: u64,
    /// Upper bound on terms admitted by one width-expansion call.
    pub max_admitted: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            top_features: 200,
            num_subsets: 10,
            subset_size: 120,
            mrr_rank_threshold: 5,
            rng_seed: 0,
            max_admitted: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.subset_size == 0 || self.subset_size > self.top_features {
            return Err(format!(
                "subset_size must be in 1..=top_features ({}), got {}",
                self.top_features, self.subset_size
            ));
        }
        if self.num_subsets == 0 {
            return Err("num_subsets must be at least 1".into());
        }
        if self.mrr_rank_threshold == 0 {
            return Err("mrr_rank_threshold must be at least 1".into());
        }
        Ok(())
    }

    /// Subset size for a pool of `pool_len` patterns: `subset_size` for a
    /// full pool, the same sampling fraction (rounded up) for a smaller one.
    pub fn effective_subset_size(&self, pool_len: usize) -> usize {
        if pool_len >= self.top_features {
            self.subset_size
        } else {
            (pool_len * self.subset_size).div_ceil(self.top_features).clamp(1.min(pool_len), pool_len)
        }
    }
}

/// Descending by score, then ascending by term.
pub fn rank_order(a: &(TermId, f64), b: &(TermId, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

/// Candidates ordered by score, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedList {
    entries: Vec<(TermId, f64)>,
}

impl RankedList {
    pub fn from_scores(mut entries: Vec<(TermId, f64)>) -> Self {
        entries.sort_by(rank_order);
        RankedList { entries }
    }

    pub fn entries(&self) -> &[(TermId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// 1-based rank, `None` when absent.
    pub fn rank_of(&self, term: &str) -> Option<usize> {
        self.entries.iter().position(|(t, _)| t.as_str() == term).map(|i| i + 1)
    }
}

/// Mean reciprocal rank over `num_lists` lists; absent entries contribute 0.
pub fn mean_reciprocal_rank(ranks: &[Option<usize>], num_lists: usize) -> f64 {
    ranks.iter().flatten().map(|&r| 1.0 / r as f64).sum::<f64>() / num_lists as f64
}

/// A term admitted by width expansion with its mean reciprocal rank.
#[derive(Debug, Clone, PartialEq)]
pub struct Admitted {
    pub term: TermId,
    pub mrr: f64,
}

/// Patterns ranked by summed weight over `seeds`; only positive scores,
/// ties broken by the serialized pattern.
pub fn rank_features(features: &FeatureStore, seeds: &[TermId], k: usize) -> Vec<(PatternId, f64)> {
    let mut score: FxHashMap<PatternId, f64> = FxHashMap::default();
    for s in seeds {
        if let Some(idx) = features.index_of(s) {
            for e in features.row(idx) {
                *score.entry(e.pattern).or_insert(0.0) += e.weight;
            }
        }
    }
    let mut ranked: Vec<(PatternId, f64)> = score.into_iter().filter(|&(_, s)| s > 0.0).collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| features.pattern(a.0).cmp(features.pattern(b.0)))
    });
    ranked.truncate(k);
    ranked
}

/// The `k` patterns with the largest summed weight over `seeds`.
pub fn select_quality_features(features: &FeatureStore, seeds: &[TermId], k: usize) -> FeatureSubset {
    FeatureSubset::new(rank_features(features, seeds, k).into_iter().map(|(p, _)| p))
}

pub struct Expander<'a> {
    pub model: SimilarityModel<'a>,
    pub cfg: &'a EnsembleConfig,
}

impl<'a> Expander<'a> {
    pub fn new(model: SimilarityModel<'a>, cfg: &'a EnsembleConfig) -> Self {
        Expander { model, cfg }
    }

    pub fn rank_features(&self, seeds: &[TermId], k: usize) -> Vec<(PatternId, f64)> {
        rank_features(self.model.features, seeds, k)
    }

    pub fn select_quality_features(&self, seeds: &[TermId], k: usize) -> FeatureSubset {
        select_quality_features(self.model.features, seeds, k)
    }

    /// Mean sibling similarity of `e` to the seeds under `sk`; `None` when
    /// `e` has no pattern in `sk`.
    pub fn score_candidate(&self, e: &str, seeds: &[TermId], sk: &FeatureSubset) -> Option<f64> {
        let features = self.model.features;
        let idx = features.index_of(e)?;
        if !sk.patterns().iter().any(|&p| features.count(idx, p) > 0) || seeds.is_empty() {
            return None;
        }
        let we = self.model.subset_weights_idx(idx, sk);
        let total: f64 = seeds
            .iter()
            .map(|s| self.model.sib_sim_with(e, &we, s, &self.model.subset_weights(s, sk)))
            .sum();
        Some(total / seeds.len() as f64)
    }

    /// Ranks every eligible candidate not in `seeds` or `exclude`.
    pub fn rank_candidates(&self, seeds: &[TermId], sk: &FeatureSubset, exclude: &HashSet<TermId>) -> RankedList {
        let features = self.model.features;
        let mut eligible: Vec<TermIndex> = sk.patterns().iter().flat_map(|&p| features.terms_with_pattern(p).iter().copied()).collect();
        eligible.sort_unstable();
        eligible.dedup();
        let seed_weights: Vec<Vec<f64>> = seeds.iter().map(|s| self.model.subset_weights(s, sk)).collect();
        let scores = eligible
            .into_iter()
            .map(|idx| features.term(idx))
            .filter(|t| !exclude.contains(*t) && !seeds.contains(t))
            .map(|t| {
                let we = self.model.subset_weights(t, sk);
                let sum: f64 = seeds.iter().zip(&seed_weights).map(|(s, ws)| self.model.sib_sim_with(t, &we, s, ws)).sum();
                (t.clone(), sum / seeds.len() as f64)
            })
            .collect();
        RankedList::from_scores(scores)
    }

    /// Draws `num_subsets` subsets of the pool without replacement.
    pub fn sample_subsets<R: Rng>(&self, pool: &FeatureSubset, rng: &mut R) -> Vec<FeatureSubset> {
        let size = self.cfg.effective_subset_size(pool.len());
        (0..self.cfg.num_subsets)
            .map(|_| FeatureSubset::new(sample(rng, pool.len(), size).into_iter().map(|i| pool.patterns()[i])))
            .collect()
    }

    /// Ensemble width expansion. Returns admitted terms, best first; never
    /// returns a seed or a term in `exclude`.
    pub fn width_expand<R: Rng>(&self, seeds: &[TermId], exclude: &HashSet<TermId>, rng: &mut R) -> Vec<Admitted> {
        if seeds.is_empty() {
            return Vec::new();
        }
        let pool = self.select_quality_features(seeds, self.cfg.top_features);
        if pool.is_empty() {
            return Vec::new();
        }
        let subsets = self.sample_subsets(&pool, rng);
        let lists: Vec<RankedList> = subsets.par_iter().map(|sk| self.rank_candidates(seeds, sk, exclude)).collect();
        let mut rr: FxHashMap<&TermId, f64> = FxHashMap::default();
        for list in &lists {
            for (i, (t, _)) in list.entries().iter().enumerate() {
                *rr.entry(t).or_insert(0.0) += 1.0 / (i + 1) as f64;
            }
        }
        let n = self.cfg.num_subsets as f64;
        let gate = 1.0 / self.cfg.mrr_rank_threshold as f64;
        let mut admitted: Vec<(TermId, f64)> = rr
            .into_iter()
            .map(|(t, s)| (t.clone(), s / n))
            .filter(|&(_, m)| m > gate)
            .collect();
        admitted.sort_by(rank_order);
        if let Some(cap) = self.cfg.max_admitted {
            admitted.truncate(cap);
        }
        admitted.into_iter().map(|(term, mrr)| Admitted { term, mrr }).collect()
    }

    /// Top candidates for the first children of `target`, by agreement of
    /// `v(target) - v(candidate)` with the mean reference offset. Candidates
    /// without embeddings or in `exclude` are skipped.
    pub fn depth_expand(
        &self,
        target: &str,
        reference_edges: &[(TermId, TermId)],
        candidates: &[TermId],
        exclude: &HashSet<TermId>,
    ) -> Result<Vec<(TermId, f64)>, SimilarityError> {
        let reference = ReferenceOffset::from_edges(self.model.embeddings, reference_edges)?;
        if !self.model.embeddings.contains(target) {
            return Err(SimilarityError::Embedding(crate::embeddings::EmbeddingError::Missing(target.to_string())));
        }
        let mut scored: Vec<(TermId, f64)> = candidates
            .par_iter()
            .filter(|c| c.as_str() != target && !exclude.contains(*c) && self.model.embeddings.contains(c))
            .filter_map(|c| self.model.par_sim_with(target, c, &reference).ok().map(|s| (c.clone(), s)))
            .collect();
        scored.sort_by(rank_order);
        scored.truncate(DEPTH_SEED_CHILDREN);
        Ok(scored)
    }
}
