//! Ancestor-F1 and Edge-F1 of a predicted taxonomy against a gold one.
//!
//! Pairs touching the artificial root are excluded from both sides.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::taxonomy::Taxonomy;
use crate::TermId;

/// A set of (ancestor, descendant) or (parent, child) term pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSet {
    pairs: BTreeSet<(TermId, TermId)>,
}

impl PairSet {
    /// Transitive (ancestor, descendant) pairs.
    pub fn ancestors(tax: &Taxonomy) -> Self {
        let mut pairs = BTreeSet::new();
        for n in tax.bfs() {
            for a in tax.ancestors(n) {
                if a != tax.root() && tax.term(a) != tax.term(n) {
                    pairs.insert((tax.term(a).clone(), tax.term(n).clone()));
                }
            }
        }
        PairSet { pairs }
    }

    /// Direct (parent, child) pairs.
    pub fn edges(tax: &Taxonomy) -> Self {
        let pairs = tax
            .edges()
            .into_iter()
            .filter(|(p, c)| !p.is_root() && p != c)
            .collect();
        PairSet { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&(TermId::from(a), TermId::from(b)))
    }

    pub fn intersection_len(&self, other: &PairSet) -> usize {
        self.pairs.intersection(&other.pairs).count()
    }

    pub fn is_subset(&self, other: &PairSet) -> bool {
        self.pairs.is_subset(&other.pairs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub correct: usize,
}

impl Scores {
    pub fn from_sets(pred: &PairSet, gold: &PairSet) -> Self {
        let correct = pred.intersection_len(gold);
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(correct, pred.len());
        let recall = ratio(correct, gold.len());
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            precision,
            recall,
            f1,
            predicted: pred.len(),
            gold: gold.len(),
            correct,
        }
    }
}

pub fn ancestor_f1(pred: &Taxonomy, gold: &Taxonomy) -> Scores {
    Scores::from_sets(&PairSet::ancestors(pred), &PairSet::ancestors(gold))
}

pub fn edge_f1(pred: &Taxonomy, gold: &Taxonomy) -> Scores {
    Scores::from_sets(&PairSet::edges(pred), &PairSet::edges(gold))
}

/// Report written by the `evaluate` stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ancestor: Scores,
    pub edge: Scores,
}

pub fn evaluate(pred: &Taxonomy, gold: &Taxonomy) -> EvalReport {
    EvalReport {
        ancestor: ancestor_f1(pred, gold),
        edge: edge_f1(pred, gold),
    }
}
