//! Entity type features (term → type label with a confidence score).
//!
//! Type weights use the same salience form as skip-pattern weights, with the
//! candidate vocabulary size `|V|` borrowed from the [`FeatureStore`].
//!
//! [`FeatureStore`]: crate::corpus::FeatureStore

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::corpus::association_weight;
use crate::TermId;

#[derive(Debug, Error)]
pub enum TypeStoreError {
    #[error("failed to read type file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeRecord {
    pub term: TermId,
    pub type_label: String,
    pub confidence: f64,
}

/// Term → type weights, immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct TypeStore {
    /// Per term, `(label, confidence, weight)` sorted by label.
    by_term: FxHashMap<TermId, Vec<(String, f64, f64)>>,
    totals: BTreeMap<String, f64>,
    vocab_size: usize,
}

impl TypeStore {
    pub fn empty(vocab_size: usize) -> Self {
        TypeStore {
            vocab_size,
            ..Default::default()
        }
    }

    /// Rejects nonpositive confidences and repeated (term, label) pairs.
    pub fn from_records(records: Vec<TypeRecord>, vocab_size: usize) -> Result<Self, TypeStoreError> {
        let mut by_term: FxHashMap<TermId, Vec<(String, f64, f64)>> = FxHashMap::default();
        let mut totals: BTreeMap<String, f64> = BTreeMap::new();
        for (i, r) in records.into_iter().enumerate() {
            if !(r.confidence > 0.0 && r.confidence.is_finite()) {
                return Err(TypeStoreError::Parse {
                    line: i + 1,
                    msg: format!("confidence must be positive, got {}", r.confidence),
                });
            }
            let entry = by_term.entry(r.term.clone()).or_default();
            if entry.iter().any(|(l, _, _)| *l == r.type_label) {
                return Err(TypeStoreError::Parse {
                    line: i + 1,
                    msg: format!("duplicate pair ({}, {})", r.term, r.type_label),
                });
            }
            *totals.entry(r.type_label.clone()).or_insert(0.0) += r.confidence;
            entry.push((r.type_label, r.confidence, 0.0));
        }
        for row in by_term.values_mut() {
            row.sort_by(|a, b| a.0.cmp(&b.0));
            for (label, c, w) in row.iter_mut() {
                *w = association_weight(*c, totals[label.as_str()], vocab_size);
            }
        }
        Ok(TypeStore {
            by_term,
            totals,
            vocab_size,
        })
    }

    /// Parses `term_id \t type_label \t confidence` lines. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse_tsv(text: &str, vocab_size: usize) -> Result<Self, TypeStoreError> {
        let mut records = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(TypeStoreError::Parse {
                    line: i + 1,
                    msg: format!("expected 3 tab-separated columns, found {}", cols.len()),
                });
            }
            let confidence: f64 = cols[2].trim().parse().map_err(|_| TypeStoreError::Parse {
                line: i + 1,
                msg: format!("bad confidence {:?}", cols[2]),
            })?;
            if !(confidence > 0.0 && confidence.is_finite()) {
                return Err(TypeStoreError::Parse {
                    line: i + 1,
                    msg: format!("confidence must be positive, got {confidence}"),
                });
            }
            if !seen.insert((cols[0], cols[1])) {
                return Err(TypeStoreError::Parse {
                    line: i + 1,
                    msg: format!("duplicate pair ({}, {})", cols[0], cols[1]),
                });
            }
            records.push(TypeRecord {
                term: TermId::from(cols[0]),
                type_label: cols[1].to_string(),
                confidence,
            });
        }
        Self::from_records(records, vocab_size)
    }

    /// Loads a TSV file; a missing file yields an empty store.
    pub fn load(path: &Path, vocab_size: usize) -> Result<Self, TypeStoreError> {
        match fs::read_to_string(path) {
            Ok(text) => Self::parse_tsv(&text, vocab_size),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::empty(vocab_size)),
            Err(source) => Err(TypeStoreError::Io {
                path: path.display().to_string(),
                source,
            }),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_labels(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_term.is_empty()
    }

    /// `f[e, ty]`; 0 when the pair is absent.
    pub fn type_weight(&self, term: &str, type_label: &str) -> f64 {
        self.by_term
            .get(term)
            .and_then(|row| row.binary_search_by(|(l, _, _)| l.as_str().cmp(type_label)).ok().map(|i| row[i].2))
            .unwrap_or(0.0)
    }

    fn row(&self, term: &str) -> &[(String, f64, f64)] {
        self.by_term.get(term).map_or(&[], |r| r.as_slice())
    }

    /// Weighted Jaccard of the two terms' type-weight vectors over all
    /// labels; 0 when both are empty.
    pub fn type_similarity(&self, a: &str, b: &str) -> f64 {
        let (ra, rb) = (self.row(a), self.row(b));
        let (mut i, mut j) = (0, 0);
        let (mut num, mut den) = (0.0, 0.0);
        while i < ra.len() || j < rb.len() {
            let ord = match (ra.get(i), rb.get(j)) {
                (Some(x), Some(y)) => x.0.cmp(&y.0),
                (Some(_), None) => std::cmp::Ordering::Less,
                _ => std::cmp::Ordering::Greater,
            };
            match ord {
                std::cmp::Ordering::Equal => {
                    num += ra[i].2.min(rb[j].2);
                    den += ra[i].2.max(rb[j].2);
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    den += ra[i].2;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    den += rb[j].2;
                    j += 1;
                }
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}
