//! Corpus ingestion and skip-pattern feature extraction.
//!
//! Input is JSON Lines, one sentence per line:
//!
//! ```json
//! {"tokens": ["We","pay","California","tax"], "pos": ["PRP","VBP","NNP","NN"], "entities": [[2,3,"California"]]}
//! ```
//!
//! Each entity occurrence survives only if its POS tags contain at least one
//! noun tag. Surviving occurrences emit up to six skip-patterns, and the
//! (term, pattern) co-occurrence counts are accumulated into a
//! [`FeatureStore`]. Counting is chunk-parallel with an order-preserving
//! merge, so the store is identical to a single-threaded build.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::TermId;

/// Penn Treebank noun tags.
pub const DEFAULT_NOUN_TAGS: [&str; 4] = ["NN", "NNS", "NNP", "NNPS"];

/// Context shapes `(left_len, right_len)` of the extracted skip-patterns.
pub const PATTERN_SHAPES: [(usize, usize); 6] = [(1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3)];

/// Placeholder token standing in for the target term.
pub const PLACEHOLDER: &str = "__";

const LINE_CHUNK: usize = 16_384;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Reasons a single record is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("{tokens} tokens but {pos} POS tags")]
    LengthMismatch { tokens: usize, pos: usize },
    #[error("entity span [{start}, {end}) invalid for a sentence of {len} tokens")]
    BadSpan { start: usize, end: usize, len: usize },
    #[error("entity span reads {surface:?} but is labelled {term:?}")]
    TermMismatch { surface: String, term: String },
}

/// One entity occurrence: tokens `[start, end)` of the sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, TermId)", into = "(usize, usize, TermId)")]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub term: TermId,
}

impl From<(usize, usize, TermId)> for EntitySpan {
    fn from((start, end, term): (usize, usize, TermId)) -> Self {
        EntitySpan { start, end, term }
    }
}

impl From<EntitySpan> for (usize, usize, TermId) {
    fn from(s: EntitySpan) -> Self {
        (s.start, s.end, s.term)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    #[serde(default)]
    pub entities: Vec<EntitySpan>,
}

impl SentenceRecord {
    pub fn validate(&self) -> Result<(), RecordError> {
        if self.tokens.len() != self.pos.len() {
            return Err(RecordError::LengthMismatch {
                tokens: self.tokens.len(),
                pos: self.pos.len(),
            });
        }
        for span in &self.entities {
            if span.start >= span.end || span.end > self.tokens.len() {
                return Err(RecordError::BadSpan {
                    start: span.start,
                    end: span.end,
                    len: self.tokens.len(),
                });
            }
            let surface = TermId::from_tokens(&self.tokens[span.start..span.end]);
            if surface != span.term {
                return Err(RecordError::TermMismatch {
                    surface: surface.to_string(),
                    term: span.term.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// A lexical context with the target term replaced by a placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SkipPattern {
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl SkipPattern {
    pub fn new<S: Into<String>>(left: impl IntoIterator<Item = S>, right: impl IntoIterator<Item = S>) -> Self {
        SkipPattern {
            left: left.into_iter().map(Into::into).collect(),
            right: right.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses the serialized `"left __ right"` form.
    pub fn parse(s: &str) -> Option<Self> {
        let tokens: Vec<&str> = s.split(' ').collect();
        let at = tokens.iter().position(|t| *t == PLACEHOLDER)?;
        let pattern = SkipPattern::new(tokens[..at].iter().copied(), tokens[at + 1..].iter().copied());
        if pattern.left.len() + pattern.right.len() == 0 {
            return None;
        }
        Some(pattern)
    }
}

impl fmt::Display for SkipPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in &self.left {
            write!(f, "{t} ")?;
        }
        f.write_str(PLACEHOLDER)?;
        for t in &self.right {
            write!(f, " {t}")?;
        }
        Ok(())
    }
}

/// Settings shared by filtering and extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionOptions {
    pub noun_tags: HashSet<String>,
    /// Lowercase context tokens before forming patterns.
    pub lowercase_context: bool,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        ExtractionOptions {
            noun_tags: DEFAULT_NOUN_TAGS.iter().map(|s| s.to_string()).collect(),
            lowercase_context: false,
        }
    }
}

/// Diagnostics accumulated while ingesting a corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines: u64,
    pub malformed_lines: u64,
    pub rejected_records: u64,
    pub removed_spans: u64,
    pub dropped_sentences: u64,
    pub kept_sentences: u64,
}

impl IngestStats {
    fn add(&mut self, o: &IngestStats) {
        self.lines += o.lines;
        self.malformed_lines += o.malformed_lines;
        self.rejected_records += o.rejected_records;
        self.removed_spans += o.removed_spans;
        self.dropped_sentences += o.dropped_sentences;
        self.kept_sentences += o.kept_sentences;
    }
}

fn has_noun_tag(rec: &SentenceRecord, span: &EntitySpan, tags: &HashSet<String>) -> bool {
    rec.pos[span.start..span.end].iter().any(|t| tags.contains(t))
}

/// Keeps only entity spans carrying a noun tag. Returns `None` when the
/// record is malformed or no span survives; the reason is tallied in `stats`.
pub fn filter_record(
    mut rec: SentenceRecord,
    tags: &HashSet<String>,
    stats: &mut IngestStats,
) -> Option<SentenceRecord> {
    if rec.validate().is_err() {
        stats.rejected_records += 1;
        return None;
    }
    let before = rec.entities.len();
    let entities = std::mem::take(&mut rec.entities);
    rec.entities = entities.into_iter().filter(|s| has_noun_tag(&rec, s, tags)).collect();
    stats.removed_spans += (before - rec.entities.len()) as u64;
    if rec.entities.is_empty() {
        stats.dropped_sentences += 1;
        None
    } else {
        stats.kept_sentences += 1;
        Some(rec)
    }
}

/// Streaming noun-occurrence filter; see [`filter_occurrences`].
pub struct FilterOccurrences<'a, I> {
    inner: I,
    tags: &'a HashSet<String>,
    stats: IngestStats,
}

impl<I> FilterOccurrences<'_, I> {
    pub fn stats(&self) -> IngestStats {
        self.stats
    }
}

impl<I: Iterator<Item = SentenceRecord>> Iterator for FilterOccurrences<'_, I> {
    type Item = SentenceRecord;

    fn next(&mut self) -> Option<SentenceRecord> {
        for rec in self.inner.by_ref() {
            self.stats.lines += 1;
            if let Some(kept) = filter_record(rec, self.tags, &mut self.stats) {
                return Some(kept);
            }
        }
        None
    }
}

pub fn filter_occurrences<I>(sentences: I, tags: &HashSet<String>) -> FilterOccurrences<'_, I::IntoIter>
where
    I: IntoIterator<Item = SentenceRecord>,
{
    FilterOccurrences {
        inner: sentences.into_iter(),
        tags,
        stats: IngestStats::default(),
    }
}

/// Calls `emit` with the serialized form of every skip-pattern of `span`.
/// Shapes that would cross a sentence boundary are skipped.
fn for_each_pattern(tokens: &[String], span: &EntitySpan, lowercase: bool, buf: &mut String, mut emit: impl FnMut(&str)) {
    for &(left, right) in &PATTERN_SHAPES {
        if left > span.start || span.end + right > tokens.len() {
            continue;
        }
        buf.clear();
        for t in &tokens[span.start - left..span.start] {
            push_token(buf, t, lowercase);
            buf.push(' ');
        }
        buf.push_str(PLACEHOLDER);
        for t in &tokens[span.end..span.end + right] {
            buf.push(' ');
            push_token(buf, t, lowercase);
        }
        emit(buf);
    }
}

fn push_token(buf: &mut String, t: &str, lowercase: bool) {
    if lowercase {
        buf.extend(t.chars().flat_map(char::to_lowercase));
    } else {
        buf.push_str(t);
    }
}

/// The skip-patterns of one entity occurrence, verbatim context tokens.
pub fn extract_skip_patterns(sentence: &SentenceRecord, occurrence: &EntitySpan) -> Vec<SkipPattern> {
    let mut out = Vec::with_capacity(PATTERN_SHAPES.len());
    for &(left, right) in &PATTERN_SHAPES {
        if left > occurrence.start || occurrence.end + right > sentence.tokens.len() {
            continue;
        }
        out.push(SkipPattern::new(
            sentence.tokens[occurrence.start - left..occurrence.start].iter().cloned(),
            sentence.tokens[occurrence.end..occurrence.end + right].iter().cloned(),
        ));
    }
    out
}

/// Mergeable partial count table. Terms and patterns are interned in
/// first-seen order.
#[derive(Debug, Default, Clone)]
pub struct FeatureCounter {
    lowercase: bool,
    terms: Vec<TermId>,
    term_ids: FxHashMap<TermId, u32>,
    patterns: Vec<Box<str>>,
    pattern_ids: FxHashMap<Box<str>, u32>,
    counts: FxHashMap<(u32, u32), u32>,
    buf: String,
}

impl FeatureCounter {
    pub fn new(lowercase_context: bool) -> Self {
        FeatureCounter {
            lowercase: lowercase_context,
            ..Default::default()
        }
    }

    fn intern_term(&mut self, term: &TermId) -> u32 {
        if let Some(&id) = self.term_ids.get(term) {
            return id;
        }
        let id = self.terms.len() as u32;
        self.terms.push(term.clone());
        self.term_ids.insert(term.clone(), id);
        id
    }

    fn intern_pattern(patterns: &mut Vec<Box<str>>, ids: &mut FxHashMap<Box<str>, u32>, p: &str) -> u32 {
        if let Some(&id) = ids.get(p) {
            return id;
        }
        let id = patterns.len() as u32;
        patterns.push(p.into());
        ids.insert(p.into(), id);
        id
    }

    /// Counts every occurrence of an already-filtered record.
    pub fn add_sentence(&mut self, rec: &SentenceRecord) {
        let mut buf = std::mem::take(&mut self.buf);
        for span in &rec.entities {
            let term = self.intern_term(&span.term);
            let (patterns, ids, counts) = (&mut self.patterns, &mut self.pattern_ids, &mut self.counts);
            for_each_pattern(&rec.tokens, span, self.lowercase, &mut buf, |p| {
                let pid = Self::intern_pattern(patterns, ids, p);
                *counts.entry((term, pid)).or_insert(0) += 1;
            });
        }
        self.buf = buf;
    }

    /// Appends `other`, which must cover the part of the stream after `self`.
    pub fn merge(mut self, other: FeatureCounter) -> FeatureCounter {
        if self.terms.is_empty() && self.patterns.is_empty() {
            return FeatureCounter { buf: self.buf, ..other };
        }
        let term_map: Vec<u32> = other.terms.iter().map(|t| self.intern_term(t)).collect();
        let pattern_map: Vec<u32> = other
            .patterns
            .iter()
            .map(|p| Self::intern_pattern(&mut self.patterns, &mut self.pattern_ids, p))
            .collect();
        self.counts.reserve(other.counts.len());
        for ((t, p), c) in other.counts {
            *self.counts.entry((term_map[t as usize], pattern_map[p as usize])).or_insert(0) += c;
        }
        self
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Sorted `(term, pattern, count)` triples, for order-independent comparison.
    pub fn sorted_counts(&self) -> Vec<(&str, &str, u32)> {
        let mut v: Vec<_> = self
            .counts
            .iter()
            .map(|(&(t, p), &c)| (self.terms[t as usize].as_str(), &*self.patterns[p as usize], c))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn finish(self) -> FeatureStore {
        let triples = self.counts.into_iter().map(|((t, p), c)| (t, p, c));
        FeatureStore::from_parts(self.terms, self.patterns, triples)
    }
}

/// Interned skip-pattern handle within one [`FeatureStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PatternId(pub u32);

/// Position of a term in the candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermIndex(pub u32);

/// One nonzero cell of the term × pattern table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureEntry {
    pub pattern: PatternId,
    pub count: u32,
    pub weight: f64,
}

/// `max(0, ln(1+x) * (ln |V| - ln total))`: the salience of one
/// (entity, feature) association given the feature's total mass.
pub fn association_weight(x: f64, total: f64, vocab_size: usize) -> f64 {
    if x <= 0.0 || total <= 0.0 || vocab_size == 0 {
        return 0.0;
    }
    let w = (1.0 + x).ln() * ((vocab_size as f64).ln() - total.ln());
    w.max(0.0)
}

/// Immutable term × skip-pattern co-occurrence table with precomputed
/// weights.
#[derive(Debug, Clone, Default)]
pub struct FeatureStore {
    terms: Vec<TermId>,
    term_index: FxHashMap<TermId, u32>,
    patterns: Vec<Box<str>>,
    pattern_index: FxHashMap<Box<str>, u32>,
    rows: Vec<Vec<FeatureEntry>>,
    totals: Vec<u64>,
    postings: Vec<Vec<TermIndex>>,
}

impl FeatureStore {
    /// Builds a store from interned terms, serialized patterns and
    /// `(term, pattern, count)` triples; zero counts are dropped and repeated
    /// cells are summed.
    pub fn from_parts(
        terms: Vec<TermId>,
        patterns: Vec<Box<str>>,
        triples: impl IntoIterator<Item = (u32, u32, u32)>,
    ) -> FeatureStore {
        let mut rows: Vec<Vec<(u32, u32)>> = vec![Vec::new(); terms.len()];
        for (t, p, c) in triples {
            if c > 0 {
                rows[t as usize].push((p, c));
            }
        }
        let mut totals = vec![0u64; patterns.len()];
        let mut postings = vec![Vec::new(); patterns.len()];
        for (t, row) in rows.iter_mut().enumerate() {
            row.sort_unstable();
            row.dedup_by(|b, a| {
                if a.0 == b.0 {
                    a.1 += b.1;
                    true
                } else {
                    false
                }
            });
            for &(p, c) in row.iter() {
                totals[p as usize] += c as u64;
                postings[p as usize].push(TermIndex(t as u32));
            }
        }
        let vocab = terms.len();
        let rows = rows
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|(p, c)| FeatureEntry {
                        pattern: PatternId(p),
                        count: c,
                        weight: association_weight(c as f64, totals[p as usize] as f64, vocab),
                    })
                    .collect()
            })
            .collect();
        let term_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let pattern_index = patterns.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();
        FeatureStore {
            terms,
            term_index,
            patterns,
            pattern_index,
            rows,
            totals,
            postings,
        }
    }

    /// |V|, the number of candidate terms.
    pub fn vocab_size(&self) -> usize {
        self.terms.len()
    }

    /// Candidate terms in first-seen order.
    pub fn candidate_terms(&self) -> &[TermId] {
        &self.terms
    }

    pub fn index_of(&self, term: &str) -> Option<TermIndex> {
        self.term_index.get(term).map(|&i| TermIndex(i))
    }

    pub fn term(&self, idx: TermIndex) -> &TermId {
        &self.terms[idx.0 as usize]
    }

    pub fn num_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn pattern(&self, id: PatternId) -> &str {
        &self.patterns[id.0 as usize]
    }

    pub fn pattern_id(&self, serialized: &str) -> Option<PatternId> {
        self.pattern_index.get(serialized).map(|&i| PatternId(i))
    }

    /// Nonzero features of a term, sorted by pattern id.
    pub fn row(&self, idx: TermIndex) -> &[FeatureEntry] {
        &self.rows[idx.0 as usize]
    }

    fn entry(&self, idx: TermIndex, p: PatternId) -> Option<&FeatureEntry> {
        let row = self.row(idx);
        row.binary_search_by_key(&p, |e| e.pattern).ok().map(|i| &row[i])
    }

    /// Raw count `X[e, sk]`.
    pub fn count(&self, idx: TermIndex, p: PatternId) -> u32 {
        self.entry(idx, p).map_or(0, |e| e.count)
    }

    /// Weight `f[e, sk]`.
    pub fn weight(&self, idx: TermIndex, p: PatternId) -> f64 {
        self.entry(idx, p).map_or(0.0, |e| e.weight)
    }

    /// `Σ_e X[e, sk]`.
    pub fn total(&self, p: PatternId) -> u64 {
        self.totals[p.0 as usize]
    }

    /// Terms with a nonzero count for `p`, ascending.
    pub fn terms_with_pattern(&self, p: PatternId) -> &[TermIndex] {
        &self.postings[p.0 as usize]
    }

    /// Weight of a (term, pattern) pair by name; 0 when either is unknown.
    pub fn skip_weight(&self, term: &str, sk: &SkipPattern) -> f64 {
        match (self.index_of(term), self.pattern_id(&sk.to_string())) {
            (Some(t), Some(p)) => self.weight(t, p),
            _ => 0.0,
        }
    }

    /// All `(term, pattern, count)` cells in row order.
    pub fn cells(&self) -> impl Iterator<Item = (TermIndex, PatternId, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(t, row)| row.iter().map(move |e| (TermIndex(t as u32), e.pattern, e.count)))
    }

    pub fn patterns(&self) -> &[Box<str>] {
        &self.patterns
    }
}

/// Single-threaded build over an already-filtered stream.
pub fn build_feature_store<'a, I>(sentences: I, lowercase_context: bool) -> FeatureStore
where
    I: IntoIterator<Item = &'a SentenceRecord>,
{
    let mut counter = FeatureCounter::new(lowercase_context);
    for s in sentences {
        counter.add_sentence(s);
    }
    counter.finish()
}

/// Chunk-parallel counting; the result equals the sequential count.
pub fn count_parallel(sentences: &[SentenceRecord], lowercase_context: bool, chunk: usize) -> FeatureCounter {
    sentences
        .par_chunks(chunk.max(1))
        .map(|c| {
            let mut counter = FeatureCounter::new(lowercase_context);
            c.iter().for_each(|s| counter.add_sentence(s));
            counter
        })
        .reduce(|| FeatureCounter::new(lowercase_context), FeatureCounter::merge)
}

fn ingest_lines(lines: &[String], opts: &ExtractionOptions) -> (FeatureCounter, IngestStats) {
    lines
        .par_iter()
        .fold(
            || (FeatureCounter::new(opts.lowercase_context), IngestStats::default()),
            |(mut counter, mut stats), line| {
                stats.lines += 1;
                match serde_json::from_str::<SentenceRecord>(line) {
                    Ok(rec) => {
                        if let Some(rec) = filter_record(rec, &opts.noun_tags, &mut stats) {
                            counter.add_sentence(&rec);
                        }
                    }
                    Err(_) => stats.malformed_lines += 1,
                }
                (counter, stats)
            },
        )
        .reduce(
            || (FeatureCounter::new(opts.lowercase_context), IngestStats::default()),
            |(a, mut sa), (b, sb)| {
                sa.add(&sb);
                (a.merge(b), sa)
            },
        )
}

/// Reads JSONL from `reader`, filtering and counting in parallel chunks.
/// Malformed lines are counted and skipped; blank lines are ignored.
pub fn ingest_reader<R: Read>(reader: R, opts: &ExtractionOptions) -> std::io::Result<(FeatureStore, IngestStats)> {
    let mut counter = FeatureCounter::new(opts.lowercase_context);
    let mut stats = IngestStats::default();
    let mut chunk = Vec::with_capacity(LINE_CHUNK);
    let mut lines = BufReader::new(reader).lines();
    loop {
        chunk.clear();
        for line in lines.by_ref() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            chunk.push(line);
            if chunk.len() == LINE_CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            break;
        }
        let (c, s) = ingest_lines(&chunk, opts);
        counter = counter.merge(c);
        stats.add(&s);
    }
    Ok((counter.finish(), stats))
}

pub fn ingest_file(path: &Path, opts: &ExtractionOptions) -> Result<(FeatureStore, IngestStats), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let f = File::open(path).map_err(io_err)?;
    ingest_reader(f, opts).map_err(io_err)
}
