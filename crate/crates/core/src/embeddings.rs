//! Dense term embeddings in word2vec text format.
//!
//! The first line is `<count> <dim>`; each following line is a term id and
//! `dim` floats separated by whitespace.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::TermId;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("failed to read embeddings {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no embedding for term {0:?}")]
    Missing(String),
    #[error("invalid vectors: {0}")]
    InvalidInput(&'static str),
}

/// Cosine similarity of two nonzero vectors of equal length.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::InvalidInput("length mismatch"));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::InvalidInput("zero-norm vector"));
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    index: FxHashMap<TermId, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            ..Default::default()
        }
    }

    /// Inserts or replaces a vector. Rejects wrong length, non-finite entries
    /// and zero vectors.
    pub fn insert(&mut self, term: TermId, vector: &[f64]) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::InvalidInput("dimension mismatch"));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::InvalidInput("non-finite entry"));
        }
        if vector.iter().all(|&x| x == 0.0) {
            return Err(EmbeddingError::InvalidInput("zero-norm vector"));
        }
        match self.index.get(&term) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(term, self.data.len() / self.dim.max(1));
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, EmbeddingError> {
        let mut lines = BufReader::new(reader).lines();
        let io = |source| EmbeddingError::Io {
            path: "<reader>".into(),
            source,
        };
        let header = lines
            .next()
            .ok_or(EmbeddingError::Parse {
                line: 1,
                msg: "missing header".into(),
            })?
            .map_err(io)?;
        let mut parts = header.split_whitespace().map(str::parse::<usize>);
        let (count, dim) = match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(c)), Some(Ok(d)), None) if d > 0 => (c, d),
            _ => {
                return Err(EmbeddingError::Parse {
                    line: 1,
                    msg: format!("expected \"<count> <dim>\", got {header:?}"),
                })
            }
        };
        let mut store = EmbeddingStore::new(dim);
        store.data.reserve(count * dim);
        let mut vector = Vec::with_capacity(dim);
        let mut read = 0;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let term = fields.next().unwrap_or_default();
            vector.clear();
            for f in fields {
                vector.push(f.parse::<f64>().map_err(|_| EmbeddingError::Parse {
                    line: line_no,
                    msg: format!("bad float {f:?}"),
                })?);
            }
            if vector.len() != dim {
                return Err(EmbeddingError::Parse {
                    line: line_no,
                    msg: format!("expected {dim} values for {term:?}, found {}", vector.len()),
                });
            }
            store.insert(TermId::from(term), &vector).map_err(|e| EmbeddingError::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            read += 1;
        }
        if read != count {
            log::warn!("embedding header declares {count} vectors, read {read}");
        }
        Ok(store)
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let f = File::open(path).map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(f)
    }

    /// Serializes in the same text format `from_reader` accepts, terms sorted.
    pub fn to_text(&self) -> String {
        let mut terms: Vec<(&TermId, usize)> = self.index.iter().map(|(t, &i)| (t, i)).collect();
        terms.sort();
        let mut out = format!("{} {}\n", terms.len(), self.dim);
        for (t, i) in terms {
            out.push_str(t);
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn get(&self, term: &str) -> Option<&[f64]> {
        self.index.get(term).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    fn require(&self, term: &str) -> Result<&[f64], EmbeddingError> {
        self.get(term).ok_or_else(|| EmbeddingError::Missing(term.to_string()))
    }

    /// `v(parent) - v(child)`.
    pub fn offset(&self, parent: &str, child: &str) -> Result<Vec<f64>, EmbeddingError> {
        let p = self.require(parent)?;
        let c = self.require(child)?;
        Ok(p.iter().zip(c).map(|(a, b)| a - b).collect())
    }

    /// Cosine of two stored terms' vectors.
    pub fn similarity(&self, a: &str, b: &str) -> Result<f64, EmbeddingError> {
        cosine(self.require(a)?, self.require(b)?)
    }
}
