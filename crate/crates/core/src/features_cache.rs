//! Binary cache of raw skip-pattern counts, so repeated runs skip the corpus
//! scan. Weights are recomputed on load.
//!
//! Layout (all integers little-endian):
//!
//! | field          | encoding                                         |
//! |----------------|--------------------------------------------------|
//! | magic          | 8 bytes, `TXGFEAT\0`                             |
//! | version        | u32, currently 1                                 |
//! | fingerprint    | u32 length + UTF-8 bytes (source checksum)       |
//! | terms          | u32 count, then per term u32 length + UTF-8      |
//! | patterns       | u32 count, then per pattern u32 length + UTF-8   |
//! | cells          | u64 count, then per cell u32 term, u32 pattern, u32 count |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::corpus::FeatureStore;
use crate::TermId;

pub const MAGIC: &[u8; 8] = b"TXGFEAT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O: {0}")]
    Io(#[from] io::Error),
    #[error("not a features cache (bad magic)")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt cache: {0}")]
    Corrupt(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheHeader {
    pub version: u32,
    pub fingerprint: String,
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CacheError> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CacheError::Corrupt("invalid UTF-8"))
}

pub fn write_cache<W: Write>(w: &mut W, store: &FeatureStore, fingerprint: &str) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_str(w, fingerprint)?;
    w.write_all(&(store.vocab_size() as u32).to_le_bytes())?;
    for t in store.candidate_terms() {
        write_str(w, t)?;
    }
    w.write_all(&(store.num_patterns() as u32).to_le_bytes())?;
    for p in store.patterns() {
        write_str(w, p)?;
    }
    let cells: Vec<_> = store.cells().collect();
    w.write_all(&(cells.len() as u64).to_le_bytes())?;
    for (t, p, c) in cells {
        w.write_all(&t.0.to_le_bytes())?;
        w.write_all(&p.0.to_le_bytes())?;
        w.write_all(&c.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<CacheHeader, CacheError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    Ok(CacheHeader {
        version,
        fingerprint: read_str(r)?,
    })
}

pub fn read_cache<R: Read>(r: &mut R) -> Result<(CacheHeader, FeatureStore), CacheError> {
    let header = read_header(r)?;
    let n_terms = read_u32(r)? as usize;
    let terms = (0..n_terms).map(|_| read_str(r).map(TermId::from)).collect::<Result<Vec<_>, _>>()?;
    let n_patterns = read_u32(r)? as usize;
    let patterns = (0..n_patterns)
        .map(|_| read_str(r).map(String::into_boxed_str))
        .collect::<Result<Vec<_>, _>>()?;
    let n_cells = read_u64(r)?;
    let mut triples = Vec::with_capacity(n_cells.min(1 << 24) as usize);
    for _ in 0..n_cells {
        let (t, p, c) = (read_u32(r)?, read_u32(r)?, read_u32(r)?);
        if t as usize >= n_terms || p as usize >= n_patterns {
            return Err(CacheError::Corrupt("cell index out of range"));
        }
        triples.push((t, p, c));
    }
    Ok((header, FeatureStore::from_parts(terms, patterns, triples)))
}

pub fn save(path: &Path, store: &FeatureStore, fingerprint: &str) -> Result<(), CacheError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cache(&mut w, store, fingerprint)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(CacheHeader, FeatureStore), CacheError> {
    read_cache(&mut BufReader::new(File::open(path)?))
}

pub fn load_header(path: &Path) -> Result<CacheHeader, CacheError> {
    read_header(&mut BufReader::new(File::open(path)?))
}
