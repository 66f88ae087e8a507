//! Nearest-neighbor WSD over precomputed embeddings.
//!
//! Embedding files start with a `N d` header followed by `N` lines of
//! `id v1 ... vd`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::lexkb::SynsetId;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    vectors: IndexMap<String, Vec<T>>,
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            vectors: IndexMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[T]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Adds a vector. Replacing an existing id is an error, as is a vector of
    /// the wrong length.
    pub fn insert(&mut self, id: impl Into<String>, v: Vec<T>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        let id = id.into();
        if self.vectors.contains_key(&id) {
            return Err(Error::InvalidConfig(format!("duplicate embedding id {id}")));
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let Some((_, header)) = lines.next() else {
            return Err(Error::malformed(1, "missing \"N d\" header"));
        };
        let header = header.map_err(|e| Error::malformed(1, e))?;
        let nums: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::malformed(1, format!("bad header {header:?}")))?;
        let [count, dim] = nums[..] else {
            return Err(Error::malformed(1, format!("bad header {header:?}")));
        };
        let mut store = Self::new(dim);
        for (n, line) in lines {
            let lineno = n + 1;
            let line = line.map_err(|e| Error::malformed(lineno, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let id = fields.next().expect("non-blank line");
            let v: Vec<T> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .and_then(T::from_f64)
                        .ok_or_else(|| Error::malformed(lineno, format!("bad component {f:?}")))
                })
                .collect::<Result<_>>()?;
            if v.len() != dim {
                return Err(Error::malformed(
                    lineno,
                    format!("{id} has {} components, header says {dim}", v.len()),
                ));
            }
            if store.vectors.insert(id.to_string(), v).is_some() {
                return Err(Error::malformed(lineno, format!("duplicate id {id}")));
            }
        }
        if store.len() != count {
            return Err(Error::malformed(
                1,
                format!("header announces {count} vectors, found {}", store.len()),
            ));
        }
        Ok(store)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(f))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (id, v) in &self.vectors {
            write!(out, "{id}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(f);
        self.write(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

pub fn cosine<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let dot: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let nu: T = u.iter().map(|&a| a * a).sum::<T>().sqrt();
    let nv: T = v.iter().map(|&b| b * b).sum::<T>().sqrt();
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).max(-T::one()).min(T::one()))
}

/// Picks the candidate whose synset vector is most cosine-similar to
/// `token_vec`. A token vector of half the store dimension is concatenated
/// with itself first. Candidates without a vector are skipped; ties go to
/// the smallest id.
pub fn nn_disambiguate<'a, T: Scalar>(
    token_vec: &[T],
    candidates: impl IntoIterator<Item = &'a SynsetId>,
    synsets: &EmbeddingStore<T>,
) -> Result<Option<(SynsetId, T)>> {
    let doubled;
    let query: &[T] = if synsets.dim == token_vec.len() {
        token_vec
    } else if synsets.dim == 2 * token_vec.len() {
        doubled = [token_vec, token_vec].concat();
        &doubled
    } else {
        return Err(Error::DimMismatch {
            expected: synsets.dim,
            found: token_vec.len(),
        });
    };
    let mut sorted: Vec<&SynsetId> = candidates.into_iter().collect();
    sorted.sort();
    sorted.dedup();
    // similarities this close are rounding noise and count as ties
    let slack = T::epsilon() * T::lit(16.0);
    let mut best: Option<(&SynsetId, T)> = None;
    for c in sorted {
        let Some(v) = synsets.get(c.as_str()) else {
            continue;
        };
        let sim = cosine(query, v)?;
        if best.is_none_or(|(_, b)| sim > b + slack) {
            best = Some((c, sim));
        }
    }
    Ok(best.map(|(c, s)| (c.clone(), s)))
}
