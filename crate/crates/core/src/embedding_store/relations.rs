use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};

use super::binary_io::{read_file, write_f32s, write_token};
use super::{read_header, validate_components, write_header, BinaryReader};
use crate::concept::Concept;
use crate::error::{Error, Result};

pub const RELC_MAGIC: &[u8; 4] = b"RELC";

/// Ordered word pair → relation embedding. `(a, b)` and `(b, a)` are
/// distinct keys.
#[derive(Debug, Clone)]
pub struct RelationStore {
    dim: usize,
    pairs: Vec<(Concept, Concept)>,
    index: HashMap<Concept, HashMap<Concept, usize>>,
    data: Vec<f32>,
}

impl RelationStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            pairs: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs in insertion order.
    pub fn pairs(&self) -> &[(Concept, Concept)] {
        &self.pairs
    }

    /// Inserts or replaces the embedding for `(a, b)`.
    pub fn insert(&mut self, a: Concept, b: Concept, embedding: &[f32]) -> Result<()> {
        if embedding.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: embedding.len(),
            });
        }
        validate_components(embedding)
            .map_err(|m| Error::InvalidInput(format!("({a}, {b}): {m}")))?;
        if let Some(&i) = self.index.get(a.as_str()).and_then(|m| m.get(b.as_str())) {
            self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(embedding);
            return Ok(());
        }
        let i = self.pairs.len();
        self.index.entry(a.clone()).or_default().insert(b.clone(), i);
        self.pairs.push((a, b));
        self.data.extend_from_slice(embedding);
        Ok(())
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.lookup(a, b).is_some()
    }

    /// Embedding for the ordered pair, or `None`.
    pub fn lookup(&self, a: &str, b: &str) -> Option<&[f32]> {
        let &i = self.index.get(a)?.get(b)?;
        Some(&self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn get(&self, a: &str, b: &str) -> Result<&[f32]> {
        self.lookup(a, b)
            .ok_or_else(|| Error::MissingPair(a.to_string(), b.to_string()))
    }

    /// A copy of the store with every embedding multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|x| *x *= factor);
        out
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let buf = read_file(path)?;
        Self::from_binary(path, &buf)
    }

    pub(crate) fn from_binary(path: &Path, buf: &[u8]) -> Result<Self> {
        let mut r = BinaryReader::new(path, buf);
        let dim = read_header(&mut r, RELC_MAGIC)?;
        let count = r.u64()?;
        let mut store = RelationStore::new(dim);
        let mut values = Vec::with_capacity(dim);
        for rec in 0..count {
            let a = r.token()?;
            let b = r.token()?;
            for t in [a, b] {
                if !Concept::is_normalized(t) {
                    return Err(r.err(format!("record {rec}: token {t:?} is not normalized")));
                }
            }
            if store.contains(a, b) {
                return Err(r.err(format!("record {rec}: duplicate pair ({a}, {b})")));
            }
            values.clear();
            r.f32s(dim, &mut values)?;
            if let Err(m) = validate_components(&values) {
                return Err(r.err(format!("record {rec} ({a}, {b}): {m}")));
            }
            store.insert(Concept::new(a)?, Concept::new(b)?, &values)?;
        }
        r.finish()?;
        Ok(store)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_binary_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_binary_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_header(w, RELC_MAGIC, self.dim)?;
        w.write_u64::<LittleEndian>(self.pairs.len() as u64)?;
        for (i, (a, b)) in self.pairs.iter().enumerate() {
            write_token(w, a.as_str())?;
            write_token(w, b.as_str())?;
            write_f32s(w, &self.data[i * self.dim..(i + 1) * self.dim])?;
        }
        Ok(())
    }
}
