use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use rayon::prelude::*;

use super::binary_io::{read_file, write_f32s, write_token};
use super::{cosine, read_header, validate_components, write_header, BinaryReader};
use crate::concept::Concept;
use crate::error::{Error, Result};

pub const WVEC_MAGIC: &[u8; 4] = b"WVEC";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    /// GloVe-style whitespace-separated rows.
    Text,
    /// `WVEC` binary.
    Binary,
}

impl VectorFormat {
    /// Guesses the format from the file's first four bytes.
    pub fn sniff(path: &Path) -> Result<Self> {
        let mut magic = [0u8; 4];
        let n = File::open(path)
            .and_then(|mut f| std::io::Read::read(&mut f, &mut magic))
            .map_err(|e| Error::io(path, e))?;
        Ok(if n == 4 && &magic == WVEC_MAGIC {
            VectorFormat::Binary
        } else {
            VectorFormat::Text
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    pub duplicates: usize,
}

/// Vocabulary → static word vector.
#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    tokens: Vec<Concept>,
    index: HashMap<Concept, usize>,
    data: Vec<f32>,
    stats: LoadStats,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self {
            dim,
            tokens: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            stats: LoadStats::default(),
        }
    }

    /// Inserts a vector. Returns `Ok(false)` when the token is already present
    /// (first occurrence wins).
    pub fn insert(&mut self, token: Concept, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        validate_components(vector).map_err(|m| Error::InvalidInput(format!("{token}: {m}")))?;
        self.stats.rows += 1;
        if self.index.contains_key(&token) {
            self.stats.duplicates += 1;
            return Ok(false);
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
        Ok(true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn stats(&self) -> LoadStats {
        self.stats
    }

    pub fn contains(&self, w: &str) -> bool {
        self.index.contains_key(w)
    }

    pub fn get(&self, w: &str) -> Option<&[f32]> {
        self.index.get(w).map(|&i| self.row(i))
    }

    /// Tokens in insertion order.
    pub fn tokens(&self) -> &[Concept] {
        &self.tokens
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn load(path: &Path, format: VectorFormat) -> Result<Self> {
        match format {
            VectorFormat::Text => Self::load_text(path),
            VectorFormat::Binary => Self::load_binary(path),
        }
    }

    /// Reads a GloVe-style text file. A leading `count dim` header line (as
    /// written by word2vec) is skipped.
    pub fn load_text(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut table: Option<WordVectorTable> = None;
        let mut values = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let token = fields.next().unwrap();
            values.clear();
            for f in fields {
                let v: f32 = f
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, format!("bad component {f:?}")))?;
                values.push(v);
            }
            if lineno == 1 && values.len() == 1 && token.parse::<u64>().is_ok() {
                continue;
            }
            if values.is_empty() {
                return Err(Error::parse(path, lineno, "row has no components"));
            }
            let table = table.get_or_insert_with(|| WordVectorTable::new(values.len()));
            if values.len() != table.dim {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("expected {} components, found {}", table.dim, values.len()),
                ));
            }
            let concept = Concept::new(token).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            table
                .insert(concept, &values)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        let table = table.ok_or_else(|| Error::parse(path, 0, "no vectors in file"))?;
        if table.stats.duplicates > 0 {
            log::warn!(
                "{}: {} duplicate token(s) ignored (first occurrence kept)",
                path.display(),
                table.stats.duplicates
            );
        }
        Ok(table)
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let buf = read_file(path)?;
        Self::from_binary(path, &buf)
    }

    pub(crate) fn from_binary(path: &Path, buf: &[u8]) -> Result<Self> {
        let mut r = BinaryReader::new(path, buf);
        let dim = read_header(&mut r, WVEC_MAGIC)?;
        let count = r.u64()?;
        let mut table = WordVectorTable::new(dim);
        let mut values = Vec::with_capacity(dim);
        for rec in 0..count {
            let token = r.token()?;
            if !Concept::is_normalized(token) {
                return Err(r.err(format!("record {rec}: token {token:?} is not normalized")));
            }
            values.clear();
            r.f32s(dim, &mut values)?;
            if let Err(m) = validate_components(&values) {
                return Err(r.err(format!("record {rec} ({token}): {m}")));
            }
            if !table.insert(Concept::new(token)?, &values)? {
                return Err(r.err(format!("record {rec}: duplicate token {token:?}")));
            }
        }
        r.finish()?;
        Ok(table)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_binary_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_binary_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_header(w, WVEC_MAGIC, self.dim)?;
        w.write_u64::<LittleEndian>(self.tokens.len() as u64)?;
        for (i, token) in self.tokens.iter().enumerate() {
            write_token(w, token.as_str())?;
            write_f32s(w, self.row(i))?;
        }
        Ok(())
    }

    /// Exact cosine top-k over the whole vocabulary, excluding `w` itself.
    /// Ties are broken by lexicographic concept order.
    pub fn top_k_neighbors(&self, w: &str, k: usize) -> Result<Vec<(Concept, f64)>> {
        let &qi = self
            .index
            .get(w)
            .ok_or_else(|| Error::NotFound(w.to_string()))?;
        let query = self.row(qi);
        let mut scored: Vec<(usize, f64)> = (0..self.tokens.len())
            .into_par_iter()
            .filter(|&i| i != qi)
            .map(|i| (i, cosine(query, self.row(i))))
            .collect();
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.tokens[a.0].cmp(&self.tokens[b.0]))
        };
        let k = k.min(scored.len());
        if k == 0 {
            return Ok(Vec::new());
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(i, s)| (self.tokens[i].clone(), s))
            .collect())
    }
}

/// Union of `top_k_neighbors` over every table that contains `w`.
pub fn merged_neighbors(w: &str, k: usize, tables: &[&WordVectorTable]) -> Result<BTreeSet<Concept>> {
    let mut found = false;
    let mut out = BTreeSet::new();
    for table in tables.iter().filter(|t| t.contains(w)) {
        found = true;
        out.extend(table.top_k_neighbors(w, k)?.into_iter().map(|(c, _)| c));
    }
    if !found {
        return Err(Error::NotFound(w.to_string()));
    }
    Ok(out)
}
