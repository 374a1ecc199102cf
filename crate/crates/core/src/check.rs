//! Validation of the binary artifacts (`WVEC`, `RELC`, `INFC`, `COND`).

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::condenser::{CondenserModel, COND_MAGIC};
use crate::embedding_store::binary_io::read_file;
use crate::embedding_store::{RelationStore, WordVectorTable, RELC_MAGIC, WVEC_MAGIC};
use crate::error::{Error, Result};
use crate::informativeness::{Classifier, INFC_MAGIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FileKind {
    WordVectors,
    Relations,
    Classifier,
    Condenser,
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileKind::WordVectors => "WVEC",
            FileKind::Relations => "RELC",
            FileKind::Classifier => "INFC",
            FileKind::Condenser => "COND",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub kind: FileKind,
    pub dim: usize,
    /// Records for vector files; latent width for a condenser.
    pub count: usize,
}

/// Fully parses a binary artifact, identified by its magic, and reports
/// its shape. Any structural defect is an error.
pub fn export_check(path: &Path) -> Result<CheckReport> {
    let buf = read_file(path)?;
    let magic: &[u8] = buf.get(..4).ok_or_else(|| Error::format(path, "file shorter than its magic"))?;
    if magic == WVEC_MAGIC {
        let t = WordVectorTable::from_binary(path, &buf)?;
        Ok(CheckReport {
            kind: FileKind::WordVectors,
            dim: t.dim(),
            count: t.len(),
        })
    } else if magic == RELC_MAGIC {
        let s = RelationStore::from_binary(path, &buf)?;
        Ok(CheckReport {
            kind: FileKind::Relations,
            dim: s.dim(),
            count: s.len(),
        })
    } else if magic == INFC_MAGIC {
        let c = Classifier::from_binary(path, &buf)?;
        Ok(CheckReport {
            kind: FileKind::Classifier,
            dim: c.dim(),
            count: 1,
        })
    } else if magic == COND_MAGIC {
        let m = CondenserModel::from_binary(path, &buf)?;
        Ok(CheckReport {
            kind: FileKind::Condenser,
            dim: m.d(),
            count: m.m(),
        })
    } else {
        Err(Error::format(
            path,
            format!("unknown magic {:?}", String::from_utf8_lossy(magic)),
        ))
    }
}
