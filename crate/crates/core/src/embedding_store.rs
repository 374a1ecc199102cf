//! Word-vector tables and pair-keyed relation-embedding stores.
//!
//! Both kinds are immutable once loaded. Vectors are held as `f32` (the
//! on-disk precision) and every similarity is accumulated in `f64`.

pub(crate) mod binary_io;
mod relations;
mod words;

pub use relations::{RelationStore, RELC_MAGIC};
pub use words::{merged_neighbors, LoadStats, VectorFormat, WordVectorTable, WVEC_MAGIC};

pub(crate) use binary_io::{read_header, write_header, BinaryReader};

pub const FORMAT_VERSION: u32 = 1;

/// Cosine similarity on raw vectors, computed in double precision.
///
/// Returns 0.0 when either vector has zero norm.
pub fn cosine(u: &[f32], v: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in u.iter().zip(v) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

/// [`cosine`] over `f64` slices.
pub fn cosine_f64(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let (mut dot, mut nu, mut nv) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in u.iter().zip(v) {
        dot += x * y;
        nu += x * x;
        nv += y * y;
    }
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

pub(crate) fn validate_components(values: &[f32]) -> std::result::Result<(), &'static str> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err("non-finite component");
    }
    if values.iter().all(|&x| x == 0.0) {
        return Err("zero vector");
    }
    Ok(())
}
