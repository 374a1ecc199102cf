//! Binary artifact fixtures and the corrupted variants `export_check` must
//! reject. Offsets are computed from the documented layouts, not from the
//! library's readers.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relchain::condenser::CondenserModel;
use relchain::embedding_store::{RelationStore, WordVectorTable};
use relchain::informativeness::Classifier;

use super::{concept, random_vec};

pub const DIM: usize = 8;

pub struct Fixtures {
    pub words: WordVectorTable,
    pub relations: RelationStore,
    pub classifier: Classifier,
    pub condenser: CondenserModel,
}

impl Fixtures {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut words = WordVectorTable::new(DIM);
        for w in ["apple", "banana", "ice_cream", "zebra", "car"] {
            words.insert(concept(w), &random_vec(&mut rng, DIM)).unwrap();
        }
        let mut relations = RelationStore::new(DIM);
        for (a, b) in [("apple", "banana"), ("car", "zebra"), ("ice_cream", "apple")] {
            relations.insert(concept(a), concept(b), &random_vec(&mut rng, DIM)).unwrap();
        }
        let mut classifier = Classifier::zeros(DIM);
        classifier.weights = random_vec(&mut rng, DIM).into_iter().map(f64::from).collect();
        classifier.bias = 0.3;
        // Parameters stored as f32 so that the checkpoint round-trip is exact.
        let mut condenser = CondenserModel::init(DIM, 6, seed);
        for t in [&mut condenser.a, &mut condenser.b_comp, &mut condenser.w_dec, &mut condenser.b_dec] {
            t.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        Self {
            words,
            relations,
            classifier,
            condenser,
        }
    }

    /// Writes the four artifacts into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Vec<(&'static str, PathBuf)> {
        let paths = [
            ("WVEC", dir.join("words.wvec")),
            ("RELC", dir.join("pairs.relc")),
            ("INFC", dir.join("clf.infc")),
            ("COND", dir.join("model.cond")),
        ];
        self.words.write_binary(&paths[0].1).unwrap();
        self.relations.write_binary(&paths[1].1).unwrap();
        self.classifier.save(&paths[2].1).unwrap();
        self.condenser.save(&paths[3].1).unwrap();
        paths.into()
    }
}

fn le_u16(bytes: &[u8], at: usize) -> usize {
    u16::from_le_bytes([bytes[at], bytes[at + 1]]) as usize
}

/// Byte offset and width of the first numeric payload value.
fn first_value(kind: &str, bytes: &[u8]) -> (usize, usize) {
    match kind {
        "WVEC" => (20 + 2 + le_u16(bytes, 20), 4),
        "RELC" => {
            let after_a = 20 + 2 + le_u16(bytes, 20);
            (after_a + 2 + le_u16(bytes, after_a), 4)
        }
        "INFC" => (12, 8),
        "COND" => (16, 4),
        _ => unreachable!(),
    }
}

/// The five corruptions: bad magic, bad version, truncation, trailing
/// bytes, and a NaN (or, for vector files, an all-zero vector) payload.
pub fn corrupted_variants(kind: &str, bytes: &[u8]) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = Vec::new();

    let mut v = bytes.to_vec();
    v[..4].copy_from_slice(b"JUNK");
    out.push(("bad magic", v));

    let mut v = bytes.to_vec();
    v[4..8].copy_from_slice(&99u32.to_le_bytes());
    out.push(("bad version", v));

    out.push(("truncated", bytes[..bytes.len() - 3].to_vec()));

    let mut v = bytes.to_vec();
    v.push(0);
    out.push(("trailing bytes", v));

    let (at, width) = first_value(kind, bytes);
    let mut v = bytes.to_vec();
    match kind {
        "WVEC" | "RELC" => {
            v[at..at + 4 * DIM].fill(0);
            out.push(("zero vector", v));
        }
        _ => {
            let nan = if width == 8 { f64::NAN.to_le_bytes().to_vec() } else { f32::NAN.to_le_bytes().to_vec() };
            v[at..at + width].copy_from_slice(&nan);
            out.push(("NaN value", v));
        }
    }
    out
}
