//! Logistic-regression scoring of how informative a relation embedding is.
//!
//! The classifier maps a relation embedding `r` to `σ(w·r + bias)`, the
//! probability that `r` encodes a specific relationship rather than noise.
//! It is fit by full-batch gradient descent on the L2-regularized mean log
//! loss (bias unregularized), starting from all zeros.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::concept::Concept;
use crate::embedding_store::binary_io::{read_file, read_header, write_header, BinaryReader};
use crate::embedding_store::RelationStore;
use crate::error::{Error, Result};

pub const INFC_MAGIC: &[u8; 4] = b"INFC";

const MAX_REJECTIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub a: Concept,
    pub b: Concept,
    pub positive: bool,
}

impl LabeledPair {
    pub fn new(a: Concept, b: Concept, positive: bool) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidInput(format!("pair ({a}, {a}) has identical words")));
        }
        Ok(Self { a, b, positive })
    }
}

/// Reads `word_a<TAB>word_b<TAB>label` rows; `#` lines and blank lines are
/// skipped.
pub fn load_labeled_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, lineno, format!("expected 3 columns, found {}", cols.len())));
        }
        let positive = match cols[2].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(path, lineno, format!("label must be 0 or 1, got {other:?}"))),
        };
        let a = Concept::new(cols[0]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let b = Concept::new(cols[1]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        out.push(LabeledPair::new(a, b, positive).map_err(|e| Error::parse(path, lineno, e.to_string()))?);
    }
    Ok(out)
}

/// Builds one negative per positive by re-pairing each left word with the
/// right word of a different, uniformly drawn positive. Re-pairings that
/// recreate a positive pair (or a self pair) are rejected; a slot that fails
/// 100 times is skipped.
pub fn corrupt_negatives(positives: &[LabeledPair], seed: u64) -> Vec<LabeledPair> {
    let n = positives.len();
    if n < 2 {
        return Vec::new();
    }
    let known: HashSet<(&str, &str)> = positives
        .iter()
        .map(|p| (p.a.as_str(), p.b.as_str()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut skipped = 0usize;
    for (i, p) in positives.iter().enumerate() {
        let mut emitted = false;
        for _ in 0..MAX_REJECTIONS {
            let mut j = rng.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let b = &positives[j].b;
            if *b != p.a && !known.contains(&(p.a.as_str(), b.as_str())) {
                out.push(LabeledPair {
                    a: p.a.clone(),
                    b: b.clone(),
                    positive: false,
                });
                emitted = true;
                break;
            }
        }
        if !emitted {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("corrupt_negatives: skipped {skipped} slot(s) after {MAX_REJECTIONS} rejections");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 500,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-log σ(z)` without overflow.
fn softplus_neg(z: f64) -> f64 {
    (-z).max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Classifier {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, r: &[f32]) -> Result<f64> {
        if r.len() != self.weights.len() {
            return Err(Error::DimMismatch {
                expected: self.weights.len(),
                got: r.len(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(r)
            .map(|(&w, &x)| w * x as f64)
            .sum::<f64>()
            + self.bias)
    }

    /// Informativeness `σ(w·r + bias)`.
    pub fn inf(&self, r: &[f32]) -> Result<f64> {
        Ok(sigmoid(self.logit(r)?))
    }

    /// Informativeness of a stored pair, `None` when the pair is missing.
    pub fn inf_pair(&self, store: &RelationStore, a: &str, b: &str) -> Option<f64> {
        store.lookup(a, b).and_then(|r| self.inf(r).ok())
    }

    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.iter().map(|w| -w).collect(),
            bias: -self.bias,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_header(w, INFC_MAGIC, self.weights.len())?;
        w.write_f64::<LittleEndian>(self.bias)?;
        for &x in &self.weights {
            w.write_f64::<LittleEndian>(x)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = read_file(path)?;
        Self::from_binary(path, &buf)
    }

    pub(crate) fn from_binary(path: &Path, buf: &[u8]) -> Result<Self> {
        let mut r = BinaryReader::new(path, buf);
        let dim = read_header(&mut r, INFC_MAGIC)?;
        let bias = r.f64()?;
        let weights = r.f64s(dim)?;
        r.finish()?;
        if !bias.is_finite() || weights.iter().any(|x| !x.is_finite()) {
            return Err(Error::format(path, "non-finite classifier parameter"));
        }
        Ok(Self { weights, bias })
    }
}

/// Design matrix rows (as `f64`) with labels, in data order.
pub struct TrainingSet {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl TrainingSet {
    pub fn from_pairs(data: &[LabeledPair], store: &RelationStore) -> Result<Self> {
        let missing: Vec<String> = data
            .iter()
            .filter(|p| !store.contains(p.a.as_str(), p.b.as_str()))
            .map(|p| format!("({}, {})", p.a, p.b))
            .collect();
        if !missing.is_empty() {
            let sample = missing.iter().take(20).cloned().collect::<Vec<_>>().join(", ");
            return Err(Error::MissingPairs {
                count: missing.len(),
                sample,
            });
        }
        let features = data
            .iter()
            .map(|p| {
                store
                    .lookup(p.a.as_str(), p.b.as_str())
                    .unwrap()
                    .iter()
                    .map(|&x| x as f64)
                    .collect()
            })
            .collect();
        let labels = data.iter().map(|p| if p.positive { 1.0 } else { 0.0 }).collect();
        Ok(Self { features, labels })
    }
}

/// Mean log loss plus `l2/2 · |w|²`.
pub fn regularized_loss(clf: &Classifier, set: &TrainingSet, l2: f64) -> f64 {
    let n = set.labels.len() as f64;
    let data: f64 = set
        .features
        .iter()
        .zip(&set.labels)
        .map(|(x, &y)| {
            let z = dot(&clf.weights, x) + clf.bias;
            y * softplus_neg(z) + (1.0 - y) * softplus_neg(-z)
        })
        .sum();
    data / n + 0.5 * l2 * clf.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Analytic gradient of [`regularized_loss`] as `(d weights, d bias)`.
pub fn loss_gradient(clf: &Classifier, set: &TrainingSet, l2: f64) -> (Vec<f64>, f64) {
    let n = set.labels.len() as f64;
    let mut gw = vec![0.0; clf.weights.len()];
    let mut gb = 0.0;
    for (x, &y) in set.features.iter().zip(&set.labels) {
        let err = sigmoid(dot(&clf.weights, x) + clf.bias) - y;
        gb += err;
        for (g, &xi) in gw.iter_mut().zip(x) {
            *g += err * xi;
        }
    }
    for (g, &w) in gw.iter_mut().zip(&clf.weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub classifier: Classifier,
    /// Regularized loss after each epoch.
    pub loss_log: Vec<f64>,
}

pub fn train_classifier(
    data: &[LabeledPair],
    store: &RelationStore,
    cfg: &ClassifierConfig,
) -> Result<TrainedClassifier> {
    let positives = data.iter().filter(|p| p.positive).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::InvalidInput(
            "training data must contain both positive and negative pairs".into(),
        ));
    }
    let set = TrainingSet::from_pairs(data, store)?;
    let mut clf = Classifier::zeros(store.dim());
    let mut loss_log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (gw, gb) = loss_gradient(&clf, &set, cfg.l2);
        for (w, g) in clf.weights.iter_mut().zip(&gw) {
            *w -= cfg.lr * g;
        }
        clf.bias -= cfg.lr * gb;
        let loss = regularized_loss(&clf, &set, cfg.l2);
        log::debug!("train_classifier epoch {epoch}: loss {loss:.6}");
        loss_log.push(loss);
    }
    Ok(TrainedClassifier {
        classifier: clf,
        loss_log,
    })
}
