//! Condensing a set of relation-embedding chains into one predicted
//! relation embedding:
//!
//! ```text
//! φ(r_ax, r_xb) = GeLU(A · (r_ax ⊕ r_xb) + b_comp)      // composition, R^m
//! s_ab          = W_dec · Σ_x φ(r_ax, r_xb) + b_dec      // sum-pool, decode to R^d
//! ```
//!
//! Training minimises `-Σ cos(s_ab, r_ab)` with Adam. Parameters live in
//! `f64`; checkpoints store them as `f32`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::Concept;
use crate::concept_graph::ChainBuilder;
use crate::embedding_store::binary_io::{read_file, read_header, write_f32s, write_header, BinaryReader};
use crate::embedding_store::cosine_f64;
use crate::error::{Error, Result};
use crate::informativeness::Classifier;

pub const COND_MAGIC: &[u8; 4] = b"COND";

/// Below this many multiply-adds a matrix-vector product stays on one thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// A 2-hop chain `a → x → b` with the embeddings of its two legs.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain<'a> {
    pub x: Concept,
    pub r_ax: &'a [f32],
    pub r_xb: &'a [f32],
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GeLU, `x · Φ(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondenserModel {
    d: usize,
    m: usize,
    /// `m × 2d`, row-major.
    pub a: Vec<f64>,
    pub b_comp: Vec<f64>,
    /// `d × m`, row-major.
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
}

fn row_dot(row: &[f64], x1: &[f32], x2: &[f32]) -> f64 {
    let (left, right) = row.split_at(x1.len());
    left.iter().zip(x1).map(|(w, &x)| w * x as f64).sum::<f64>()
        + right.iter().zip(x2).map(|(w, &x)| w * x as f64).sum::<f64>()
}

impl CondenserModel {
    pub fn zeros(d: usize, m: usize) -> Self {
        assert!(d > 0 && m > 0, "dimensions must be positive");
        Self {
            d,
            m,
            a: vec![0.0; m * 2 * d],
            b_comp: vec![0.0; m],
            w_dec: vec![0.0; d * m],
            b_dec: vec![0.0; d],
        }
    }

    /// Uniform in `±1/√fan_in` per tensor, seeded.
    pub fn init(d: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Self::zeros(d, m);
        let comp = 1.0 / ((2 * d) as f64).sqrt();
        let dec = 1.0 / (m as f64).sqrt();
        for (tensor, bound) in [
            (&mut model.a, comp),
            (&mut model.b_comp, comp),
            (&mut model.w_dec, dec),
            (&mut model.b_dec, dec),
        ] {
            tensor.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        model
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub(crate) fn tensors(&self) -> [&Vec<f64>; 4] {
        [&self.a, &self.b_comp, &self.w_dec, &self.b_dec]
    }

    pub(crate) fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.a, &mut self.b_comp, &mut self.w_dec, &mut self.b_dec]
    }

    fn check(&self, r1: &[f32], r2: &[f32]) -> Result<()> {
        for r in [r1, r2] {
            if r.len() != self.d {
                return Err(Error::DimMismatch {
                    expected: self.d,
                    got: r.len(),
                });
            }
        }
        Ok(())
    }

    /// `A · (r1 ⊕ r2) + b_comp`.
    fn pre_activation(&self, r1: &[f32], r2: &[f32]) -> Vec<f64> {
        let width = 2 * self.d;
        let mut out = self.b_comp.clone();
        if self.m * width >= PAR_THRESHOLD {
            out.par_iter_mut()
                .zip(self.a.par_chunks_exact(width))
                .for_each(|(o, row)| *o += row_dot(row, r1, r2));
        } else {
            out.iter_mut()
                .zip(self.a.chunks_exact(width))
                .for_each(|(o, row)| *o += row_dot(row, r1, r2));
        }
        out
    }

    /// `φ(r1, r2)`, the latent composition of one chain.
    pub fn compose(&self, r1: &[f32], r2: &[f32]) -> Result<Vec<f64>> {
        self.check(r1, r2)?;
        let mut h = self.pre_activation(r1, r2);
        h.iter_mut().for_each(|v| *v = gelu(*v));
        Ok(h)
    }

    /// The linear decoder `ψ(h) = W_dec · h + b_dec`.
    pub fn decode(&self, h: &[f64]) -> Vec<f64> {
        assert_eq!(h.len(), self.m);
        let mut out = self.b_dec.clone();
        let body = |(o, row): (&mut f64, &[f64])| {
            *o += row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
        };
        if self.m * self.d >= PAR_THRESHOLD {
            out.par_iter_mut().zip(self.w_dec.par_chunks_exact(self.m)).for_each(body);
        } else {
            out.iter_mut().zip(self.w_dec.chunks_exact(self.m)).for_each(body);
        }
        out
    }

    /// Sum of chain compositions in sorted-intermediate order.
    pub fn pooled(&self, chains: &[Chain<'_>]) -> Result<Vec<f64>> {
        if chains.is_empty() {
            return Err(Error::InvalidInput("cannot condense an empty chain set".into()));
        }
        let mut order: Vec<&Chain<'_>> = chains.iter().collect();
        order.sort_by(|p, q| p.x.cmp(&q.x));
        let mut h = vec![0.0; self.m];
        for c in order {
            for (acc, v) in h.iter_mut().zip(self.compose(c.r_ax, c.r_xb)?) {
                *acc += v;
            }
        }
        Ok(h)
    }

    /// `s_ab = ψ(Σ φ(r_ax, r_xb))`.
    pub fn condense(&self, chains: &[Chain<'_>]) -> Result<Vec<f64>> {
        Ok(self.decode(&self.pooled(chains)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_header(w, COND_MAGIC, self.d)?;
        w.write_u32::<LittleEndian>(self.m as u32)?;
        for t in self.tensors() {
            let narrowed: Vec<f32> = t.iter().map(|&v| v as f32).collect();
            write_f32s(w, &narrowed)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let buf = read_file(path)?;
        Self::from_binary(path, &buf)
    }

    pub(crate) fn from_binary(path: &Path, buf: &[u8]) -> Result<Self> {
        let mut r = BinaryReader::new(path, buf);
        let d = read_header(&mut r, COND_MAGIC)?;
        let m = r.u32()? as usize;
        if m == 0 {
            return Err(r.err("latent dimension must be positive"));
        }
        let mut model = Self::zeros(d, m);
        let mut scratch = Vec::new();
        for t in model.tensors_mut() {
            scratch.clear();
            r.f32s(t.len(), &mut scratch)?;
            if scratch.iter().any(|v| !v.is_finite()) {
                return Err(r.err("non-finite parameter"));
            }
            t.iter_mut().zip(&scratch).for_each(|(p, &v)| *p = v as f64);
        }
        r.finish()?;
        Ok(model)
    }
}

/// A training example: the chains of one pair and its target embedding.
#[derive(Debug, Clone)]
pub struct Example<'a> {
    pub a: Concept,
    pub b: Concept,
    pub chains: Vec<Chain<'a>>,
    pub target: &'a [f32],
}

/// `-cos(s, r)` and its gradient with respect to `s`.
fn neg_cos_grad(s: &[f64], r: &[f64]) -> (f64, Vec<f64>) {
    let ns = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nr = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if ns == 0.0 || nr == 0.0 {
        return (0.0, vec![0.0; s.len()]);
    }
    let cos = s.iter().zip(r).map(|(x, y)| x * y).sum::<f64>() / (ns * nr);
    let grad = s
        .iter()
        .zip(r)
        .map(|(&si, &ri)| -(ri / (ns * nr) - cos * si / (ns * ns)))
        .collect();
    (-cos, grad)
}

/// Loss `-Σ cos(s_ab, r_ab)` over `examples` and its analytic gradient,
/// returned in the same layout as the model.
pub fn loss_and_gradient(model: &CondenserModel, examples: &[Example<'_>]) -> Result<(f64, CondenserModel)> {
    let (d, m) = (model.d, model.m);
    let width = 2 * d;
    let mut grad = CondenserModel::zeros(d, m);
    let mut loss = 0.0;
    for ex in examples {
        let mut order: Vec<&Chain<'_>> = ex.chains.iter().collect();
        order.sort_by(|p, q| p.x.cmp(&q.x));
        let mut pre = Vec::with_capacity(order.len());
        let mut h = vec![0.0; m];
        for c in &order {
            model.check(c.r_ax, c.r_xb)?;
            let z = model.pre_activation(c.r_ax, c.r_xb);
            for (acc, &v) in h.iter_mut().zip(&z) {
                *acc += gelu(v);
            }
            pre.push(z);
        }
        let s = model.decode(&h);
        let target: Vec<f64> = ex.target.iter().map(|&v| v as f64).collect();
        let (l, g_s) = neg_cos_grad(&s, &target);
        loss += l;

        // decoder
        for (i, &gi) in g_s.iter().enumerate() {
            grad.b_dec[i] += gi;
            let row = &mut grad.w_dec[i * m..(i + 1) * m];
            row.iter_mut().zip(&h).for_each(|(g, &hj)| *g += gi * hj);
        }
        let mut g_h = vec![0.0; m];
        for (i, &gi) in g_s.iter().enumerate() {
            let row = &model.w_dec[i * m..(i + 1) * m];
            g_h.iter_mut().zip(row).for_each(|(g, &w)| *g += gi * w);
        }

        // composition
        for (c, z) in order.iter().zip(&pre) {
            let g_pre: Vec<f64> = z.iter().zip(&g_h).map(|(&zj, &gj)| gj * gelu_derivative(zj)).collect();
            grad.b_comp.iter_mut().zip(&g_pre).for_each(|(g, &v)| *g += v);
            let update = |(row, &gj): (&mut [f64], &f64)| {
                let (left, right) = row.split_at_mut(d);
                left.iter_mut().zip(c.r_ax).for_each(|(g, &x)| *g += gj * x as f64);
                right.iter_mut().zip(c.r_xb).for_each(|(g, &x)| *g += gj * x as f64);
            };
            if m * width >= PAR_THRESHOLD {
                grad.a.par_chunks_exact_mut(width).zip(g_pre.par_iter()).for_each(update);
            } else {
                grad.a.chunks_exact_mut(width).zip(g_pre.iter()).for_each(update);
            }
        }
    }
    Ok((loss, grad))
}

/// Adam with bias correction over all four parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(model: &CondenserModel, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, model: &mut CondenserModel, grad: &CondenserModel, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        for (((p, g), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            p.par_iter_mut()
                .zip(g.par_iter())
                .zip(m.par_iter_mut())
                .zip(v.par_iter_mut())
                .with_min_len(4096)
                .for_each(|(((p, &g), m), v)| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Pairs are retained only when `inf(r_ab)` exceeds this.
    pub inf_threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 8192,
            lr: 0.0025,
            epochs: 10,
            batch_size: 256,
            seed: 0,
            inf_threshold: 0.75,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// Defaults with the 81,920-wide latent space.
    pub fn large_latent() -> Self {
        Self {
            latent_dim: 81_920,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate must be non-negative, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.inf_threshold) {
            return Err(Error::InvalidInput(format!(
                "informativeness threshold must lie in [0, 1], got {}",
                self.inf_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidInput("validation fraction must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.latent_dim == 0 {
            return Err(Error::InvalidInput("batch size and latent dimension must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean `-cos` over training batches during the epoch.
    pub train_loss: f64,
    /// Mean `-cos` on the validation split after the epoch.
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetentionStats {
    pub candidates: usize,
    pub missing_embedding: usize,
    pub below_threshold: usize,
    pub no_chains: usize,
    pub retained: usize,
    pub train: usize,
    pub validation: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedCondenser {
    pub model: CondenserModel,
    pub log: Vec<EpochLog>,
    pub stats: RetentionStats,
    pub config: TrainConfig,
}

/// JSON sidecar written next to a `COND` checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub d: usize,
    pub m: usize,
    pub config: TrainConfig,
    pub stats: RetentionStats,
    pub log: Vec<EpochLog>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl TrainedCondenser {
    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            d: self.model.d,
            m: self.model.m,
            config: self.config,
            stats: self.stats.clone(),
            log: self.log.clone(),
        }
    }

    /// Writes the checkpoint and its `<path>.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.model.save(path)?;
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }
}

/// Mean `-cos(s_ab, r_ab)` over examples.
pub fn mean_loss(model: &CondenserModel, examples: &[Example<'_>]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let losses: Result<Vec<f64>> = examples
        .iter()
        .map(|ex| {
            let s = model.condense(&ex.chains)?;
            let r: Vec<f64> = ex.target.iter().map(|&v| v as f64).collect();
            Ok(-cosine_f64(&s, &r))
        })
        .collect();
    Ok(losses?.iter().sum::<f64>() / examples.len() as f64)
}

/// Keeps the pairs that have a stored embedding, informativeness above the
/// threshold and at least one chain.
pub fn retain_examples<'a>(
    pairs: &[(Concept, Concept)],
    chains: &ChainBuilder<'a>,
    clf: &Classifier,
    threshold: f64,
) -> Result<(Vec<Example<'a>>, RetentionStats)> {
    let store = chains.store;
    let mut stats = RetentionStats {
        candidates: pairs.len(),
        ..Default::default()
    };
    let mut out = Vec::new();
    for (a, b) in pairs {
        let Some(target) = store.lookup(a.as_str(), b.as_str()) else {
            stats.missing_embedding += 1;
            continue;
        };
        if clf.inf(target)? <= threshold {
            stats.below_threshold += 1;
            continue;
        }
        let ch = chains.chains(a, b);
        if ch.is_empty() {
            stats.no_chains += 1;
            continue;
        }
        out.push(Example {
            a: a.clone(),
            b: b.clone(),
            chains: ch,
            target,
        });
    }
    stats.retained = out.len();
    Ok((out, stats))
}

/// Fits a condenser on the retained pairs. The last `validation_fraction`
/// of the pairs after a seeded shuffle is held out; each epoch reshuffles
/// the training part.
pub fn train_condenser(
    pairs: &[(Concept, Concept)],
    chains: &ChainBuilder<'_>,
    clf: &Classifier,
    cfg: &TrainConfig,
) -> Result<TrainedCondenser> {
    cfg.validate()?;
    let (mut examples, mut stats) = retain_examples(pairs, chains, clf, cfg.inf_threshold)?;
    if examples.is_empty() {
        return Err(Error::InvalidInput("no training pairs retained".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    examples.shuffle(&mut rng);
    let n_val = (examples.len() as f64 * cfg.validation_fraction).floor() as usize;
    let validation = examples.split_off(examples.len() - n_val);
    let mut train = examples;
    stats.train = train.len();
    stats.validation = validation.len();

    let d = chains.store.dim();
    let mut model = CondenserModel::init(d, cfg.latent_dim, cfg.seed.wrapping_add(1));
    let mut adam = Adam::new(&model, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in train.chunks(cfg.batch_size) {
            let (loss, mut grad) = loss_and_gradient(&model, batch)?;
            let scale = 1.0 / batch.len() as f64;
            for t in grad.tensors_mut() {
                t.iter_mut().for_each(|g| *g *= scale);
            }
            adam.step(&mut model, &grad, cfg.lr);
            total += loss;
        }
        let entry = EpochLog {
            epoch,
            train_loss: total / train.len() as f64,
            validation_loss: if validation.is_empty() {
                None
            } else {
                Some(mean_loss(&model, &validation)?)
            },
        };
        log::info!(
            "condenser epoch {}: train {:.5} validation {:?}",
            epoch,
            entry.train_loss,
            entry.validation_loss
        );
        log.push(entry);
    }
    Ok(TrainedCondenser {
        model,
        log,
        stats,
        config: *cfg,
    })
}
