//! Random fixtures and brute-force reference implementations shared by the
//! integration suites. Everything here recomputes results from the raw
//! fixture data and never calls into the solver code paths it checks.
#![allow(dead_code)]

pub mod formats;
pub mod gradcheck;
pub mod invariants;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relchain::concept_graph::{ChainBuilder, ConceptGraph, IntermediateOptions};
use relchain::condenser::{CondenserModel, TrainConfig};
use relchain::embedding_store::RelationStore;
use relchain::solver::AnalogyQuestion;
use relchain::Concept;

pub const TYPES: [&str; 3] = ["/r/IsA", "/r/PartOf", "/r/AtLocation"];

/// Training setup for the planted fixtures: 500 pairs make only two
/// batches at the default batch size, so batches are small here.
pub fn planted_train_config() -> TrainConfig {
    TrainConfig {
        latent_dim: 64,
        lr: 0.01,
        epochs: 10,
        batch_size: 8,
        seed: 7,
        ..Default::default()
    }
}

pub fn concept(s: &str) -> Concept {
    Concept::new(s).unwrap()
}

pub fn random_vec(rng: &mut impl Rng, d: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        if v.iter().any(|x| x.abs() > 1e-3) {
            return v;
        }
    }
}

/// Raw fixture: embeddings and typed undirected edges, plus the library
/// structures built from them.
pub struct RandomWorld {
    pub dim: usize,
    pub embeddings: HashMap<(String, String), Vec<f64>>,
    /// `(x, y, relation type)`, undirected.
    pub edges: Vec<(String, String, String)>,
    pub words: BTreeSet<String>,
    /// Unordered pair → relation types, indexed from `edges`.
    types_by_pair: HashMap<(String, String), BTreeSet<String>>,
    neighbor_sets: HashMap<String, BTreeSet<String>>,
    pub questions: Vec<AnalogyQuestion>,
    pub store: RelationStore,
    pub graph: ConceptGraph,
}

pub struct WorldParams {
    pub dim: usize,
    pub questions: usize,
    pub max_candidates: usize,
    pub max_chains: usize,
    pub missing_leg: f64,
    pub missing_pair: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            dim: 16,
            questions: 200,
            max_candidates: 6,
            max_chains: 8,
            missing_leg: 0.1,
            missing_pair: 0.1,
        }
    }
}

impl RandomWorld {
    pub fn generate(params: &WorldParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = params.dim;
        let mut embeddings = HashMap::new();
        let mut edges = Vec::new();
        let mut words = BTreeSet::new();
        let mut questions = Vec::new();
        let put = |emb: &mut HashMap<(String, String), Vec<f64>>, rng: &mut ChaCha8Rng, a: &str, b: &str| {
            let v = random_vec(rng, d);
            emb.insert((a.to_string(), b.to_string()), v.iter().map(|&x| x as f64).collect());
        };
        for qi in 0..params.questions {
            let pool: Vec<String> = (0..12).map(|i| format!("q{qi}_x{i}")).collect();
            let n_cand = rng.gen_range(2..=params.max_candidates);
            let mut pairs = Vec::new();
            for p in 0..=n_cand {
                let a = format!("q{qi}_p{p}_a");
                let b = format!("q{qi}_p{p}_b");
                // Query (p = 0) always has its own embedding.
                if p == 0 || !rng.gen_bool(params.missing_pair) {
                    put(&mut embeddings, &mut rng, &a, &b);
                }
                let n_chains = rng.gen_range(0..=params.max_chains);
                let mut chosen: Vec<&String> = pool.iter().collect();
                for i in 0..n_chains {
                    let j = rng.gen_range(i..chosen.len());
                    chosen.swap(i, j);
                }
                for x in &chosen[..n_chains] {
                    let t1 = TYPES[rng.gen_range(0..TYPES.len())];
                    let t2 = TYPES[rng.gen_range(0..TYPES.len())];
                    edges.push((a.clone(), x.to_string(), t1.to_string()));
                    edges.push((x.to_string(), b.clone(), t2.to_string()));
                    if rng.gen_bool(0.2) {
                        edges.push((a.clone(), x.to_string(), TYPES[rng.gen_range(0..TYPES.len())].to_string()));
                    }
                    if !rng.gen_bool(params.missing_leg) {
                        put(&mut embeddings, &mut rng, &a, x);
                    }
                    if !rng.gen_bool(params.missing_leg) {
                        put(&mut embeddings, &mut rng, x, &b);
                    }
                }
                words.insert(a.clone());
                words.insert(b.clone());
                pairs.push((concept(&a), concept(&b)));
            }
            words.extend(pool.iter().cloned());
            let query = pairs.remove(0);
            let gold = rng.gen_range(0..pairs.len());
            questions.push(AnalogyQuestion::new(format!("{qi}"), query, pairs, gold).unwrap());
        }
        let mut store = RelationStore::new(d);
        let mut keys: Vec<_> = embeddings.keys().cloned().collect();
        keys.sort();
        for (a, b) in keys {
            let v: Vec<f32> = embeddings[&(a.clone(), b.clone())].iter().map(|&x| x as f32).collect();
            store.insert(concept(&a), concept(&b), &v).unwrap();
        }
        let mut graph = ConceptGraph::new();
        for (x, y, t) in &edges {
            graph.add_kg_edge(concept(x), concept(y), t);
        }
        let mut types_by_pair: HashMap<(String, String), BTreeSet<String>> = HashMap::new();
        let mut neighbor_sets: HashMap<String, BTreeSet<String>> = HashMap::new();
        for (x, y, t) in &edges {
            types_by_pair.entry(unordered(x, y)).or_default().insert(t.clone());
            neighbor_sets.entry(x.clone()).or_default().insert(y.clone());
            neighbor_sets.entry(y.clone()).or_default().insert(x.clone());
        }
        Self {
            dim: d,
            embeddings,
            edges,
            words,
            types_by_pair,
            neighbor_sets,
            questions,
            store,
            graph,
        }
    }

    pub fn builder(&self) -> ChainBuilder<'_> {
        ChainBuilder::new(&self.graph, &self.store).with_options(IntermediateOptions {
            smoothing: false,
            cap: 1000,
            ..Default::default()
        })
    }

    fn adjacent(&self, x: &str, y: &str) -> bool {
        self.types_by_pair.contains_key(&unordered(x, y))
    }

    fn types(&self, x: &str, y: &str) -> BTreeSet<&str> {
        self.types_by_pair
            .get(&unordered(x, y))
            .map(|s| s.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Words adjacent to `a`; every 2-path from `a` passes through one.
    fn around(&self, a: &str) -> impl Iterator<Item = &String> {
        self.neighbor_sets.get(a).into_iter().flatten()
    }

    fn emb(&self, a: &str, b: &str) -> Option<&Vec<f64>> {
        self.embeddings.get(&(a.to_string(), b.to_string()))
    }

    /// All `(x, r_ax, r_xb)` over the whole vocabulary, both legs embedded.
    pub fn oracle_chains(&self, a: &str, b: &str) -> Vec<OracleChain> {
        self.around(a)
            .filter(|x| x.as_str() != a && x.as_str() != b)
            .filter(|x| self.adjacent(a, x) && self.adjacent(x, b))
            .filter_map(|x| {
                Some(OracleChain {
                    x: x.clone(),
                    left: self.emb(a, x)?.clone(),
                    right: self.emb(x, b)?.clone(),
                })
            })
            .collect()
    }

    pub fn oracle_relbert(&self, q: &AnalogyQuestion) -> (usize, Vec<f64>) {
        let r_q = self.emb(q.query.0.as_str(), q.query.1.as_str()).unwrap();
        let scores: Vec<f64> = q
            .candidates
            .iter()
            .map(|(x, y)| self.emb(x.as_str(), y.as_str()).map_or(f64::NEG_INFINITY, |r| ocos(r_q, r)))
            .collect();
        (first_max(&scores), scores)
    }

    pub fn oracle_direct(&self, q: &AnalogyQuestion, sim: OracleSim, model: Option<&OracleModel>) -> (usize, Vec<f64>, bool) {
        let query = self.oracle_chains(q.query.0.as_str(), q.query.1.as_str());
        if query.is_empty() {
            let (i, s) = self.oracle_relbert(q);
            return (i, s, true);
        }
        let scores: Vec<f64> = q
            .candidates
            .iter()
            .map(|(x, y)| oracle_comp(&query, &self.oracle_chains(x.as_str(), y.as_str()), sim, model))
            .collect();
        (first_max(&scores), scores, false)
    }

    pub fn oracle_condensed(&self, q: &AnalogyQuestion, model: &OracleModel) -> Option<(usize, Vec<f64>)> {
        let s = |a: &str, b: &str| -> Option<Vec<f64>> {
            let chains = self.oracle_chains(a, b);
            if chains.is_empty() {
                return self.emb(a, b).cloned();
            }
            Some(model.condense(&chains))
        };
        let s_q = s(q.query.0.as_str(), q.query.1.as_str())?;
        let scores: Vec<f64> = q
            .candidates
            .iter()
            .map(|(x, y)| s(x.as_str(), y.as_str()).map_or(f64::NEG_INFINITY, |v| ocos(&s_q, &v)))
            .collect();
        Some((first_max(&scores), scores))
    }

    pub fn oracle_cn_types(&self, q: &AnalogyQuestion) -> (usize, Vec<f64>) {
        let typed = |a: &str, b: &str| -> Vec<BTreeSet<(String, String)>> {
            self.around(a)
                .filter(|c| c.as_str() != a && c.as_str() != b)
                .filter(|c| self.adjacent(a, c) && self.adjacent(c, b))
                .map(|c| {
                    let mut paths = BTreeSet::new();
                    for t1 in self.types(a, c) {
                        for t2 in self.types(c, b) {
                            paths.insert((t1.to_string(), t2.to_string()));
                        }
                    }
                    paths
                })
                .collect()
        };
        let query = typed(q.query.0.as_str(), q.query.1.as_str());
        let scores: Vec<f64> = q
            .candidates
            .iter()
            .map(|(x, y)| {
                let cand = typed(x.as_str(), y.as_str());
                let mut total = 0.0;
                for qp in &query {
                    let mut best = 0.0f64;
                    for cp in &cand {
                        let hit = qp.iter().any(|p| cp.contains(p));
                        best = best.max(if hit { 1.0 } else { 0.0 });
                    }
                    total += best;
                }
                total
            })
            .collect();
        (first_max(&scores), scores)
    }

    /// Exhaustive argmax of sim1 over (c, z), ties to the smallest (c, z).
    pub fn oracle_explain(&self, q: &AnalogyQuestion, chosen: usize) -> Option<(String, String)> {
        let query = self.oracle_chains(q.query.0.as_str(), q.query.1.as_str());
        let (x, y) = &q.candidates[chosen];
        let cand = self.oracle_chains(x.as_str(), y.as_str());
        let mut all: BTreeMap<(String, String), f64> = BTreeMap::new();
        for qc in &query {
            for cc in &cand {
                all.insert((qc.x.clone(), cc.x.clone()), osim(qc, cc, OracleSim::Sim1, None));
            }
        }
        let best = all.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        all.into_iter().find(|(_, v)| *v == best).map(|(k, _)| k)
    }
}

#[derive(Debug, Clone)]
pub struct OracleChain {
    pub x: String,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleSim {
    Sim1,
    Sim2,
    Sim3,
}

fn unordered(x: &str, y: &str) -> (String, String) {
    if x <= y {
        (x.to_string(), y.to_string())
    } else {
        (y.to_string(), x.to_string())
    }
}

pub fn ocos(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu * nv)
    }
}

pub fn first_max(scores: &[f64]) -> usize {
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == best).unwrap_or(0)
}

pub fn osim(c1: &OracleChain, c2: &OracleChain, sim: OracleSim, model: Option<&OracleModel>) -> f64 {
    match sim {
        OracleSim::Sim1 => ocos(&c1.left, &c2.left).min(ocos(&c1.right, &c2.right)),
        OracleSim::Sim2 => {
            let m = model.unwrap();
            ocos(&m.condense(std::slice::from_ref(c1)), &m.condense(std::slice::from_ref(c2)))
        }
        OracleSim::Sim3 => {
            let s1: Vec<f64> = c1.left.iter().zip(&c1.right).map(|(a, b)| a + b).collect();
            let s2: Vec<f64> = c2.left.iter().zip(&c2.right).map(|(a, b)| a + b).collect();
            ocos(&s1, &s2)
        }
    }
}

/// Double loop over query and candidate chains.
pub fn oracle_comp(query: &[OracleChain], cand: &[OracleChain], sim: OracleSim, model: Option<&OracleModel>) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for qc in query {
        let mut best = f64::NEG_INFINITY;
        for cc in cand {
            best = best.max(osim(qc, cc, sim, model));
        }
        total += best;
    }
    total
}

/// Matrix-form reference for the condenser, with its own GeLU built on
/// `statrs`' error function.
pub struct OracleModel {
    pub d: usize,
    pub m: usize,
    pub a: Vec<Vec<f64>>,
    pub b_comp: Vec<f64>,
    pub w_dec: Vec<Vec<f64>>,
    pub b_dec: Vec<f64>,
}

pub fn ogelu(x: f64) -> f64 {
    x * 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

impl OracleModel {
    pub fn from_model(model: &CondenserModel) -> Self {
        let (d, m) = (model.d(), model.m());
        Self {
            d,
            m,
            a: model.a.chunks(2 * d).map(|r| r.to_vec()).collect(),
            b_comp: model.b_comp.clone(),
            w_dec: model.w_dec.chunks(m).map(|r| r.to_vec()).collect(),
            b_dec: model.b_dec.clone(),
        }
    }

    pub fn phi(&self, left: &[f64], right: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = left.iter().chain(right).cloned().collect();
        (0..self.m)
            .map(|i| ogelu(self.a[i].iter().zip(&x).map(|(w, v)| w * v).sum::<f64>() + self.b_comp[i]))
            .collect()
    }

    pub fn psi(&self, h: &[f64]) -> Vec<f64> {
        (0..self.d)
            .map(|i| self.w_dec[i].iter().zip(h).map(|(w, v)| w * v).sum::<f64>() + self.b_dec[i])
            .collect()
    }

    pub fn condense(&self, chains: &[OracleChain]) -> Vec<f64> {
        let mut h = vec![0.0; self.m];
        for c in chains {
            for (acc, v) in h.iter_mut().zip(self.phi(&c.left, &c.right)) {
                *acc += v;
            }
        }
        self.psi(&h)
    }
}

pub fn scores_match(got: &[f64], want: &[f64], tol: f64) -> bool {
    got.len() == want.len()
        && got.iter().zip(want).all(|(g, w)| {
            (g.is_infinite() && w.is_infinite() && g.signum() == w.signum()) || (g - w).abs() <= tol
        })
}
