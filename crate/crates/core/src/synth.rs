//! Synthetic worlds with planted relational structure.
//!
//! Every pair is built from a pair of relation types `(k1, k2)`: each chain
//! `a → x → b` carries the type vectors `t_k1` and `t_k2` on its legs, and
//! the pair's own embedding is the noiseless composite
//! `normalize(P·t_k1 + Q·t_k2)` for fixed random matrices `P`, `Q`.
//! Question candidates can be made "indirect", meaning their own embedding
//! is withheld so that only their chains describe them.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::concept::Concept;
use crate::concept_graph::ConceptGraph;
use crate::embedding_store::RelationStore;
use crate::informativeness::Classifier;
use crate::solver::AnalogyQuestion;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub dim: usize,
    pub types: usize,
    pub train_pairs: usize,
    pub questions: usize,
    pub candidates: usize,
    pub max_chains: usize,
    /// Probability that a question's gold candidate is indirect.
    pub indirect_fraction: f64,
    /// Standard deviation of Gaussian noise added to chain legs.
    pub leg_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            types: 4,
            train_pairs: 500,
            questions: 200,
            candidates: 5,
            max_chains: 3,
            indirect_fraction: 0.6,
            leg_noise: 0.02,
            seed: 0,
        }
    }
}

pub struct PlantedWorld {
    pub graph: ConceptGraph,
    /// Chain legs plus the embeddings of every direct pair.
    pub store: RelationStore,
    /// Like `store`, but also holding the embeddings of indirect pairs.
    pub full_store: RelationStore,
    /// Scores every embedding as highly informative.
    pub classifier: Classifier,
    pub train_pairs: Vec<(Concept, Concept)>,
    pub questions: Vec<AnalogyQuestion>,
    pub indirect: BTreeSet<(Concept, Concept)>,
}

struct Builder {
    cfg: PlantedConfig,
    rng: ChaCha8Rng,
    type_vectors: Vec<Vec<f64>>,
    left: Vec<f64>,
    right: Vec<f64>,
    graph: ConceptGraph,
    store: RelationStore,
    full_store: RelationStore,
    next_id: usize,
}

fn concept(s: String) -> Concept {
    Concept::new(&s).expect("generated names are valid concepts")
}

impl Builder {
    fn gaussian(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    fn composite(&self, k1: usize, k2: usize) -> Vec<f32> {
        let d = self.cfg.dim;
        let mut out = vec![0.0f64; d];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..d {
                *o += self.left[i * d + j] * self.type_vectors[k1][j] + self.right[i * d + j] * self.type_vectors[k2][j];
            }
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        out.iter().map(|v| (v / norm) as f32).collect()
    }

    fn leg(&mut self, k: usize) -> Vec<f32> {
        let noise = self.gaussian(self.cfg.dim);
        self.type_vectors[k]
            .iter()
            .zip(noise)
            .map(|(t, n)| (t + self.cfg.leg_noise * n) as f32)
            .collect()
    }

    /// Creates fresh words `a`, `b` and 1..=max_chains intermediates.
    fn pair(&mut self, k1: usize, k2: usize, direct: bool) -> (Concept, Concept) {
        let id = self.next_id;
        self.next_id += 1;
        let a = concept(format!("p{id}_a"));
        let b = concept(format!("p{id}_b"));
        let chains = self.rng.gen_range(1..=self.cfg.max_chains);
        for c in 0..chains {
            let x = concept(format!("p{id}_x{c}"));
            let (l, r) = (self.leg(k1), self.leg(k2));
            for store in [&mut self.store, &mut self.full_store] {
                store.insert(a.clone(), x.clone(), &l).unwrap();
                store.insert(x.clone(), b.clone(), &r).unwrap();
            }
            self.graph.add_kg_edge(a.clone(), x.clone(), &format!("/r/T{k1}"));
            self.graph.add_kg_edge(x.clone(), b.clone(), &format!("/r/T{k2}"));
        }
        let r_ab = self.composite(k1, k2);
        self.full_store.insert(a.clone(), b.clone(), &r_ab).unwrap();
        if direct {
            self.store.insert(a.clone(), b.clone(), &r_ab).unwrap();
        }
        (a, b)
    }
}

impl PlantedWorld {
    pub fn generate(cfg: PlantedConfig) -> Self {
        assert!(cfg.types * cfg.types >= cfg.candidates, "not enough type combinations");
        let d = cfg.dim;
        let mut b = Builder {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            type_vectors: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            graph: ConceptGraph::new(),
            store: RelationStore::new(d),
            full_store: RelationStore::new(d),
            next_id: 0,
        };
        for _ in 0..cfg.types {
            let v = b.gaussian(d);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            b.type_vectors.push(v.iter().map(|x| x / norm).collect());
        }
        let scale = 1.0 / (d as f64).sqrt();
        b.left = b.gaussian(d * d).into_iter().map(|v| v * scale).collect();
        b.right = b.gaussian(d * d).into_iter().map(|v| v * scale).collect();

        let combos: Vec<(usize, usize)> = (0..cfg.types)
            .flat_map(|i| (0..cfg.types).map(move |j| (i, j)))
            .collect();
        let train_pairs = (0..cfg.train_pairs)
            .map(|_| {
                let (k1, k2) = *combos.choose(&mut b.rng).unwrap();
                b.pair(k1, k2, true)
            })
            .collect();

        let mut indirect = BTreeSet::new();
        let mut questions = Vec::with_capacity(cfg.questions);
        for qi in 0..cfg.questions {
            let picked: Vec<(usize, usize)> = combos.choose_multiple(&mut b.rng, cfg.candidates).copied().collect();
            let gold = b.rng.gen_range(0..cfg.candidates);
            let (qk1, qk2) = picked[gold];
            let query = b.pair(qk1, qk2, true);
            let gold_indirect = b.rng.gen_bool(cfg.indirect_fraction);
            let candidates = picked
                .iter()
                .enumerate()
                .map(|(i, &(k1, k2))| {
                    let direct = !(i == gold && gold_indirect);
                    let p = b.pair(k1, k2, direct);
                    if !direct {
                        indirect.insert(p.clone());
                    }
                    p
                })
                .collect();
            questions.push(AnalogyQuestion::new(format!("planted{qi}"), query, candidates, gold).unwrap());
        }
        PlantedWorld {
            graph: b.graph,
            store: b.store,
            full_store: b.full_store,
            classifier: Classifier {
                weights: vec![0.0; d],
                bias: 10.0,
            },
            train_pairs,
            questions,
            indirect,
        }
    }
}
