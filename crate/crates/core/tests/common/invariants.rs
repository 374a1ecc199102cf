//! Randomized invariant checks. Each function draws `cases` independent
//! fixtures and returns the number of instances checked, or a description
//! of the first violation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relchain::concept_graph::{augment, intermediates, ConceptGraph, IntermediateOptions, Provenance};
use relchain::condenser::{Chain, CondenserModel};
use relchain::embedding_store::{RelationStore, WordVectorTable};
use relchain::informativeness::Classifier;
use relchain::solver::{comp, solve_cn_types, solve_direct, solve_hybrid, solve_relbert, ChainMethod, ChainSim};

use super::{concept, random_vec, RandomWorld, WorldParams};

pub type Outcome = Result<usize, String>;

fn random_classifier(rng: &mut ChaCha8Rng, d: usize) -> Classifier {
    let mut clf = Classifier::zeros(d);
    clf.weights = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
    clf.bias = rng.gen_range(-1.0..1.0);
    clf
}

fn small_world(rng: &mut ChaCha8Rng, questions: usize) -> RandomWorld {
    let params = WorldParams {
        dim: 8,
        questions,
        ..Default::default()
    };
    RandomWorld::generate(&params, rng.gen())
}

fn legs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<(String, Vec<f32>, Vec<f32>)> {
    (0..n)
        .map(|i| (format!("x{i}"), random_vec(rng, d), random_vec(rng, d)))
        .collect()
}

fn as_chains(legs: &[(String, Vec<f32>, Vec<f32>)]) -> Vec<Chain<'_>> {
    legs.iter()
        .map(|(x, l, r)| Chain {
            x: concept(x),
            r_ax: l,
            r_xb: r,
        })
        .collect()
}

pub fn condense_permutation_invariance(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let d = rng.gen_range(2..10);
        let model = CondenserModel::init(d, rng.gen_range(1..24), rng.gen());
        let n = rng.gen_range(1..10);
        let legs = legs(&mut rng, n, d);
        let chains = as_chains(&legs);
        let base = model.condense(&chains).map_err(|e| e.to_string())?;
        let mut shuffled = chains.clone();
        shuffled.shuffle(&mut rng);
        let again = model.condense(&shuffled).map_err(|e| e.to_string())?;
        if base.iter().zip(&again).any(|(p, q)| (p - q).abs() > 1e-9) {
            return Err(format!("case {case}: {base:?} vs {again:?}"));
        }
    }
    Ok(cases)
}

pub fn comp_monotone_under_chain_addition(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sims = [ChainSim::Sim1, ChainSim::Sim2, ChainSim::Sim3];
    for case in 0..cases {
        let d = rng.gen_range(2..10);
        let model = CondenserModel::init(d, 8, rng.gen());
        let nq = rng.gen_range(1..6);
        let query = legs(&mut rng, nq, d);
        let nc = rng.gen_range(0..6);
        let mut cand = legs(&mut rng, nc, d);
        let sim = sims[case % 3];
        let before = comp(&as_chains(&query), &as_chains(&cand), sim, Some(&model)).map_err(|e| e.to_string())?;
        let n_extra = rng.gen_range(1..4);
        let extra = legs(&mut rng, n_extra, d);
        cand.extend(extra.into_iter().map(|(x, l, r)| (format!("extra_{x}"), l, r)));
        let after = comp(&as_chains(&query), &as_chains(&cand), sim, Some(&model)).map_err(|e| e.to_string())?;
        // A chainless candidate scores 0, which a negative sum could exceed.
        if nc > 0 && after < before {
            return Err(format!("case {case} ({sim}): {before} -> {after}"));
        }
    }
    Ok(cases)
}

/// Random graph and table over a shared vocabulary.
fn random_graph_and_table(rng: &mut ChaCha8Rng) -> (Vec<String>, ConceptGraph, WordVectorTable) {
    let n = rng.gen_range(8..30);
    let words: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut graph = ConceptGraph::new();
    let edges = rng.gen_range(n..4 * n);
    for _ in 0..edges {
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if x != y {
            graph.add_kg_edge(concept(&words[x]), concept(&words[y]), "/r/RelatedTo");
        }
    }
    let mut table = WordVectorTable::new(4);
    for w in &words {
        table.insert(concept(w), &random_vec(rng, 4)).unwrap();
    }
    (words, graph, table)
}

fn uncapped(smoothing: bool) -> IntermediateOptions {
    IntermediateOptions {
        smoothing,
        cap: usize::MAX,
        ..Default::default()
    }
}

pub fn smoothing_superset(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let (words, mut graph, table) = random_graph_and_table(&mut rng);
        let a = concept(words.choose(&mut rng).unwrap());
        let b = concept(words.choose(&mut rng).unwrap());
        let off = intermediates(&a, &b, &graph, Some(&table), None, &uncapped(false)).intermediates;
        let on = intermediates(&a, &b, &graph, Some(&table), None, &uncapped(true)).intermediates;
        if let Some(x) = off.iter().find(|x| !on.contains(x)) {
            return Err(format!("case {case}: {x} lost by smoothing for ({a}, {b})"));
        }
        // Adding an edge never shrinks the uncapped set either.
        let (x, y) = (words.choose(&mut rng).unwrap(), words.choose(&mut rng).unwrap());
        if x != y {
            graph.add_kg_edge(concept(x), concept(y), "/r/Synonym");
        }
        let grown = intermediates(&a, &b, &graph, Some(&table), None, &uncapped(true)).intermediates;
        if let Some(x) = on.iter().find(|x| !grown.contains(x)) {
            return Err(format!("case {case}: {x} lost after adding an edge"));
        }
    }
    Ok(cases)
}

pub fn mlp_edges_strictly_above_threshold(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut checked, mut emitted) = (0, 0);
    for case in 0..cases {
        let (words, mut graph, table) = random_graph_and_table(&mut rng);
        let mut store = RelationStore::new(3);
        for a in &words {
            for b in &words {
                if a != b && rng.gen_bool(0.7) {
                    store.insert(concept(a), concept(b), &random_vec(&mut rng, 3)).unwrap();
                }
            }
        }
        let clf = random_classifier(&mut rng, 3);
        let theta = rng.gen_range(0.2..0.9);
        let vocab: Vec<_> = words.iter().map(|w| concept(w)).collect();
        augment(&mut graph, &vocab, &[&table], &store, &clf, rng.gen_range(1..8), theta).map_err(|e| e.to_string())?;
        if !graph.is_symmetric() {
            return Err(format!("case {case}: adjacency not symmetric after augmentation"));
        }
        for e in graph.edges().iter().filter(|e| e.provenance == Provenance::Mlp) {
            let r = store.get(e.head.as_str(), e.tail.as_str()).map_err(|e| e.to_string())?;
            let z = clf.bias + clf.weights.iter().zip(r).map(|(w, &x)| w * x as f64).sum::<f64>();
            let inf = 1.0 / (1.0 + (-z).exp());
            if inf <= theta {
                return Err(format!("case {case}: ({}, {}) has inf {inf} <= {theta}", e.head, e.tail));
            }
            emitted += 1;
        }
        checked += 1;
    }
    if emitted == 0 {
        return Err("no predicted edges were emitted".into());
    }
    Ok(checked)
}

pub fn hybrid_equals_relbert_above_tau(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut draws = 0;
    while checked < cases {
        draws += 1;
        if draws > 50 * cases {
            return Err(format!("only {checked} questions reached the threshold"));
        }
        let world = small_world(&mut rng, 4);
        let clf = random_classifier(&mut rng, world.dim);
        let tau = rng.gen_range(0.0..0.6);
        let builder = world.builder();
        for q in &world.questions {
            let relbert = solve_relbert(q, &world.store).map_err(|e| e.to_string())?;
            let Ok(conf) = relchain::solver::confidence_of(q, &relbert, &world.store, &clf) else {
                continue;
            };
            if conf < tau {
                continue;
            }
            let hybrid = solve_hybrid(q, tau, ChainMethod::Direct(ChainSim::Sim1), &builder, &clf, None)
                .map_err(|e| e.to_string())?;
            if hybrid.chosen != relbert.chosen {
                return Err(format!("question {}: hybrid {} vs relbert {}", q.id, hybrid.chosen, relbert.chosen));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

pub fn argmax_invariant_under_positive_scaling(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    for _ in 0..cases {
        let world = small_world(&mut rng, 2);
        let factor: f32 = 10f32.powf(rng.gen_range(-2.0..2.0));
        let scaled = world.store.scaled(factor);
        let (b1, b2) = (world.builder(), relchain::concept_graph::ChainBuilder::new(&world.graph, &scaled).with_options(world.builder().options));
        for q in &world.questions {
            let pairs = [
                (solve_relbert(q, &world.store), solve_relbert(q, &scaled)),
                (solve_direct(q, &b1, ChainSim::Sim1, None), solve_direct(q, &b2, ChainSim::Sim1, None)),
                (solve_direct(q, &b1, ChainSim::Sim3, None), solve_direct(q, &b2, ChainSim::Sim3, None)),
                (Ok(solve_cn_types(q, &world.graph)), Ok(solve_cn_types(q, &world.graph))),
            ];
            for (x, y) in pairs {
                let (x, y) = (x.map_err(|e| e.to_string())?, y.map_err(|e| e.to_string())?);
                if x.chosen != y.chosen {
                    return Err(format!("question {} ({}): {} vs {} at scale {factor}", q.id, x.method, x.chosen, y.chosen));
                }
            }
            checked += 1;
        }
    }
    Ok(checked)
}
