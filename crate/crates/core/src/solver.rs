//! Multiple-choice analogy solving: direct relation-embedding comparison,
//! condensed chains, direct chain matching, the relation-type baseline,
//! confidence-based routing between them, and chain-level explanations.
//!
//! Every argmax breaks ties toward the lowest candidate index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::concept::Concept;
use crate::concept_graph::{ChainBuilder, ConceptGraph};
use crate::condenser::{Chain, CondenserModel};
use crate::embedding_store::{cosine, cosine_f64, RelationStore};
use crate::error::{Error, Result};
use crate::informativeness::Classifier;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuestion {
    pub id: String,
    pub query: (Concept, Concept),
    pub candidates: Vec<(Concept, Concept)>,
    pub gold: usize,
}

impl AnalogyQuestion {
    pub fn new(
        id: impl Into<String>,
        query: (Concept, Concept),
        candidates: Vec<(Concept, Concept)>,
        gold: usize,
    ) -> Result<Self> {
        if candidates.len() < 2 {
            return Err(Error::InvalidInput("a question needs at least two candidates".into()));
        }
        if gold >= candidates.len() {
            return Err(Error::InvalidInput(format!(
                "answer index {gold} out of range for {} candidates",
                candidates.len()
            )));
        }
        for (i, c) in candidates.iter().enumerate() {
            if candidates[..i].contains(c) {
                return Err(Error::InvalidInput(format!("duplicate candidate ({}, {})", c.0, c.1)));
            }
        }
        Ok(Self {
            id: id.into(),
            query,
            candidates,
            gold,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainSim {
    Sim1,
    Sim2,
    Sim3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChainMethod {
    Condensed,
    Direct(ChainSim),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Relbert,
    Condensed,
    Direct(ChainSim),
    CnTypes,
    Hybrid { tau: f64, chain: ChainMethod },
}

impl fmt::Display for ChainSim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChainSim::Sim1 => "sim1",
            ChainSim::Sim2 => "sim2",
            ChainSim::Sim3 => "sim3",
        })
    }
}

impl fmt::Display for ChainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainMethod::Condensed => f.write_str("condensed"),
            ChainMethod::Direct(s) => write!(f, "direct-{s}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Relbert => f.write_str("relbert"),
            Method::Condensed => f.write_str("condensed"),
            Method::Direct(s) => write!(f, "direct-{s}"),
            Method::CnTypes => f.write_str("cn-types"),
            Method::Hybrid { tau, chain } => write!(f, "hybrid-{chain}<{tau}"),
        }
    }
}

impl FromStr for ChainMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "condensed" => Ok(ChainMethod::Condensed),
            "direct" | "direct-sim1" => Ok(ChainMethod::Direct(ChainSim::Sim1)),
            "direct-sim2" => Ok(ChainMethod::Direct(ChainSim::Sim2)),
            "direct-sim3" => Ok(ChainMethod::Direct(ChainSim::Sim3)),
            _ => Err(Error::InvalidInput(format!("unknown chain method {s:?}"))),
        }
    }
}

impl Method {
    /// Parses a method name. `hybrid-<chain>` takes its threshold from
    /// `tau`; `hybrid-<chain><0.5` embeds it.
    pub fn parse(s: &str, tau: f64) -> Result<Self> {
        match s {
            "relbert" => return Ok(Method::Relbert),
            "cn-types" => return Ok(Method::CnTypes),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("hybrid-") {
            let (chain, tau) = match rest.split_once('<') {
                Some((c, t)) => (
                    c,
                    t.parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad threshold in {s:?}")))?,
                ),
                None => (rest, tau),
            };
            return Ok(Method::Hybrid {
                tau,
                chain: chain.parse()?,
            });
        }
        match s.parse::<ChainMethod>() {
            Ok(ChainMethod::Condensed) => Ok(Method::Condensed),
            Ok(ChainMethod::Direct(sim)) => Ok(Method::Direct(sim)),
            Err(_) => Err(Error::InvalidInput(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Relbert,
    Chain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub chosen: usize,
    pub method: String,
    pub confidence: Option<f64>,
    /// Per-candidate scores; `-inf` marks a candidate that could not be
    /// scored.
    pub scores: Vec<f64>,
    pub fallback_used: bool,
    /// Every score is zero (relation-type baseline only).
    pub degenerate: bool,
    /// Which side of a hybrid fired.
    pub branch: Option<Branch>,
}

impl Verdict {
    fn new(method: impl Into<String>, scores: Vec<f64>) -> Self {
        Self {
            chosen: argmax(&scores),
            method: method.into(),
            confidence: None,
            scores,
            fallback_used: false,
            degenerate: false,
            branch: None,
        }
    }
}

/// Index of the largest score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Picks the candidate whose relation embedding is most cosine-similar to
/// the query's. Candidates without an embedding score `-inf`.
pub fn solve_relbert(q: &AnalogyQuestion, store: &RelationStore) -> Result<Verdict> {
    let r_q = store.get(q.query.0.as_str(), q.query.1.as_str())?;
    let scores = q
        .candidates
        .iter()
        .map(|(x, y)| {
            store
                .lookup(x.as_str(), y.as_str())
                .map_or(f64::NEG_INFINITY, |r| cosine(r_q, r))
        })
        .collect();
    Ok(Verdict::new(Method::Relbert.to_string(), scores))
}

/// `min(inf(r_query), inf(r_chosen))` for the candidate chosen by
/// [`solve_relbert`].
pub fn confidence_of(
    q: &AnalogyQuestion,
    relbert: &Verdict,
    store: &RelationStore,
    clf: &Classifier,
) -> Result<f64> {
    let r_q = store.get(q.query.0.as_str(), q.query.1.as_str())?;
    let (x, y) = &q.candidates[relbert.chosen];
    let r_c = store.get(x.as_str(), y.as_str())?;
    Ok(clf.inf(r_q)?.min(clf.inf(r_c)?))
}

pub fn confidence(q: &AnalogyQuestion, store: &RelationStore, clf: &Classifier) -> Result<f64> {
    confidence_of(q, &solve_relbert(q, store)?, store, clf)
}

fn check_dims(c1: &Chain<'_>, c2: &Chain<'_>) -> Result<()> {
    let d = c1.r_ax.len();
    for len in [c1.r_xb.len(), c2.r_ax.len(), c2.r_xb.len()] {
        if len != d {
            return Err(Error::DimMismatch { expected: d, got: len });
        }
    }
    Ok(())
}

/// Both legs must match: `min(cos(r_ac, r_xz), cos(r_cb, r_zy))`.
pub fn sim1(c1: &Chain<'_>, c2: &Chain<'_>) -> Result<f64> {
    check_dims(c1, c2)?;
    Ok(cosine(c1.r_ax, c2.r_ax).min(cosine(c1.r_xb, c2.r_xb)))
}

/// Cosine between the decoded compositions of the two chains.
pub fn sim2(c1: &Chain<'_>, c2: &Chain<'_>, model: &CondenserModel) -> Result<f64> {
    check_dims(c1, c2)?;
    Ok(cosine_f64(&decoded(c1, model)?, &decoded(c2, model)?))
}

/// Order-free: `cos(r_ac + r_cb, r_xz + r_zy)`.
pub fn sim3(c1: &Chain<'_>, c2: &Chain<'_>) -> Result<f64> {
    check_dims(c1, c2)?;
    Ok(cosine_f64(&leg_sum(c1), &leg_sum(c2)))
}

fn decoded(c: &Chain<'_>, model: &CondenserModel) -> Result<Vec<f64>> {
    Ok(model.decode(&model.compose(c.r_ax, c.r_xb)?))
}

fn leg_sum(c: &Chain<'_>) -> Vec<f64> {
    c.r_ax
        .iter()
        .zip(c.r_xb)
        .map(|(&x, &y)| x as f64 + y as f64)
        .collect()
}

/// Chain similarity with per-chain work hoisted out of the pairwise loop.
enum Prepared {
    Sim1,
    Vectors(Vec<Vec<f64>>, Vec<Vec<f64>>),
}

fn prepare(
    query: &[Chain<'_>],
    cand: &[Chain<'_>],
    sim: ChainSim,
    model: Option<&CondenserModel>,
) -> Result<Prepared> {
    if let (Some(q), Some(c)) = (query.first(), cand.first()) {
        check_dims(q, c)?;
    }
    match sim {
        ChainSim::Sim1 => Ok(Prepared::Sim1),
        ChainSim::Sim2 => {
            let model = model.ok_or_else(|| Error::InvalidInput("sim2 requires a condenser model".into()))?;
            let q = query.iter().map(|c| decoded(c, model)).collect::<Result<_>>()?;
            let v = cand.iter().map(|c| decoded(c, model)).collect::<Result<_>>()?;
            Ok(Prepared::Vectors(q, v))
        }
        ChainSim::Sim3 => Ok(Prepared::Vectors(
            query.iter().map(leg_sum).collect(),
            cand.iter().map(leg_sum).collect(),
        )),
    }
}

/// Compatibility: for each query chain, the best similarity to any candidate
/// chain, summed. A candidate without chains scores 0.
pub fn comp(
    query: &[Chain<'_>],
    cand: &[Chain<'_>],
    sim: ChainSim,
    model: Option<&CondenserModel>,
) -> Result<f64> {
    if cand.is_empty() {
        return Ok(0.0);
    }
    let prepared = prepare(query, cand, sim, model)?;
    let mut total = 0.0;
    for (i, qc) in query.iter().enumerate() {
        let best = (0..cand.len())
            .map(|j| match &prepared {
                Prepared::Sim1 => cosine(qc.r_ax, cand[j].r_ax).min(cosine(qc.r_xb, cand[j].r_xb)),
                Prepared::Vectors(qv, cv) => cosine_f64(&qv[i], &cv[j]),
            })
            .fold(f64::NEG_INFINITY, f64::max);
        total += best;
    }
    Ok(total)
}

/// Scores each candidate by [`comp`] against the query's chains. Falls back
/// to [`solve_relbert`] when the query has no usable chain.
pub fn solve_direct(
    q: &AnalogyQuestion,
    chains: &ChainBuilder<'_>,
    sim: ChainSim,
    model: Option<&CondenserModel>,
) -> Result<Verdict> {
    let label = Method::Direct(sim).to_string();
    let query = chains.chains(&q.query.0, &q.query.1);
    if query.is_empty() {
        let mut v = solve_relbert(q, chains.store)?;
        v.method = label;
        v.fallback_used = true;
        return Ok(v);
    }
    let scores = q
        .candidates
        .iter()
        .map(|(x, y)| comp(&query, &chains.chains(x, y), sim, model))
        .collect::<Result<Vec<_>>>()?;
    let mut v = Verdict::new(label, scores);
    v.fallback_used = false;
    Ok(v)
}

/// Condensed embedding of a pair, or its stored embedding when it has no
/// chains. The flag reports the fallback.
fn condensed_or_raw(
    a: &Concept,
    b: &Concept,
    chains: &ChainBuilder<'_>,
    model: &CondenserModel,
) -> Result<Option<(Vec<f64>, bool)>> {
    let ch = chains.chains(a, b);
    if !ch.is_empty() {
        return Ok(Some((model.condense(&ch)?, false)));
    }
    Ok(chains
        .store
        .lookup(a.as_str(), b.as_str())
        .map(|r| (r.iter().map(|&v| v as f64).collect(), true)))
}

/// Picks the candidate whose condensed chain embedding is most
/// cosine-similar to the query's.
pub fn solve_condensed(q: &AnalogyQuestion, chains: &ChainBuilder<'_>, model: &CondenserModel) -> Result<Verdict> {
    let (s_q, mut fallback) = condensed_or_raw(&q.query.0, &q.query.1, chains, model)?
        .ok_or_else(|| Error::MissingPair(q.query.0.to_string(), q.query.1.to_string()))?;
    let mut scores = Vec::with_capacity(q.candidates.len());
    for (x, y) in &q.candidates {
        scores.push(match condensed_or_raw(x, y, chains, model)? {
            Some((s, fb)) => {
                fallback |= fb;
                cosine_f64(&s_q, &s)
            }
            None => f64::NEG_INFINITY,
        });
    }
    let mut v = Verdict::new(Method::Condensed.to_string(), scores);
    v.fallback_used = fallback;
    Ok(v)
}

/// Answers with the chain method when the confidence of the direct
/// comparison is below `tau`, otherwise with the direct comparison.
pub fn solve_hybrid(
    q: &AnalogyQuestion,
    tau: f64,
    chain: ChainMethod,
    chains: &ChainBuilder<'_>,
    clf: &Classifier,
    model: Option<&CondenserModel>,
) -> Result<Verdict> {
    let relbert = solve_relbert(q, chains.store)?;
    let conf = confidence_of(q, &relbert, chains.store, clf)?;
    let (mut v, branch) = if conf < tau {
        let v = match chain {
            ChainMethod::Condensed => solve_condensed(
                q,
                chains,
                model.ok_or_else(|| Error::InvalidInput("condensed routing requires a model".into()))?,
            )?,
            ChainMethod::Direct(sim) => solve_direct(q, chains, sim, model)?,
        };
        (v, Branch::Chain)
    } else {
        (relbert, Branch::Relbert)
    };
    v.method = Method::Hybrid { tau, chain }.to_string();
    v.confidence = Some(conf);
    v.branch = Some(branch);
    Ok(v)
}

/// Typed 2-hop paths `(type(a,c), type(c,b))` per KG-only intermediate.
fn typed_paths<'g>(graph: &'g ConceptGraph, a: &Concept, b: &Concept) -> Vec<(&'g Concept, Vec<(&'g str, &'g str)>)> {
    let from_b: std::collections::BTreeSet<&Concept> = graph.neighbors(b.as_str(), true).collect();
    graph
        .neighbors(a.as_str(), true)
        .filter(|c| *c != a && *c != b && from_b.contains(c))
        .map(|c| {
            let left = graph.relation_types(a.as_str(), c.as_str());
            let right = graph.relation_types(c.as_str(), b.as_str());
            let paths = left
                .iter()
                .flat_map(|&t1| right.iter().map(move |&t2| (t1, t2)))
                .collect();
            (c, paths)
        })
        .collect()
}

/// Relation-type baseline: for each query intermediate, 1 if some candidate
/// intermediate has an identically typed path, summed.
pub fn solve_cn_types(q: &AnalogyQuestion, graph: &ConceptGraph) -> Verdict {
    let query = typed_paths(graph, &q.query.0, &q.query.1);
    let scores: Vec<f64> = q
        .candidates
        .iter()
        .map(|(x, y)| {
            let cand = typed_paths(graph, x, y);
            query
                .iter()
                .filter(|(_, qp)| cand.iter().any(|(_, cp)| qp.iter().any(|p| cp.contains(p))))
                .count() as f64
        })
        .collect();
    let degenerate = scores.iter().all(|&s| s == 0.0);
    let mut v = Verdict::new(Method::CnTypes.to_string(), scores);
    v.degenerate = degenerate;
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub query_intermediate: Concept,
    pub candidate_intermediate: Concept,
    pub score: f64,
}

/// The query/candidate intermediate pair whose chains are most similar under
/// `sim1`, ties going to the lexicographically smallest `(c, z)`.
pub fn explain(q: &AnalogyQuestion, verdict: &Verdict, chains: &ChainBuilder<'_>) -> Result<Explanation> {
    let mut query = chains.chains(&q.query.0, &q.query.1);
    let (x, y) = &q.candidates[verdict.chosen];
    let mut cand = chains.chains(x, y);
    if query.is_empty() || cand.is_empty() {
        return Err(Error::InvalidInput(format!(
            "question {}: explanation needs chains on both sides",
            q.id
        )));
    }
    query.sort_by(|p, r| p.x.cmp(&r.x));
    cand.sort_by(|p, r| p.x.cmp(&r.x));
    let mut best: Option<Explanation> = None;
    for qc in &query {
        for cc in &cand {
            let s = sim1(qc, cc)?;
            if best.as_ref().is_none_or(|b| s > b.score) {
                best = Some(Explanation {
                    query_intermediate: qc.x.clone(),
                    candidate_intermediate: cc.x.clone(),
                    score: s,
                });
            }
        }
    }
    Ok(best.unwrap())
}

/// Everything a method may need, bundled for dispatch.
pub struct Solver<'a> {
    pub chains: &'a ChainBuilder<'a>,
    pub classifier: Option<&'a Classifier>,
    pub model: Option<&'a CondenserModel>,
    /// KG graph for the relation-type baseline.
    pub graph: &'a ConceptGraph,
}

impl Solver<'_> {
    pub fn store(&self) -> &RelationStore {
        self.chains.store
    }

    pub fn solve(&self, q: &AnalogyQuestion, method: Method) -> Result<Verdict> {
        let need_model = || {
            self.model
                .ok_or_else(|| Error::InvalidInput(format!("method {method} requires a condenser model")))
        };
        match method {
            Method::Relbert => solve_relbert(q, self.store()),
            Method::Condensed => solve_condensed(q, self.chains, need_model()?),
            Method::Direct(sim) => solve_direct(q, self.chains, sim, self.model),
            Method::CnTypes => Ok(solve_cn_types(q, self.graph)),
            Method::Hybrid { tau, chain } => {
                let clf = self
                    .classifier
                    .ok_or_else(|| Error::InvalidInput("hybrid routing requires a classifier".into()))?;
                solve_hybrid(q, tau, chain, self.chains, clf, self.model)
            }
        }
    }
}
