//! Concept graph built from a knowledge-graph edge dump, augmented with
//! predicted links, and queried for the intermediate concepts that connect
//! two words through 2-hop paths.
//!
//! Adjacency is undirected for path finding; the directed relation
//! embeddings `r_ax`, `r_xb` restore order at the pair level.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::concept::Concept;
use crate::condenser::Chain;
use crate::embedding_store::{merged_neighbors, RelationStore, WordVectorTable};
use crate::error::{Error, Result};
use crate::informativeness::Classifier;

pub const DEFAULT_EXCLUSIONS: [&str; 3] = ["/r/NotCapableOf", "/r/NotDesires", "/r/NotHasProperty"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Kg,
    Mlp,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Kg => "kg",
            Provenance::Mlp => "mlp",
        })
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "kg" => Ok(Provenance::Kg),
            "mlp" => Ok(Provenance::Mlp),
            _ => Err(format!("unknown provenance {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GraphEdge {
    pub head: Concept,
    pub tail: Concept,
    /// KG relation type; `None` for predicted links.
    pub relation: Option<String>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Default)]
struct Link {
    kg_types: Vec<u16>,
    mlp: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ConceptGraph {
    relations: Vec<String>,
    relation_ids: HashMap<String, u16>,
    adjacency: HashMap<Concept, BTreeMap<Concept, Link>>,
    edges: Vec<GraphEdge>,
}

impl ConceptGraph {
    pub fn new() -> Self {
        Self::default()
    }

    fn relation_id(&mut self, relation: &str) -> u16 {
        if let Some(&id) = self.relation_ids.get(relation) {
            return id;
        }
        let id = u16::try_from(self.relations.len()).expect("more than 65535 relation types");
        self.relations.push(relation.to_string());
        self.relation_ids.insert(relation.to_string(), id);
        id
    }

    fn link_mut(&mut self, x: &Concept, y: &Concept) -> &mut Link {
        self.adjacency
            .entry(x.clone())
            .or_default()
            .entry(y.clone())
            .or_default()
    }

    /// Adds a typed KG edge. Returns false for self-loops and for duplicates
    /// (same relation type between the same two concepts, either direction).
    pub fn add_kg_edge(&mut self, head: Concept, tail: Concept, relation: &str) -> bool {
        if head == tail {
            return false;
        }
        let id = self.relation_id(relation);
        if self.link_mut(&head, &tail).kg_types.contains(&id) {
            return false;
        }
        for (x, y) in [(&head, &tail), (&tail, &head)] {
            let link = self.link_mut(x, y);
            link.kg_types.push(id);
            link.kg_types.sort_unstable();
        }
        self.edges.push(GraphEdge {
            head,
            tail,
            relation: Some(relation.to_string()),
            provenance: Provenance::Kg,
        });
        true
    }

    /// Adds an untyped predicted link. Returns false for self-loops or when a
    /// predicted link already joins the two concepts.
    pub fn add_predicted_edge(&mut self, head: Concept, tail: Concept) -> bool {
        if head == tail {
            return false;
        }
        if self
            .adjacency
            .get(&head)
            .and_then(|m| m.get(&tail))
            .is_some_and(|l| l.mlp)
        {
            return false;
        }
        self.link_mut(&head, &tail).mlp = true;
        self.link_mut(&tail, &head).mlp = true;
        self.edges.push(GraphEdge {
            head,
            tail,
            relation: None,
            provenance: Provenance::Mlp,
        });
        true
    }

    pub fn edges(&self) -> &[GraphEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn contains(&self, x: &str) -> bool {
        self.adjacency.contains_key(x)
    }

    pub fn is_adjacent(&self, x: &str, y: &str) -> bool {
        self.adjacency.get(x).is_some_and(|m| m.contains_key(y))
    }

    /// Neighbors of `x` in concept order. With `kg_only`, predicted links are
    /// ignored.
    pub fn neighbors<'a>(&'a self, x: &str, kg_only: bool) -> impl Iterator<Item = &'a Concept> + 'a {
        self.adjacency
            .get(x)
            .into_iter()
            .flat_map(|m| m.iter())
            .filter(move |(_, l)| !kg_only || !l.kg_types.is_empty())
            .map(|(c, _)| c)
    }

    /// KG relation types on edges between `x` and `y` (either direction).
    pub fn relation_types(&self, x: &str, y: &str) -> Vec<&str> {
        self.adjacency
            .get(x)
            .and_then(|m| m.get(y))
            .map(|l| l.kg_types.iter().map(|&id| self.relations[id as usize].as_str()).collect())
            .unwrap_or_default()
    }

    /// Checks that every adjacency entry has its mirror.
    /// Every concept with at least one edge, in concept order.
    pub fn nodes(&self) -> Vec<&Concept> {
        let mut out: Vec<&Concept> = self.adjacency.keys().collect();
        out.sort();
        out
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency.iter().all(|(x, m)| {
            m.iter().all(|(y, l)| {
                self.adjacency
                    .get(y)
                    .and_then(|n| n.get(x))
                    .is_some_and(|r| r.mlp == l.mlp && r.kg_types == l.kg_types)
            })
        })
    }

    /// Writes `head<TAB>tail<TAB>relation-or-_<TAB>provenance` rows.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        (|| {
            for e in &self.edges {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}",
                    e.head,
                    e.tail,
                    e.relation.as_deref().unwrap_or("_"),
                    e.provenance
                )?;
            }
            w.flush()
        })()
        .map_err(|e| Error::io(path, e))
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut g = ConceptGraph::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(path, lineno, format!("expected 4 columns, found {}", cols.len())));
            }
            let head = Concept::new(cols[0]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let tail = Concept::new(cols[1]).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let prov: Provenance = cols[3].parse().map_err(|m: String| Error::parse(path, lineno, m))?;
            match (prov, cols[2]) {
                (Provenance::Mlp, "_") => {
                    g.add_predicted_edge(head, tail);
                }
                (Provenance::Kg, rel) if rel != "_" => {
                    g.add_kg_edge(head, tail, rel);
                }
                _ => return Err(Error::parse(path, lineno, "relation column inconsistent with provenance")),
            }
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    pub exclusions: BTreeSet<String>,
    /// Language tag kept for `/c/<lang>/...` concept URIs.
    pub language: String,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            exclusions: DEFAULT_EXCLUSIONS.iter().map(|s| s.to_string()).collect(),
            language: "en".into(),
        }
    }
}

/// Reads `a<TAB>b` rows; further columns are ignored, as are `#` lines.
pub fn read_pair_list(path: &Path) -> Result<Vec<(Concept, Concept)>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
            return Err(Error::parse(path, i + 1, "expected at least 2 columns"));
        };
        let a = Concept::new(a).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let b = Concept::new(b).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((a, b));
    }
    Ok(out)
}

pub fn write_pair_list(path: &Path, pairs: &[(Concept, Concept)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (a, b) in pairs {
        writeln!(w, "{a}\t{b}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestStats {
    pub rows: usize,
    pub kept: usize,
    pub excluded: usize,
    pub self_loops: usize,
    pub other_language: usize,
    pub duplicates: usize,
}

/// Parses a concept field: either a ConceptNet URI `/c/<lang>/<term>[/...]`
/// or a plain token. Returns `Ok(None)` for a URI in another language.
fn parse_concept_field(field: &str, language: &str) -> std::result::Result<Option<Concept>, String> {
    if let Some(rest) = field.strip_prefix("/c/") {
        let mut parts = rest.split('/');
        let lang = parts.next().unwrap_or("");
        let term = parts.next().ok_or_else(|| format!("concept URI without term: {field:?}"))?;
        if lang != language {
            return Ok(None);
        }
        return Concept::new(&term.replace('_', " "))
            .map(Some)
            .map_err(|e| e.to_string());
    }
    Concept::new(field).map(Some).map_err(|e| e.to_string())
}

/// Reads a `relation<TAB>head<TAB>tail[<TAB>weight]` dump.
pub fn ingest_kg(path: &Path, opts: &IngestOptions) -> Result<(ConceptGraph, IngestStats)> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut g = ConceptGraph::new();
    let mut stats = IngestStats::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        stats.rows += 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&cols.len()) {
            return Err(Error::parse(path, lineno, format!("expected 3 or 4 columns, found {}", cols.len())));
        }
        let relation = cols[0].trim();
        if relation.is_empty() {
            return Err(Error::parse(path, lineno, "empty relation"));
        }
        let head = parse_concept_field(cols[1], &opts.language).map_err(|m| Error::parse(path, lineno, m))?;
        let tail = parse_concept_field(cols[2], &opts.language).map_err(|m| Error::parse(path, lineno, m))?;
        if opts.exclusions.contains(relation) {
            stats.excluded += 1;
            continue;
        }
        let (Some(head), Some(tail)) = (head, tail) else {
            stats.other_language += 1;
            continue;
        };
        if head == tail {
            stats.self_loops += 1;
            continue;
        }
        if g.add_kg_edge(head, tail, relation) {
            stats.kept += 1;
        } else {
            stats.duplicates += 1;
        }
    }
    Ok((g, stats))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinkPrediction {
    pub edges: Vec<(Concept, Concept)>,
    /// Neighbors skipped because `r_wy` is not in the store.
    pub missing: Vec<Concept>,
}

/// Links `w` to each merged embedding neighbor `y` whose relation embedding
/// `r_wy` has informativeness strictly above `threshold`.
pub fn predict_missing_links(
    w: &str,
    tables: &[&WordVectorTable],
    store: &RelationStore,
    clf: &Classifier,
    k: usize,
    threshold: f64,
) -> Result<LinkPrediction> {
    let neighbors = merged_neighbors(w, k, tables)?;
    let wc = Concept::new(w)?;
    let mut out = LinkPrediction::default();
    for y in neighbors {
        if y == wc {
            continue;
        }
        match store.lookup(w, y.as_str()) {
            Some(r) => {
                if clf.inf(r)? > threshold {
                    out.edges.push((wc.clone(), y));
                }
            }
            None => out.missing.push(y),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AugmentStats {
    pub words: usize,
    pub absent_words: usize,
    pub added: usize,
    pub missing_embeddings: usize,
}

/// Runs link prediction for every word and adds the resulting edges.
/// Returns stats plus the `(w, y)` pairs whose embeddings were missing.
pub fn augment<'w>(
    graph: &mut ConceptGraph,
    words: impl IntoIterator<Item = &'w Concept>,
    tables: &[&WordVectorTable],
    store: &RelationStore,
    clf: &Classifier,
    k: usize,
    threshold: f64,
) -> Result<(AugmentStats, Vec<(Concept, Concept)>)> {
    let mut stats = AugmentStats::default();
    let mut needed = Vec::new();
    for w in words {
        stats.words += 1;
        let pred = match predict_missing_links(w.as_str(), tables, store, clf, k, threshold) {
            Ok(p) => p,
            Err(Error::NotFound(_)) => {
                stats.absent_words += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        stats.missing_embeddings += pred.missing.len();
        needed.extend(pred.missing.into_iter().map(|y| (w.clone(), y)));
        for (a, y) in pred.edges {
            if graph.add_predicted_edge(a, y) {
                stats.added += 1;
            }
        }
    }
    Ok((stats, needed))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntermediateOptions {
    pub smoothing: bool,
    /// Neighbors per endpoint admitted by smoothing.
    pub smoothing_k: usize,
    pub cap: usize,
    /// Ignore predicted links.
    pub kg_only: bool,
}

impl Default for IntermediateOptions {
    fn default() -> Self {
        Self {
            smoothing: true,
            smoothing_k: 5,
            cap: 50,
            kg_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntermediateSet {
    pub a: Concept,
    pub b: Concept,
    pub intermediates: Vec<Concept>,
}

/// Enumerates intermediates `x` on 2-hop paths between `a` and `b`, ranked
/// by `min(inf(r_ax), inf(r_xb))` descending when a ranker is given (pairs
/// with a missing embedding rank last), then by concept; truncated to
/// `opts.cap`.
pub fn intermediates(
    a: &Concept,
    b: &Concept,
    graph: &ConceptGraph,
    table: Option<&WordVectorTable>,
    ranker: Option<(&RelationStore, &Classifier)>,
    opts: &IntermediateOptions,
) -> IntermediateSet {
    let sources = |w: &str| -> Vec<String> {
        let mut out = vec![w.to_string()];
        if opts.smoothing {
            if let Some(t) = table {
                if let Ok(n) = t.top_k_neighbors(w, opts.smoothing_k) {
                    out.extend(n.into_iter().map(|(c, _)| c.to_string()));
                }
            }
        }
        out
    };
    let candidates = intermediate_candidates(a, b, graph, &sources(a.as_str()), &sources(b.as_str()), opts.kg_only);
    finish_intermediates(a, b, candidates, ranker, opts.cap)
}

fn intermediate_candidates(
    a: &Concept,
    b: &Concept,
    graph: &ConceptGraph,
    sources_a: &[String],
    sources_b: &[String],
    kg_only: bool,
) -> BTreeSet<Concept> {
    let reach = |sources: &[String]| -> BTreeSet<&Concept> {
        sources
            .iter()
            .flat_map(|s| graph.neighbors(s, kg_only))
            .collect()
    };
    let from_a = reach(sources_a);
    let from_b = reach(sources_b);
    from_a
        .intersection(&from_b)
        .filter(|x| **x != a && **x != b)
        .map(|x| (*x).clone())
        .collect()
}

fn finish_intermediates(
    a: &Concept,
    b: &Concept,
    candidates: BTreeSet<Concept>,
    ranker: Option<(&RelationStore, &Classifier)>,
    cap: usize,
) -> IntermediateSet {
    let mut ranked: Vec<(Option<f64>, Concept)> = candidates
        .into_iter()
        .map(|x| {
            let key = ranker.and_then(|(store, clf)| {
                let left = clf.inf_pair(store, a.as_str(), x.as_str())?;
                let right = clf.inf_pair(store, x.as_str(), b.as_str())?;
                Some(left.min(right))
            });
            (key, x)
        })
        .collect();
    // Some(_) before None; higher score first; then concept order.
    ranked.sort_by(|(ka, xa), (kb, xb)| match (ka, kb) {
        (Some(p), Some(q)) => q.total_cmp(p).then_with(|| xa.cmp(xb)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => xa.cmp(xb),
    });
    ranked.truncate(cap);
    IntermediateSet {
        a: a.clone(),
        b: b.clone(),
        intermediates: ranked.into_iter().map(|(_, x)| x).collect(),
    }
}

/// Turns intermediate sets into relation-embedding chains. Smoothing
/// neighbor lists are cached per word.
pub struct ChainBuilder<'a> {
    pub graph: &'a ConceptGraph,
    pub store: &'a RelationStore,
    pub smoothing_table: Option<&'a WordVectorTable>,
    pub classifier: Option<&'a Classifier>,
    pub options: IntermediateOptions,
    smoothing_cache: Mutex<HashMap<String, Vec<String>>>,
}

impl<'a> ChainBuilder<'a> {
    pub fn new(graph: &'a ConceptGraph, store: &'a RelationStore) -> Self {
        Self {
            graph,
            store,
            smoothing_table: None,
            classifier: None,
            options: IntermediateOptions {
                smoothing: false,
                ..Default::default()
            },
            smoothing_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_smoothing(mut self, table: &'a WordVectorTable, k: usize) -> Self {
        self.smoothing_table = Some(table);
        self.options.smoothing = true;
        self.options.smoothing_k = k;
        self
    }

    pub fn with_classifier(mut self, clf: &'a Classifier) -> Self {
        self.classifier = Some(clf);
        self
    }

    pub fn with_options(mut self, options: IntermediateOptions) -> Self {
        self.options = options;
        self
    }

    fn sources(&self, w: &str) -> Vec<String> {
        let mut out = vec![w.to_string()];
        if !self.options.smoothing {
            return out;
        }
        let Some(table) = self.smoothing_table else {
            return out;
        };
        if let Some(cached) = self.smoothing_cache.lock().unwrap().get(w) {
            out.extend(cached.iter().cloned());
            return out;
        }
        let neighbors: Vec<String> = table
            .top_k_neighbors(w, self.options.smoothing_k)
            .map(|n| n.into_iter().map(|(c, _)| c.to_string()).collect())
            .unwrap_or_default();
        out.extend(neighbors.iter().cloned());
        self.smoothing_cache.lock().unwrap().insert(w.to_string(), neighbors);
        out
    }

    pub fn intermediates(&self, a: &Concept, b: &Concept) -> IntermediateSet {
        let candidates = intermediate_candidates(
            a,
            b,
            self.graph,
            &self.sources(a.as_str()),
            &self.sources(b.as_str()),
            self.options.kg_only,
        );
        let ranker = self.classifier.map(|c| (self.store, c));
        finish_intermediates(a, b, candidates, ranker, self.options.cap)
    }

    /// Chains for `(a, b)`; intermediates with a missing leg embedding are
    /// dropped.
    pub fn chains(&self, a: &Concept, b: &Concept) -> Vec<Chain<'a>> {
        self.intermediates(a, b)
            .intermediates
            .into_iter()
            .filter_map(|x| {
                let r_ax = self.store.lookup(a.as_str(), x.as_str())?;
                let r_xb = self.store.lookup(x.as_str(), b.as_str())?;
                Some(Chain { x, r_ax, r_xb })
            })
            .collect()
    }

    /// `(a, x)` and `(x, b)` leg pairs that have no stored embedding.
    pub fn missing_legs(&self, a: &Concept, b: &Concept) -> Vec<(Concept, Concept)> {
        let set = self.intermediates(a, b);
        let mut out = Vec::new();
        for x in set.intermediates {
            if !self.store.contains(a.as_str(), x.as_str()) {
                out.push((set.a.clone(), x.clone()));
            }
            if !self.store.contains(x.as_str(), b.as_str()) {
                out.push((x, set.b.clone()));
            }
        }
        out
    }
}
