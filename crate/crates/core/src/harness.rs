//! Datasets, evaluation by confidence bucket, and report rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::concept::Concept;
use crate::error::{Error, Result};
use crate::informativeness::Classifier;
use crate::solver::{confidence_of, explain, solve_relbert, AnalogyQuestion, Branch, Method, Solver, Verdict};

pub const DEFAULT_BUCKETS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub questions: Vec<AnalogyQuestion>,
}

#[derive(Deserialize)]
struct RawQuestion {
    #[serde(default)]
    id: Option<serde_json::Value>,
    stem: Vec<String>,
    choice: Vec<Vec<String>>,
    answer: usize,
}

fn to_pair(words: &[String]) -> std::result::Result<(Concept, Concept), String> {
    match words {
        [a, b] => Ok((
            Concept::new(a).map_err(|e| e.to_string())?,
            Concept::new(b).map_err(|e| e.to_string())?,
        )),
        _ => Err(format!("expected a word pair, found {} words", words.len())),
    }
}

impl Dataset {
    /// Reads JSONL with `stem`, `choice` and `answer` fields. The dataset is
    /// named after the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self::load_named(path, name)
    }

    pub fn load_named(path: &Path, name: impl Into<String>) -> Result<Self> {
        let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let mut questions = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawQuestion =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let query = to_pair(&raw.stem).map_err(|m| Error::parse(path, lineno, format!("stem: {m}")))?;
            let candidates = raw
                .choice
                .iter()
                .map(|c| to_pair(c))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|m| Error::parse(path, lineno, format!("choice: {m}")))?;
            let id = match raw.id {
                Some(serde_json::Value::String(s)) => s,
                Some(v) => v.to_string(),
                None => format!("{}", questions.len()),
            };
            let q = AnalogyQuestion::new(id, query, candidates, raw.answer)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            questions.push(q);
        }
        if questions.is_empty() {
            return Err(Error::parse(path, 0, "dataset contains no questions"));
        }
        Ok(Self {
            name: name.into(),
            questions,
        })
    }
}

/// One persisted verdict, as written to JSON lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub dataset: String,
    pub id: String,
    pub method: String,
    pub chosen: Option<usize>,
    pub gold: usize,
    pub confidence: Option<f64>,
    /// `null` marks an unscorable candidate.
    pub scores: Vec<Option<f64>>,
    pub fallback_used: bool,
    pub degenerate: bool,
    pub branch: Option<Branch>,
    pub explanation: Option<(String, String)>,
    pub error: Option<String>,
}

impl VerdictRecord {
    pub fn correct(&self) -> bool {
        self.chosen == Some(self.gold)
    }

    fn from_verdict(dataset: &str, q: &AnalogyQuestion, v: Verdict, confidence: Option<f64>) -> Self {
        Self {
            dataset: dataset.to_string(),
            id: q.id.clone(),
            method: v.method,
            chosen: Some(v.chosen),
            gold: q.gold,
            confidence,
            scores: v.scores.iter().map(|&s| s.is_finite().then_some(s)).collect(),
            fallback_used: v.fallback_used,
            degenerate: v.degenerate,
            branch: v.branch,
            explanation: None,
            error: None,
        }
    }
}

pub fn write_records(path: &Path, records: &[VerdictRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<VerdictRecord>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?);
    }
    Ok(out)
}

/// Runs `method` on every question. Confidence always comes from the direct
/// relation-embedding verdict and the classifier; it is `None` when the
/// query or the chosen candidate has no embedding. A failing method yields a
/// record with `chosen = None` and the error message.
pub fn run_method(
    ds: &Dataset,
    method: Method,
    solver: &Solver<'_>,
    clf: &Classifier,
    with_explanations: bool,
) -> Vec<VerdictRecord> {
    ds.questions
        .par_iter()
        .map(|q| {
            let conf = solve_relbert(q, solver.store())
                .and_then(|v| confidence_of(q, &v, solver.store(), clf))
                .ok();
            match solver.solve(q, method) {
                Ok(v) => {
                    let explanation = if with_explanations {
                        explain(q, &v, solver.chains)
                            .ok()
                            .map(|e| (e.query_intermediate.to_string(), e.candidate_intermediate.to_string()))
                    } else {
                        None
                    };
                    let mut rec = VerdictRecord::from_verdict(&ds.name, q, v, conf);
                    rec.explanation = explanation;
                    rec
                }
                Err(e) => VerdictRecord {
                    dataset: ds.name.clone(),
                    id: q.id.clone(),
                    method: method.to_string(),
                    chosen: None,
                    gold: q.gold,
                    confidence: conf,
                    scores: Vec::new(),
                    fallback_used: false,
                    degenerate: false,
                    branch: None,
                    explanation: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub count: usize,
    pub correct: usize,
}

impl Tally {
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }

    fn add(&mut self, correct: bool) {
        self.count += 1;
        self.correct += correct as usize;
    }

    fn merge(&mut self, other: Tally) {
        self.count += other.count;
        self.correct += other.correct;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub method: String,
    pub buckets: Vec<Tally>,
    /// Questions without a defined confidence.
    pub unscored: Tally,
    pub overall: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bounds: Vec<f64>,
    pub datasets: Vec<DatasetReport>,
}

/// Bucket of `conf` under `bounds`: half-open `[b_i, b_{i+1})` intervals,
/// the last one closed. Values outside the range clamp to the end buckets.
pub fn bucket_of(conf: f64, bounds: &[f64]) -> usize {
    let n = bounds.len() - 1;
    (0..n).find(|&i| conf < bounds[i + 1]).unwrap_or(n - 1)
}

pub fn validate_bounds(bounds: &[f64]) -> Result<()> {
    if bounds.len() < 2 || bounds.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(Error::InvalidInput(format!(
            "bucket bounds must be strictly increasing with at least two entries, got {bounds:?}"
        )));
    }
    Ok(())
}

impl EvalReport {
    /// Aggregates records per (dataset, method), in order of first
    /// appearance.
    pub fn from_records(records: &[VerdictRecord], bounds: &[f64]) -> Result<Self> {
        validate_bounds(bounds)?;
        let mut order: Vec<(String, String)> = Vec::new();
        let mut map: BTreeMap<(String, String), DatasetReport> = BTreeMap::new();
        for r in records {
            let key = (r.dataset.clone(), r.method.clone());
            let entry = map.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                DatasetReport {
                    dataset: r.dataset.clone(),
                    method: r.method.clone(),
                    buckets: vec![Tally::default(); bounds.len() - 1],
                    unscored: Tally::default(),
                    overall: Tally::default(),
                }
            });
            let ok = r.correct();
            match r.confidence {
                Some(c) => entry.buckets[bucket_of(c, bounds)].add(ok),
                None => entry.unscored.add(ok),
            }
            entry.overall.add(ok);
        }
        Ok(Self {
            bounds: bounds.to_vec(),
            datasets: order.into_iter().map(|k| map.remove(&k).unwrap()).collect(),
        })
    }

    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for d in &self.datasets {
            if !out.contains(&d.method.as_str()) {
                out.push(&d.method);
            }
        }
        out
    }

    /// Pooled tallies over all datasets for `method`.
    pub fn micro(&self, method: &str) -> DatasetReport {
        let mut out = DatasetReport {
            dataset: "micro".into(),
            method: method.into(),
            buckets: vec![Tally::default(); self.bounds.len() - 1],
            unscored: Tally::default(),
            overall: Tally::default(),
        };
        for d in self.datasets.iter().filter(|d| d.method == method) {
            for (acc, b) in out.buckets.iter_mut().zip(&d.buckets) {
                acc.merge(*b);
            }
            out.unscored.merge(d.unscored);
            out.overall.merge(d.overall);
        }
        out
    }

    /// Unweighted mean of per-dataset accuracies for `method`; datasets with
    /// an empty bucket are left out of that bucket's mean. Returns
    /// `(per-bucket, unscored, overall)`.
    pub fn macro_average(&self, method: &str) -> (Vec<Option<f64>>, Option<f64>, Option<f64>) {
        let rows: Vec<&DatasetReport> = self.datasets.iter().filter(|d| d.method == method).collect();
        let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        let buckets = (0..self.bounds.len() - 1)
            .map(|i| mean(rows.iter().filter_map(|d| d.buckets[i].accuracy()).collect()))
            .collect();
        let unscored = mean(rows.iter().filter_map(|d| d.unscored.accuracy()).collect());
        let overall = mean(rows.iter().filter_map(|d| d.overall.accuracy()).collect());
        (buckets, unscored, overall)
    }

    fn bucket_labels(&self) -> Vec<String> {
        let n = self.bounds.len() - 1;
        (0..n)
            .map(|i| {
                let close = if i + 1 == n { ']' } else { ')' };
                format!("[{},{}{}", self.bounds[i], self.bounds[i + 1], close)
            })
            .collect()
    }

    /// Rows of `(dataset, bucket, count, accuracy, method)`, including
    /// macro and micro aggregates.
    pub fn rows(&self) -> Vec<(String, String, usize, Option<f64>, String)> {
        let labels = self.bucket_labels();
        let mut rows = Vec::new();
        let push = |d: &DatasetReport, rows: &mut Vec<_>| {
            for (label, t) in labels.iter().zip(&d.buckets) {
                rows.push((d.dataset.clone(), label.clone(), t.count, t.accuracy(), d.method.clone()));
            }
            rows.push((d.dataset.clone(), "unscored".into(), d.unscored.count, d.unscored.accuracy(), d.method.clone()));
            rows.push((d.dataset.clone(), "all".into(), d.overall.count, d.overall.accuracy(), d.method.clone()));
        };
        for d in &self.datasets {
            push(d, &mut rows);
        }
        for method in self.methods() {
            let micro = self.micro(method);
            push(&micro, &mut rows);
            let (buckets, unscored, overall) = self.macro_average(method);
            for ((label, acc), t) in labels.iter().zip(buckets).zip(&micro.buckets) {
                rows.push(("macro".into(), label.clone(), t.count, acc, method.to_string()));
            }
            rows.push(("macro".into(), "unscored".into(), micro.unscored.count, unscored, method.to_string()));
            rows.push(("macro".into(), "all".into(), micro.overall.count, overall, method.to_string()));
        }
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,bucket,count,accuracy,method\n");
        for (d, b, n, acc, m) in self.rows() {
            let acc = acc.map(|a| format!("{a:.6}")).unwrap_or_default();
            writeln!(out, "{d},{b},{n},{acc},{m}").unwrap();
        }
        out
    }

    /// Aligned text table: one block per method, one row per bucket, one
    /// column per dataset plus the macro and micro averages. Cells show
    /// accuracy in percent and the count.
    pub fn to_table(&self) -> String {
        let labels = self.bucket_labels();
        let mut out = String::new();
        for method in self.methods() {
            let rows: Vec<&DatasetReport> = self.datasets.iter().filter(|d| d.method == method).collect();
            let micro = self.micro(method);
            let (mb, mu, mo) = self.macro_average(method);
            let cell = |t: &Tally| match t.accuracy() {
                Some(a) => format!("{:.1} ({})", 100.0 * a, t.count),
                None => format!("- ({})", t.count),
            };
            let pct = |a: Option<f64>| a.map_or("-".to_string(), |a| format!("{:.1}", 100.0 * a));
            let mut header = vec!["bucket".to_string()];
            header.extend(rows.iter().map(|d| d.dataset.clone()));
            header.push("macro".into());
            header.push("micro".into());
            let mut table = vec![header];
            for (i, label) in labels.iter().enumerate() {
                let mut row = vec![label.clone()];
                row.extend(rows.iter().map(|d| cell(&d.buckets[i])));
                row.push(pct(mb[i]));
                row.push(cell(&micro.buckets[i]));
                table.push(row);
            }
            let mut row = vec!["unscored".to_string()];
            row.extend(rows.iter().map(|d| cell(&d.unscored)));
            row.push(pct(mu));
            row.push(cell(&micro.unscored));
            table.push(row);
            let mut row = vec!["all".to_string()];
            row.extend(rows.iter().map(|d| cell(&d.overall)));
            row.push(pct(mo));
            row.push(cell(&micro.overall));
            table.push(row);

            let widths: Vec<usize> = (0..table[0].len())
                .map(|c| table.iter().map(|r| r[c].len()).max().unwrap())
                .collect();
            writeln!(out, "method: {method}").unwrap();
            for r in &table {
                let line: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (s, w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                    .collect();
                writeln!(out, "{}", line.join("  ").trim_end()).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
