use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use relchain::check::export_check;
use relchain::concept_graph::{augment, ingest_kg, read_pair_list, write_pair_list, ChainBuilder, ConceptGraph};
use relchain::condenser::{train_condenser, CondenserModel};
use relchain::config::Config;
use relchain::embedding_store::{RelationStore, VectorFormat, WordVectorTable};
use relchain::harness::{read_records, run_method, write_records, Dataset, EvalReport, VerdictRecord};
use relchain::informativeness::{corrupt_negatives, load_labeled_pairs, train_classifier, Classifier};
use relchain::solver::{Method, Solver};
use relchain::Concept;

/// Relation-embedding chains for word-analogy questions.
#[derive(Parser)]
#[command(name = "relchain", version)]
struct Cli {
    /// Overrides the configured seed (also used for condenser training).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config; falls back to $RELCHAIN_CONFIG, then built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a concept graph from a `relation<TAB>head<TAB>tail` dump.
    IngestKg {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Validate binary artifacts (WVEC, RELC, INFC, COND).
    ExportCheck {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Train the informativeness classifier from labeled pairs.
    TrainInf {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        relations: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Add one re-paired negative per positive.
        #[arg(long)]
        corrupt_negatives: bool,
    },
    /// Add predicted links between words and their embedding neighbors.
    Augment {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        relations: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        /// Word-vector tables (text or WVEC); repeat for several.
        #[arg(long = "vectors", required = true)]
        vectors: Vec<PathBuf>,
        /// One word per line; defaults to every graph node.
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Where to list neighbor pairs that lack a relation embedding.
        #[arg(long)]
        needed_pairs: Option<PathBuf>,
    },
    /// Train the chain condenser.
    TrainCond {
        /// `a<TAB>b` training pairs.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        relations: PathBuf,
        #[arg(long)]
        classifier: PathBuf,
        #[arg(long)]
        smoothing_vectors: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Answer questions and write verdicts as JSON lines.
    Solve {
        #[command(flatten)]
        inputs: SolverInputs,
        #[arg(long)]
        dataset: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Attach the best-matching intermediate pair to each verdict.
        #[arg(long)]
        explain: bool,
    },
    /// Solve datasets and print accuracy by confidence bucket.
    Eval {
        #[command(flatten)]
        inputs: SolverInputs,
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also persist the verdicts for `report`.
        #[arg(long)]
        verdicts: Option<PathBuf>,
    },
    /// Render the bucket table from stored verdicts.
    Report {
        #[arg(long = "verdicts", required = true)]
        verdicts: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SolverInputs {
    /// relbert, condensed, direct-sim1|2|3, cn-types, hybrid-<chain>[<tau].
    #[arg(long)]
    method: String,
    #[arg(long)]
    relations: PathBuf,
    /// Confidence is derived from this classifier.
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    smoothing_vectors: Option<PathBuf>,
}

/// An error caused by the invocation rather than by the data.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_vectors(path: &Path) -> Result<WordVectorTable> {
    Ok(WordVectorTable::load(path, VectorFormat::sniff(path)?)?)
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// Owned artifacts behind a [`Solver`].
struct Loaded {
    method: Method,
    store: RelationStore,
    classifier: Classifier,
    graph: ConceptGraph,
    model: Option<CondenserModel>,
    table: Option<WordVectorTable>,
}

impl Loaded {
    fn new(inputs: &SolverInputs, cfg: &Config) -> Result<Self> {
        let method = Method::parse(&inputs.method, cfg.solver.tau).map_err(|e| usage(e.to_string()))?;
        Ok(Self {
            method,
            store: RelationStore::load_binary(&inputs.relations)?,
            classifier: Classifier::load(&inputs.classifier)?,
            graph: match &inputs.graph {
                Some(p) => ConceptGraph::load_tsv(p)?,
                None => ConceptGraph::new(),
            },
            model: inputs.model.as_deref().map(CondenserModel::load).transpose()?,
            table: inputs.smoothing_vectors.as_deref().map(load_vectors).transpose()?,
        })
    }

    fn builder(&self, cfg: &Config) -> ChainBuilder<'_> {
        chain_builder(&self.graph, &self.store, self.table.as_ref(), &self.classifier, cfg)
    }
}

fn chain_builder<'a>(
    graph: &'a ConceptGraph,
    store: &'a RelationStore,
    table: Option<&'a WordVectorTable>,
    clf: &'a Classifier,
    cfg: &Config,
) -> ChainBuilder<'a> {
    let b = ChainBuilder::new(graph, store)
        .with_options(cfg.intermediates)
        .with_classifier(clf);
    match table {
        Some(t) if cfg.intermediates.smoothing => b.with_smoothing(t, cfg.intermediates.smoothing_k),
        _ => b,
    }
}

fn solve_datasets(inputs: &SolverInputs, paths: &[PathBuf], cfg: &Config, explain: bool) -> Result<Vec<VerdictRecord>> {
    let loaded = Loaded::new(inputs, cfg)?;
    let builder = loaded.builder(cfg);
    let solver = Solver {
        chains: &builder,
        classifier: Some(&loaded.classifier),
        model: loaded.model.as_ref(),
        graph: &loaded.graph,
    };
    let mut records = Vec::new();
    for path in paths {
        let ds = Dataset::load(path)?;
        let out = run_method(&ds, loaded.method, &solver, &loaded.classifier, explain);
        let failed = out.iter().filter(|r| r.error.is_some()).count();
        if failed > 0 {
            log::warn!("{}: {failed} question(s) could not be answered", ds.name);
        }
        records.extend(out);
    }
    Ok(records)
}

fn emit_report(records: &[VerdictRecord], cfg: &Config, csv: Option<&Path>) -> Result<()> {
    let report = EvalReport::from_records(records, &cfg.eval.buckets)?;
    print!("{}", report.to_table());
    if let Some(p) = csv {
        std::fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.condenser.seed = seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::IngestKg { input, output } => {
            let (graph, stats) = ingest_kg(&input, &cfg.ingest)?;
            graph.save_tsv(&output)?;
            print_json(&stats)
        }
        Command::ExportCheck { files } => {
            let mut bad = 0;
            for f in &files {
                match export_check(f) {
                    Ok(r) => println!("{}\tOK\t{}\tdim={}\tcount={}", f.display(), r.kind, r.dim, r.count),
                    Err(e) => {
                        bad += 1;
                        println!("{}\tERROR\t{e}", f.display());
                    }
                }
            }
            if bad > 0 {
                anyhow::bail!("{bad} of {} file(s) failed validation", files.len());
            }
            Ok(())
        }
        Command::TrainInf {
            pairs,
            relations,
            output,
            corrupt_negatives: corrupt,
        } => {
            let mut data = load_labeled_pairs(&pairs)?;
            if corrupt {
                let positives: Vec<_> = data.iter().filter(|p| p.positive).cloned().collect();
                data.extend(corrupt_negatives(&positives, cfg.seed));
            }
            let store = RelationStore::load_binary(&relations)?;
            let trained = train_classifier(&data, &store, &cfg.classifier)?;
            trained.classifier.save(&output)?;
            if let Some(loss) = trained.loss_log.last() {
                println!("trained on {} pairs; final loss {loss:.6}", data.len());
            }
            Ok(())
        }
        Command::Augment {
            graph,
            relations,
            classifier,
            vectors,
            words,
            output,
            needed_pairs,
        } => {
            let mut g = ConceptGraph::load_tsv(&graph)?;
            let store = RelationStore::load_binary(&relations)?;
            let clf = Classifier::load(&classifier)?;
            let tables = vectors.iter().map(|p| load_vectors(p)).collect::<Result<Vec<_>>>()?;
            let table_refs: Vec<&WordVectorTable> = tables.iter().collect();
            let vocab: Vec<Concept> = match &words {
                Some(p) => read_words(p)?,
                None => g.nodes().into_iter().cloned().collect(),
            };
            let (stats, needed) = augment(
                &mut g,
                &vocab,
                &table_refs,
                &store,
                &clf,
                cfg.links.neighbors_k,
                cfg.links.threshold,
            )?;
            g.save_tsv(&output)?;
            if let Some(p) = needed_pairs {
                write_pair_list(&p, &needed)?;
            }
            print_json(&stats)
        }
        Command::TrainCond {
            pairs,
            graph,
            relations,
            classifier,
            smoothing_vectors,
            output,
        } => {
            let pairs = read_pair_list(&pairs)?;
            let g = ConceptGraph::load_tsv(&graph)?;
            let store = RelationStore::load_binary(&relations)?;
            let clf = Classifier::load(&classifier)?;
            let table = smoothing_vectors.as_deref().map(load_vectors).transpose()?;
            let builder = chain_builder(&g, &store, table.as_ref(), &clf, &cfg);
            let trained = train_condenser(&pairs, &builder, &clf, &cfg.condenser)?;
            trained.save(&output)?;
            print_json(&trained.sidecar())
        }
        Command::Solve {
            inputs,
            dataset,
            output,
            explain,
        } => {
            let records = solve_datasets(&inputs, &[dataset], &cfg, explain)?;
            match output {
                Some(p) => write_records(&p, &records)?,
                None => {
                    let mut out = std::io::stdout().lock();
                    for r in &records {
                        serde_json::to_writer(&mut out, r)?;
                        out.write_all(b"\n")?;
                    }
                }
            }
            Ok(())
        }
        Command::Eval {
            inputs,
            datasets,
            csv,
            verdicts,
        } => {
            let records = solve_datasets(&inputs, &datasets, &cfg, false)?;
            if let Some(p) = verdicts {
                write_records(&p, &records)?;
            }
            emit_report(&records, &cfg, csv.as_deref())
        }
        Command::Report { verdicts, csv } => {
            let mut records = Vec::new();
            for p in &verdicts {
                records.extend(read_records(p)?);
            }
            emit_report(&records, &cfg, csv.as_deref())
        }
    }
}

fn read_words(path: &Path) -> Result<Vec<Concept>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| Concept::new(l).with_context(|| format!("{}: bad word {l:?}", path.display())))
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("Run with --help for usage.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
