use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use nestrec::corpus::{overlay_trees, read_corpus, serialize_conllu, validate_corpus};
use nestrec::crf::{train_entity_model, CrfModel, LabelSet, TrainConfig};
use nestrec::distant::{proportions_tsv, term_network, treemap, type_proportions, GroupBy};
use nestrec::fsutil::write_atomic;
use nestrec::kb::{classify_corpus, HybridConfig, KnowledgeBase, Strategy};
use nestrec::linker::{build_link_table, link_cascade, link_exact_baseline, link_head_baseline, LinkTable, Mention};
use nestrec::mentions::{build_lookup_inventory, detect_corpus, LookupInventory, ParseConfig, Source};
use nestrec::report::{agreement_report, classification_report, linking_report, mention_report, Report};
use nestrec::server::{serve, AppState};
use nestrec::{Corpus, Error};

/// Nested entity recognition and entity linking over CoNLL-U corpora.
#[derive(Parser)]
#[command(name = "nestrec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and rewrite a corpus in normalized form.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check a corpus and list every violation as JSON.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Propose entity spans (typed `abstract` until classified).
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: DetectMethod,
        #[command(flatten)]
        detection: DetectionArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Collect the span texts of a training corpus for lookup detection.
    BuildInventory {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a head-lemma knowledge base from gold training entities.
    BuildKb {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count gold links into a link table.
    BuildLinks {
        #[arg(long = "corpus", required = true)]
        corpora: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the CRF head labeller.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Predicted trees for the training file.
        #[arg(long)]
        trees: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Overridden by NESTREC_SEED.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Detect and type entities.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        method: ClassifyMethod,
        /// Where candidate spans come from; `file` keeps the input's spans.
        #[arg(long, value_enum, default_value = "parse")]
        spans: SpanSource,
        #[command(flatten)]
        detection: DetectionArgs,
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.95)]
        o_threshold: f64,
        /// Consult the KB before the discard rule.
        #[arg(long)]
        discard_late: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Suggest links for named mentions without an identity (TSV).
    Link {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        links: PathBuf,
        #[arg(long, value_enum, default_value = "cascade")]
        method: LinkMethod,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predictions against gold annotations.
    Evaluate {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        gold: PathBuf,
        /// Predictions; for `linking`, a corpus with identities.
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Link table for the `linking` task.
        #[arg(long)]
        links: Option<PathBuf>,
        /// Row label for the prediction file.
        #[arg(long, default_value = "pred")]
        name: String,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Term networks, tree maps and type proportions.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        what: ExportKind,
        /// Focus lemma of a term network.
        #[arg(long)]
        lemma: Option<String>,
        #[arg(long, value_enum, default_value = "document")]
        group_by: Grouping,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the link review service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        links: PathBuf,
        #[arg(long)]
        decisions: PathBuf,
    },
}

#[derive(Args)]
struct DetectionArgs {
    /// Lookup inventory (required by `lookup`).
    #[arg(long)]
    inventory: Option<PathBuf>,
    /// Treat pronouns as phrase heads in `parse`.
    #[arg(long)]
    include_pron: bool,
    /// Predicted tags and trees replacing those of the input.
    #[arg(long)]
    trees: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectMethod {
    Noun,
    Lookup,
    Parse,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpanSource {
    Noun,
    Lookup,
    Parse,
    File,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassifyMethod {
    Majority,
    Kb,
    Crf,
    Hybrid,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkMethod {
    Cascade,
    Exact,
    Head,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    Mentions,
    Classification,
    Linking,
    Agreement,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Network,
    Treemap,
    Proportions,
}

#[derive(Clone, Copy, ValueEnum)]
enum Grouping {
    Document,
    Corpus,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::InvalidArgument(_) => 2,
        _ => 3,
    }
}

fn kind(e: &Error) -> &'static str {
    match e {
        Error::Parse { .. } => "parse",
        Error::Validation(_) => "validation",
        Error::Decode(_) => "decode",
        Error::Nesting(..) => "nesting",
        Error::Numerical(_) => "numerical",
        Error::InvalidArgument(_) => "argument",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn emit(output: Option<&Path>, text: &str) -> nestrec::Result<()> {
    match output {
        Some(p) => Ok(write_atomic(p, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> nestrec::Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidArgument(format!("--{what} is required here")))
}

fn check_exists(paths: &[&Path]) -> nestrec::Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} does not exist", p.display()),
            )));
        }
    }
    Ok(())
}

fn load_with_trees(input: &Path, trees: Option<&Path>) -> nestrec::Result<Corpus> {
    let mut corpus = read_corpus(input)?;
    if let Some(t) = trees {
        overlay_trees(&mut corpus, &read_corpus(t)?)?;
    }
    Ok(corpus)
}

fn candidates(
    corpus: &Corpus,
    source: Source,
    args: &DetectionArgs,
) -> nestrec::Result<Vec<Vec<nestrec::mentions::MentionCandidate>>> {
    let inv = match (&args.inventory, source) {
        (Some(p), _) => Some(LookupInventory::load(p)?),
        (None, Source::Lookup) => return Err(Error::InvalidArgument("lookup detection needs --inventory".into())),
        (None, _) => None,
    };
    let cfg = ParseConfig {
        include_pron: args.include_pron,
    };
    detect_corpus(corpus, source, inv.as_ref(), cfg)
}

fn seed(flag: u64) -> nestrec::Result<u64> {
    match std::env::var("NESTREC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("NESTREC_SEED is not an integer: {v:?}"))),
        Err(_) => Ok(flag),
    }
}

fn write_report(r: &Report, json: Option<&Path>, tsv: Option<&Path>) -> nestrec::Result<()> {
    let j = serde_json::to_string_pretty(&r.to_json())? + "\n";
    if let Some(p) = json {
        write_atomic(p, &j)?;
    }
    if let Some(p) = tsv {
        write_atomic(p, r.to_tsv())?;
    }
    if json.is_none() && tsv.is_none() {
        print!("{}", r.to_tsv());
    }
    Ok(())
}

fn run(cli: Cli) -> nestrec::Result<()> {
    match cli.command {
        Command::Convert { input, output } => {
            let corpus = read_corpus(&input)?;
            let violations = validate_corpus(&corpus);
            if let Some(v) = violations.first() {
                return Err(Error::Validation(format!(
                    "{} violations; first: {v}",
                    violations.len()
                )));
            }
            emit(output.as_deref(), &serialize_conllu(&corpus)?)
        }
        Command::Validate { input } => {
            let corpus = read_corpus(&input)?;
            let violations = validate_corpus(&corpus);
            println!("{}", serde_json::to_string_pretty(&violations)?);
            if violations.is_empty() {
                Ok(())
            } else {
                Err(Error::Validation(format!("{} violations", violations.len())))
            }
        }
        Command::Detect {
            input,
            method,
            detection,
            output,
        } => {
            check_exists(&[&input])?;
            let source = match method {
                DetectMethod::Noun => Source::Noun,
                DetectMethod::Lookup => Source::Lookup,
                DetectMethod::Parse => Source::Parse,
            };
            if matches!(source, Source::Lookup) && detection.inventory.is_none() {
                return Err(Error::InvalidArgument("lookup detection needs --inventory".into()));
            }
            let corpus = load_with_trees(&input, detection.trees.as_deref())?;
            let cands = candidates(&corpus, source, &detection)?;
            let out = classify_corpus(&corpus, &cands, Strategy::Majority)?;
            emit(output.as_deref(), &serialize_conllu(&out)?)
        }
        Command::BuildInventory { train, out } => {
            let inv = build_lookup_inventory(&read_corpus(&train)?);
            inv.save(&out)?;
            eprintln!("{}", json!({ "entries": inv.len() }));
            Ok(())
        }
        Command::BuildKb { train, out } => {
            let kb = KnowledgeBase::from_training(&read_corpus(&train)?);
            kb.save(&out)?;
            eprintln!("{}", json!({ "entries": kb.len() }));
            Ok(())
        }
        Command::BuildLinks { corpora, out } => {
            let loaded = corpora.iter().map(read_corpus).collect::<nestrec::Result<Vec<_>>>()?;
            let refs: Vec<&Corpus> = loaded.iter().collect();
            build_link_table(&refs).save(&out)?;
            Ok(())
        }
        Command::Train {
            train,
            dev,
            out,
            trees,
            l2,
            max_iters,
            tol,
            seed: flag,
        } => {
            let mut paths = vec![train.as_path()];
            paths.extend(dev.as_deref());
            check_exists(&paths)?;
            let cfg = TrainConfig {
                l2,
                max_iters,
                tol,
                seed: seed(flag)?,
            };
            cfg.validate()?;
            let corpus = load_with_trees(&train, trees.as_deref())?;
            let (model, log) = train_entity_model(&corpus, &cfg)?;
            model.save(&out)?;
            let mut summary = json!({
                "objective": log.final_objective(),
                "iterations": log.iterations,
                "converged": log.converged,
                "features": model.n_features(),
            });
            if let Some(dev) = dev {
                summary["dev_token_accuracy"] = json!(token_accuracy(&model, &read_corpus(&dev)?)?);
            }
            println!("{summary}");
            Ok(())
        }
        Command::Classify {
            input,
            method,
            spans,
            detection,
            kb,
            model,
            o_threshold,
            discard_late,
            output,
        } => {
            check_exists(&[&input])?;
            let corpus = load_with_trees(&input, detection.trees.as_deref())?;
            let source = match spans {
                SpanSource::Noun => Source::Noun,
                SpanSource::Lookup => Source::Lookup,
                SpanSource::Parse => Source::Parse,
                SpanSource::File => Source::File,
            };
            let cands = candidates(&corpus, source, &detection)?;
            let cfg = HybridConfig {
                o_threshold,
                discard_first: !discard_late,
            };
            let kb = match method {
                ClassifyMethod::Kb | ClassifyMethod::Hybrid => Some(KnowledgeBase::load(require(&kb, "kb")?)?),
                _ => None,
            };
            let model = match method {
                ClassifyMethod::Crf | ClassifyMethod::Hybrid => Some(CrfModel::load(require(&model, "model")?)?),
                _ => None,
            };
            let strategy = match method {
                ClassifyMethod::Majority => Strategy::Majority,
                ClassifyMethod::Kb => Strategy::Kb(kb.as_ref().unwrap()),
                ClassifyMethod::Crf => Strategy::Crf(model.as_ref().unwrap(), cfg),
                ClassifyMethod::Hybrid => Strategy::Hybrid(kb.as_ref().unwrap(), model.as_ref().unwrap(), cfg),
            };
            let out = classify_corpus(&corpus, &cands, strategy)?;
            emit(output.as_deref(), &serialize_conllu(&out)?)
        }
        Command::Link {
            input,
            links,
            method,
            output,
        } => {
            let corpus = read_corpus(&input)?;
            let table = LinkTable::load(&links)?;
            let mut out = String::from("doc_id\tsent_id\tstart\tend\ttext\tarticle\tlevel\tsupport\n");
            for doc in &corpus.documents {
                for s in &doc.sentences {
                    for span in s.entities.iter().filter(|e| e.identity.is_none() && s.is_named(e)) {
                        let m = Mention::from_span(&doc.doc_id, &doc.corpus_id, s, span);
                        let (article, level, support) = match method {
                            LinkMethod::Cascade => match link_cascade(&m, &table) {
                                Some(sug) => (
                                    Some(sug.article),
                                    sug.rule_level.to_string(),
                                    sug.support_count.to_string(),
                                ),
                                None => (None, String::new(), String::new()),
                            },
                            LinkMethod::Exact => (link_exact_baseline(&m, &table), String::new(), String::new()),
                            LinkMethod::Head => (link_head_baseline(&m, &table), String::new(), String::new()),
                        };
                        out.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                            doc.doc_id,
                            s.sent_id,
                            span.start,
                            span.end,
                            m.text,
                            article.unwrap_or_default(),
                            level,
                            support
                        ));
                    }
                }
            }
            emit(output.as_deref(), &out)
        }
        Command::Evaluate {
            task,
            gold,
            pred,
            links,
            name,
            json,
            tsv,
        } => {
            let gold = read_corpus(&gold)?;
            let pred = pred.as_deref().map(read_corpus).transpose()?;
            let report = match task {
                Task::Mentions => mention_report(&gold, &[(&name, pred.as_ref().ok_or_else(|| missing("pred"))?)])?,
                Task::Classification => {
                    classification_report(&gold, &[(&name, pred.as_ref().ok_or_else(|| missing("pred"))?)])?
                }
                Task::Agreement => agreement_report(&gold, pred.as_ref().ok_or_else(|| missing("pred"))?)?,
                Task::Linking => {
                    let table = match (&links, &pred) {
                        (Some(p), _) => LinkTable::load(p)?,
                        (None, Some(p)) => build_link_table(&[p]),
                        (None, None) => return Err(missing("links")),
                    };
                    linking_report(&gold, &table)?
                }
            };
            write_report(&report, json.as_deref(), tsv.as_deref())
        }
        Command::Export {
            input,
            what,
            lemma,
            group_by,
            output,
        } => {
            let corpus = read_corpus(&input)?;
            let text = match what {
                ExportKind::Network => {
                    let lemma = lemma.ok_or_else(|| missing("lemma"))?;
                    serde_json::to_string_pretty(&term_network(&corpus, &lemma))? + "\n"
                }
                ExportKind::Treemap => serde_json::to_string_pretty(&treemap(&corpus))? + "\n",
                ExportKind::Proportions => {
                    let g = match group_by {
                        Grouping::Document => GroupBy::Document,
                        Grouping::Corpus => GroupBy::Corpus,
                    };
                    proportions_tsv(&type_proportions(&corpus, g))
                }
            };
            emit(output.as_deref(), &text)
        }
        Command::Serve {
            port,
            host,
            corpus,
            links,
            decisions,
        } => {
            check_exists(&[&corpus, &links])?;
            let state = AppState::open(read_corpus(&corpus)?, LinkTable::load(&links)?, &decisions)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                eprintln!("{}", json!({ "listening": listener.local_addr()?.to_string() }));
                serve(listener, state).await
            })?;
            Ok(())
        }
    }
}

fn missing(flag: &str) -> Error {
    Error::InvalidArgument(format!("--{flag} is required for this task"))
}

/// Share of tokens whose Viterbi label equals the gold head label.
fn token_accuracy(model: &CrfModel, corpus: &Corpus) -> nestrec::Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in corpus.sentences() {
        let pred = model.decode_sentence(s)?;
        let gold = nestrec::crf::gold_labels(s);
        total += gold.len();
        hit += pred
            .iter()
            .zip(&gold)
            .filter(|(p, g)| LabelSet::index(**p) == LabelSet::index(**g))
            .count();
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!(
                "{}",
                json!({ "error": kind(&e), "message": e.to_string(), "exit_code": code })
            );
            ExitCode::from(code)
        }
    }
}
