//! Python bindings for the `nestrec` toolkit.

use nestrec::corpus::{parse_conllu, read_corpus, serialize_conllu, validate_corpus, write_corpus};
use nestrec::crf::{train_entity_model, CrfModel, TrainConfig};
use nestrec::distant::{proportions_tsv, term_network, treemap, type_proportions, GroupBy};
use nestrec::kb::{classify_corpus, HybridConfig, KnowledgeBase, Strategy};
use nestrec::linker::{build_link_table, evaluate_linking, link_cascade, LinkTable, Mention};
use nestrec::mentions::{build_lookup_inventory, detect_corpus, LookupInventory, ParseConfig, Source};
use nestrec::metrics::cohen_kappa;
use nestrec::report::{agreement_report, classification_report, linking_report, mention_report, Report};
use nestrec::review::{DecisionRequest, ReviewState};
use nestrec::Error;
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pythonize::pythonize;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, v)?)
}

/// A CoNLL-U corpus with nested entity annotations.
#[pyclass(name = "Corpus", module = "nestrec")]
struct PyCorpus {
    inner: nestrec::Corpus,
}

#[derive(Serialize)]
struct SpanRow<'a> {
    doc_id: &'a str,
    sent_id: &'a str,
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    etype: &'static str,
    head: usize,
    identity: Option<&'a str>,
    named: bool,
    text: String,
}

#[pymethods]
impl PyCorpus {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: parse_conllu(text).map_err(err)?,
        })
    }

    /// Reads a file; the partition is guessed from the file name.
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(PyCorpus {
            inner: read_corpus(path).map_err(err)?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        write_corpus(path, &self.inner).map_err(err)
    }

    fn to_conllu(&self) -> PyResult<String> {
        serialize_conllu(&self.inner).map_err(err)
    }

    /// Violations as dicts with `doc_id`, `sent_id`, `rule` and `detail`.
    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &validate_corpus(&self.inner))
    }

    #[getter]
    fn corpus_id(&self) -> &str {
        &self.inner.corpus_id
    }

    #[getter]
    fn sentence_count(&self) -> usize {
        self.inner.sentence_count()
    }

    #[getter]
    fn token_count(&self) -> usize {
        self.inner.token_count()
    }

    #[getter]
    fn entity_count(&self) -> usize {
        self.inner.entity_count()
    }

    fn entities<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let mut rows = Vec::new();
        for doc in &self.inner.documents {
            for s in &doc.sentences {
                for e in &s.entities {
                    rows.push(SpanRow {
                        doc_id: &doc.doc_id,
                        sent_id: &s.sent_id,
                        start: e.start,
                        end: e.end,
                        etype: e.etype.as_str(),
                        head: e.head,
                        identity: e.identity.as_deref(),
                        named: s.is_named(e),
                        text: s.text(e.start, e.end),
                    });
                }
            }
        }
        to_py(py, &rows)
    }

    /// A copy without entity annotations.
    fn stripped(&self) -> Self {
        let mut inner = self.inner.clone();
        inner.strip_entities();
        PyCorpus { inner }
    }

    fn term_network<'py>(&self, py: Python<'py>, lemma: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &term_network(&self.inner, lemma))
    }

    fn treemap<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &treemap(&self.inner))
    }

    /// Type proportions as TSV, grouped by `document` or `corpus`.
    #[pyo3(signature = (group_by = "document"))]
    fn proportions(&self, group_by: &str) -> PyResult<String> {
        let g = match group_by {
            "document" => GroupBy::Document,
            "corpus" => GroupBy::Corpus,
            _ => return Err(PyValueError::new_err("group_by must be `document` or `corpus`")),
        };
        Ok(proportions_tsv(&type_proportions(&self.inner, g)))
    }

    fn __len__(&self) -> usize {
        self.inner.sentence_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Corpus(id={:?}, sentences={}, tokens={}, entities={})",
            self.inner.corpus_id,
            self.inner.sentence_count(),
            self.inner.token_count(),
            self.inner.entity_count()
        )
    }
}

/// Span texts seen in training, for lookup detection.
#[pyclass(name = "Inventory", module = "nestrec")]
struct PyInventory {
    inner: LookupInventory,
}

#[pymethods]
impl PyInventory {
    #[staticmethod]
    fn from_training(train: &PyCorpus) -> Self {
        PyInventory {
            inner: build_lookup_inventory(&train.inner),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyInventory {
            inner: LookupInventory::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn __contains__(&self, key: &str) -> bool {
        self.inner.contains(key)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "KnowledgeBase", module = "nestrec")]
struct PyKnowledgeBase {
    inner: KnowledgeBase,
}

#[pymethods]
impl PyKnowledgeBase {
    #[staticmethod]
    fn from_training(train: &PyCorpus) -> Self {
        PyKnowledgeBase {
            inner: KnowledgeBase::from_training(&train.inner),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyKnowledgeBase {
            inner: KnowledgeBase::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    /// `(types, majority)` for a head lemma, or None.
    fn get(&self, lemma: &str) -> Option<(Vec<&'static str>, &'static str)> {
        self.inner
            .get(lemma)
            .map(|e| (e.types.iter().map(|t| t.as_str()).collect(), e.majority.as_str()))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// The CRF entity head labeller.
#[pyclass(name = "CrfModel", module = "nestrec")]
struct PyCrfModel {
    inner: CrfModel,
}

#[pymethods]
impl PyCrfModel {
    /// Trains on the gold entities of `train`; returns the model and a dict
    /// with the objective trace.
    #[staticmethod]
    #[pyo3(signature = (train, l2 = 1.0, max_iters = 200, tol = 1e-5, seed = 0))]
    fn train<'py>(
        py: Python<'py>,
        train: &PyCorpus,
        l2: f64,
        max_iters: usize,
        tol: f64,
        seed: u64,
    ) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let cfg = TrainConfig {
            l2,
            max_iters,
            tol,
            seed,
        };
        let corpus = train.inner.clone();
        let (model, log) = py.detach(move || train_entity_model(&corpus, &cfg)).map_err(err)?;
        Ok((PyCrfModel { inner: model }, to_py(py, &log)?))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyCrfModel {
            inner: CrfModel::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    /// Viterbi head labels for every sentence; None for `O`.
    fn decode(&self, corpus: &PyCorpus) -> PyResult<Vec<Vec<Option<&'static str>>>> {
        corpus
            .inner
            .sentences()
            .map(|s| {
                let labels = self.inner.decode_sentence(s).map_err(err)?;
                Ok(labels.into_iter().map(|l| l.map(|t| t.as_str())).collect())
            })
            .collect()
    }

    /// Per-token label posteriors of one sentence, in label order
    /// `O, abstract, animal, ...`.
    fn marginals(&self, corpus: &PyCorpus, sentence: usize) -> PyResult<Vec<Vec<f64>>> {
        let s = corpus
            .inner
            .sentences()
            .nth(sentence)
            .ok_or_else(|| PyKeyError::new_err(format!("no sentence {sentence}")))?;
        self.inner.sentence_marginals(s).map_err(err)
    }
}

#[pyclass(name = "LinkTable", module = "nestrec")]
struct PyLinkTable {
    inner: LinkTable,
}

#[pymethods]
impl PyLinkTable {
    /// Counts the gold links of the given corpora.
    #[staticmethod]
    fn build(corpora: Vec<PyRef<'_, PyCorpus>>) -> Self {
        let refs: Vec<&nestrec::Corpus> = corpora.iter().map(|c| &c.inner).collect();
        PyLinkTable {
            inner: build_link_table(&refs),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyLinkTable {
            inner: LinkTable::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    /// Cascade suggestions for the named, unlinked mentions of `corpus`.
    fn suggest<'py>(&self, py: Python<'py>, corpus: &PyCorpus) -> PyResult<Bound<'py, PyAny>> {
        #[derive(Serialize)]
        struct Row {
            mention: Mention,
            suggestion: Option<nestrec::linker::LinkSuggestion>,
        }
        let mut rows = Vec::new();
        for doc in &corpus.inner.documents {
            for s in &doc.sentences {
                for e in s.entities.iter().filter(|e| e.identity.is_none() && s.is_named(e)) {
                    let mention = Mention::from_span(&doc.doc_id, &doc.corpus_id, s, e);
                    let suggestion = link_cascade(&mention, &self.inner);
                    rows.push(Row { mention, suggestion });
                }
            }
        }
        to_py(py, &rows)
    }
}

fn source(name: &str) -> PyResult<Source> {
    name.parse().map_err(err)
}

/// Proposes spans with `noun`, `lookup` or `parse`; spans come back typed
/// `abstract`.
#[pyfunction]
#[pyo3(signature = (corpus, method, inventory = None, include_pron = false))]
fn detect(corpus: &PyCorpus, method: &str, inventory: Option<&PyInventory>, include_pron: bool) -> PyResult<PyCorpus> {
    classify(
        corpus,
        "majority",
        method,
        None,
        None,
        inventory,
        0.95,
        true,
        include_pron,
    )
}

/// Detects (or, with `spans="file"`, reuses) spans and types them with
/// `majority`, `kb`, `crf` or `hybrid`.
#[pyfunction]
#[pyo3(signature = (corpus, method, spans = "parse", kb = None, model = None, inventory = None,
                    o_threshold = 0.95, discard_first = true, include_pron = false))]
#[allow(clippy::too_many_arguments)]
fn classify(
    corpus: &PyCorpus,
    method: &str,
    spans: &str,
    kb: Option<&PyKnowledgeBase>,
    model: Option<&PyCrfModel>,
    inventory: Option<&PyInventory>,
    o_threshold: f64,
    discard_first: bool,
    include_pron: bool,
) -> PyResult<PyCorpus> {
    let cfg = HybridConfig {
        o_threshold,
        discard_first,
    };
    let need = |what: &str| PyValueError::new_err(format!("method `{method}` needs {what}"));
    let strategy = match method {
        "majority" => Strategy::Majority,
        "kb" => Strategy::Kb(&kb.ok_or_else(|| need("kb"))?.inner),
        "crf" => Strategy::Crf(&model.ok_or_else(|| need("model"))?.inner, cfg),
        "hybrid" => Strategy::Hybrid(
            &kb.ok_or_else(|| need("kb"))?.inner,
            &model.ok_or_else(|| need("model"))?.inner,
            cfg,
        ),
        _ => return Err(PyValueError::new_err(format!("unknown method `{method}`"))),
    };
    let cands = detect_corpus(
        &corpus.inner,
        source(spans)?,
        inventory.map(|i| &i.inner),
        ParseConfig { include_pron },
    )
    .map_err(err)?;
    Ok(PyCorpus {
        inner: classify_corpus(&corpus.inner, &cands, strategy).map_err(err)?,
    })
}

fn report<'py>(py: Python<'py>, r: Result<Report, Error>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &r.map_err(err)?.to_json())
}

/// Untyped exact and fuzzy span scores.
#[pyfunction]
fn mention_scores<'py>(py: Python<'py>, gold: &PyCorpus, pred: &PyCorpus) -> PyResult<Bound<'py, PyAny>> {
    report(py, mention_report(&gold.inner, &[("pred", &pred.inner)]))
}

/// Typed exact span and head match scores.
#[pyfunction]
fn classification_scores<'py>(py: Python<'py>, gold: &PyCorpus, pred: &PyCorpus) -> PyResult<Bound<'py, PyAny>> {
    report(py, classification_report(&gold.inner, &[("pred", &pred.inner)]))
}

/// Exact, head and cascade linking of the identified mentions of `test`.
#[pyfunction]
fn linking_scores<'py>(py: Python<'py>, test: &PyCorpus, table: &PyLinkTable) -> PyResult<Bound<'py, PyAny>> {
    report(py, linking_report(&test.inner, &table.inner))
}

/// Kappa, F1 and head accuracy between two annotations of the same text.
#[pyfunction]
fn agreement<'py>(py: Python<'py>, a: &PyCorpus, b: &PyCorpus) -> PyResult<Bound<'py, PyAny>> {
    report(py, agreement_report(&a.inner, &b.inner))
}

#[pyfunction]
fn kappa(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    cohen_kappa(&a, &b).map_err(err)
}

/// `(accuracy, coverage, no_err)` of link predictions (None = no answer).
#[pyfunction]
fn link_scores(gold: Vec<String>, predictions: Vec<Option<String>>) -> PyResult<(f64, f64, f64)> {
    let s = evaluate_linking(&gold, &predictions).map_err(err)?;
    Ok((s.accuracy, s.coverage, s.no_err))
}

/// In-memory link review state (no log persistence).
#[pyclass(name = "Review", module = "nestrec")]
struct PyReview {
    inner: ReviewState,
    next_id: u64,
}

#[pymethods]
impl PyReview {
    #[new]
    fn new(corpus: &PyCorpus, table: &PyLinkTable) -> Self {
        PyReview {
            inner: ReviewState::new(corpus.inner.clone(), table.inner.clone()),
            next_id: 0,
        }
    }

    #[pyo3(signature = (limit = 50))]
    fn queue<'py>(&self, py: Python<'py>, limit: usize) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.queue(limit))
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.stats())
    }

    /// Records `accept`, `reject` or `assign` for an item; returns the
    /// updated item.
    #[pyo3(signature = (item_id, action, article = None, annotator = String::new()))]
    fn decide<'py>(
        &mut self,
        py: Python<'py>,
        item_id: String,
        action: &str,
        article: Option<String>,
        annotator: String,
    ) -> PyResult<Bound<'py, PyAny>> {
        let req = DecisionRequest {
            item_id: item_id.clone(),
            action: action.parse().map_err(err)?,
            article,
            annotator,
        };
        self.next_id += 1;
        let d = self
            .inner
            .decide(&req, format!("py-{}", self.next_id), 0)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        self.inner.apply(&d).map_err(err)?;
        to_py(py, &self.inner.item(&item_id))
    }

    /// The corpus with resolved links, as CoNLL-U.
    fn export(&self) -> PyResult<String> {
        self.inner.export().map_err(err)
    }
}

#[pymodule]
#[pyo3(name = "nestrec")]
fn nestrec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCorpus>()?;
    m.add_class::<PyInventory>()?;
    m.add_class::<PyKnowledgeBase>()?;
    m.add_class::<PyCrfModel>()?;
    m.add_class::<PyLinkTable>()?;
    m.add_class::<PyReview>()?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(mention_scores, m)?)?;
    m.add_function(wrap_pyfunction!(classification_scores, m)?)?;
    m.add_function(wrap_pyfunction!(linking_scores, m)?)?;
    m.add_function(wrap_pyfunction!(agreement, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(link_scores, m)?)?;
    Ok(())
}
