//! Review queue state for link decisions. The state is a pure function of
//! the input corpus, the base link table and the decision log.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{serialize_conllu, Corpus};
use crate::linker::{apply_one, link_cascade, Action, Level, LinkDecision, LinkSuggestion, LinkTable, Mention};
use crate::Result;

const CONTEXT: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Resolved,
}

#[derive(Clone, Debug)]
struct ItemCore {
    item_id: String,
    doc: usize,
    sent: usize,
    span: usize,
    mention: Mention,
    left_context: String,
    right_context: String,
}

/// A mention awaiting (or having received) a link decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub doc_id: String,
    pub sent_id: String,
    pub start: usize,
    pub end: usize,
    pub text: String,
    pub head_lemma: String,
    pub corpus_id: String,
    pub left_context: String,
    pub right_context: String,
    pub suggestion: Option<LinkSuggestion>,
    pub status: Status,
    pub decision_id: Option<String>,
    pub article: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct DecisionRequest {
    pub item_id: String,
    pub action: Action,
    #[serde(default)]
    pub article: Option<String>,
    #[serde(default)]
    pub annotator: String,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown item `{0}`")]
    NotFound(String),
    #[error("item `{0}` is already resolved")]
    AlreadyResolved(String),
    #[error("{0}")]
    Unprocessable(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArticleCount {
    pub article: String,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Stats {
    pub total: usize,
    pub pending: usize,
    pub resolved: usize,
    pub decisions: usize,
    /// Share of items for which the cascade currently has a suggestion.
    pub coverage: f64,
    /// Items per cascade level of their current suggestion.
    pub levels: HashMap<String, usize>,
    /// Known articles, most frequent first, for the article picker.
    pub articles: Vec<ArticleCount>,
}

/// Review state snapshot. Cheap to clone: the corpus and item list are
/// shared.
#[derive(Clone, Debug)]
pub struct ReviewState {
    corpus: Arc<Corpus>,
    items: Arc<Vec<ItemCore>>,
    index: Arc<HashMap<String, usize>>,
    resolution: Vec<Option<(String, String)>>,
    table: LinkTable,
    decisions: usize,
}

fn item_id(m: &Mention) -> String {
    let l = &m.locator;
    format!("{}/{}/{}-{}", l.doc_id, l.sent_id, l.start, l.end)
}

/// Minimal spans around each proper noun, kept when they are named and not
/// yet linked, in document order.
fn collect_items(corpus: &Corpus) -> Vec<ItemCore> {
    let mut out = Vec::new();
    for (d, doc) in corpus.documents.iter().enumerate() {
        for (si, s) in doc.sentences.iter().enumerate() {
            let mut picked: Vec<usize> = s
                .tokens
                .iter()
                .filter(|t| t.is_propn())
                .filter_map(|t| {
                    (0..s.entities.len())
                        .filter(|&k| s.entities[k].covers(t.id))
                        .min_by_key(|&k| (s.entities[k].len(), k))
                })
                .filter(|&k| s.entities[k].identity.is_none() && s.is_named(&s.entities[k]))
                .collect();
            picked.sort_by_key(|&k| (s.entities[k].start, std::cmp::Reverse(s.entities[k].end), k));
            picked.dedup_by_key(|k| (s.entities[*k].start, s.entities[*k].end));
            for k in picked {
                let span = &s.entities[k];
                let mention = Mention::from_span(&doc.doc_id, &doc.corpus_id, s, span);
                let left_from = span.start.saturating_sub(CONTEXT).max(1);
                let right_to = (span.end + CONTEXT).min(s.len());
                out.push(ItemCore {
                    item_id: item_id(&mention),
                    doc: d,
                    sent: si,
                    span: k,
                    left_context: if span.start > 1 {
                        s.text(left_from, span.start - 1)
                    } else {
                        String::new()
                    },
                    right_context: if span.end < s.len() {
                        s.text(span.end + 1, right_to)
                    } else {
                        String::new()
                    },
                    mention,
                });
            }
        }
    }
    out
}

impl ReviewState {
    pub fn new(corpus: Corpus, table: LinkTable) -> ReviewState {
        let items = collect_items(&corpus);
        let index = items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.item_id.clone(), i))
            .collect();
        ReviewState {
            resolution: vec![None; items.len()],
            corpus: Arc::new(corpus),
            items: Arc::new(items),
            index: Arc::new(index),
            table,
            decisions: 0,
        }
    }

    /// Rebuilds the state reached after applying `log` in order.
    pub fn replay(corpus: Corpus, table: LinkTable, log: &[LinkDecision]) -> Result<ReviewState> {
        let mut state = ReviewState::new(corpus, table);
        for d in log {
            state.apply(d)?;
        }
        Ok(state)
    }

    pub fn table(&self) -> &LinkTable {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn view(&self, i: usize) -> ReviewItem {
        let core = &self.items[i];
        let res = &self.resolution[i];
        let l = &core.mention.locator;
        ReviewItem {
            item_id: core.item_id.clone(),
            doc_id: l.doc_id.clone(),
            sent_id: l.sent_id.clone(),
            start: l.start,
            end: l.end,
            text: core.mention.text.clone(),
            head_lemma: core.mention.head_lemma.clone(),
            corpus_id: core.mention.corpus_id.clone(),
            left_context: core.left_context.clone(),
            right_context: core.right_context.clone(),
            suggestion: link_cascade(&core.mention, &self.table),
            status: if res.is_some() {
                Status::Resolved
            } else {
                Status::Pending
            },
            decision_id: res.as_ref().map(|r| r.0.clone()),
            article: res.as_ref().map(|r| r.1.clone()),
        }
    }

    pub fn item(&self, item_id: &str) -> Option<ReviewItem> {
        self.index.get(item_id).map(|&i| self.view(i))
    }

    /// Up to `limit` pending items in document order.
    pub fn queue(&self, limit: usize) -> Vec<ReviewItem> {
        (0..self.items.len())
            .filter(|&i| self.resolution[i].is_none())
            .take(limit)
            .map(|i| self.view(i))
            .collect()
    }

    /// Validates a request against the current snapshot and turns it into a
    /// decision record; the state itself is not changed.
    pub fn decide(
        &self,
        req: &DecisionRequest,
        decision_id: String,
        timestamp: u64,
    ) -> std::result::Result<LinkDecision, ReviewError> {
        let &i = self
            .index
            .get(&req.item_id)
            .ok_or_else(|| ReviewError::NotFound(req.item_id.clone()))?;
        if self.resolution[i].is_some() {
            return Err(ReviewError::AlreadyResolved(req.item_id.clone()));
        }
        let mention = &self.items[i].mention;
        let suggested = link_cascade(mention, &self.table).map(|s| s.article);
        let article = match req.action {
            Action::Accept => Some(suggested.ok_or_else(|| ReviewError::Unprocessable("nothing to accept".into()))?),
            Action::Reject => suggested,
            Action::Assign => Some(
                req.article
                    .clone()
                    .filter(|a| !a.trim().is_empty())
                    .ok_or_else(|| ReviewError::Unprocessable("assign requires an article".into()))?,
            ),
        };
        if let Some(a) = &article {
            if a.contains(['\t', '\n', '\u{1f}']) {
                return Err(ReviewError::Unprocessable("article contains control characters".into()));
            }
        }
        Ok(LinkDecision {
            decision_id,
            mention: mention.clone(),
            action: req.action,
            article: article.map(|a| a.replace(' ', "_")),
            timestamp,
            annotator: req.annotator.clone(),
        })
    }

    /// Applies a logged decision. Unknown mentions are an error; repeated
    /// decision ids are ignored.
    pub fn apply(&mut self, d: &LinkDecision) -> Result<()> {
        let &i = self
            .index
            .get(&item_id(&d.mention))
            .ok_or_else(|| crate::Error::Validation(format!("decision {} names an unknown mention", d.decision_id)))?;
        if !apply_one(&mut self.table, d)? {
            return Ok(());
        }
        self.decisions += 1;
        if d.action != Action::Reject && self.resolution[i].is_none() {
            let article = d.article.clone().expect("checked by apply_one");
            self.resolution[i] = Some((d.decision_id.clone(), article));
        }
        Ok(())
    }

    pub fn stats(&self) -> Stats {
        let mut levels: HashMap<String, usize> = Level::ALL.iter().map(|l| (l.to_string(), 0)).collect();
        let mut covered = 0;
        for it in self.items.iter() {
            if let Some(s) = link_cascade(&it.mention, &self.table) {
                covered += 1;
                *levels.get_mut(&s.rule_level.to_string()).unwrap() += 1;
            }
        }
        let resolved = self.resolution.iter().filter(|r| r.is_some()).count();
        Stats {
            total: self.items.len(),
            pending: self.items.len() - resolved,
            resolved,
            decisions: self.decisions,
            coverage: if self.items.is_empty() {
                0.0
            } else {
                covered as f64 / self.items.len() as f64
            },
            levels,
            articles: self
                .table
                .articles()
                .into_iter()
                .map(|(article, count)| ArticleCount { article, count })
                .collect(),
        }
    }

    /// The corpus with resolved links written into the entity annotations.
    pub fn export(&self) -> Result<String> {
        let mut corpus = (*self.corpus).clone();
        for (it, res) in self.items.iter().zip(&self.resolution) {
            if let Some((_, article)) = res {
                corpus.documents[it.doc].sentences[it.sent].entities[it.span].identity = Some(article.clone());
            }
        }
        serialize_conllu(&corpus)
    }

    /// Deterministic rendering of everything observable about the state.
    pub fn snapshot(&self) -> String {
        let items: Vec<ReviewItem> = (0..self.items.len()).map(|i| self.view(i)).collect();
        let mut out = serde_json::to_string(&items).expect("items serialize");
        out.push('\n');
        out.push_str(&self.table.to_tsv());
        out
    }
}
