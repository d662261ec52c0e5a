//! Cascaded entity linking over frequency tables of past links, with the
//! exact-text and head-lemma baselines.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EntitySpan, Sentence};
use crate::fsutil::write_atomic;
use crate::{Error, Result};

const KEY_SEP: char = '\u{1f}';

/// Cascade step, from most to least specific.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Level {
    CorpusText = 1,
    Text = 2,
    CorpusHead = 3,
    Head = 4,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::CorpusText, Level::Text, Level::CorpusHead, Level::Head];

    pub fn code(self) -> &'static str {
        match self {
            Level::CorpusText => "ct",
            Level::Text => "t",
            Level::CorpusHead => "ch",
            Level::Head => "h",
        }
    }

    fn from_code(code: &str) -> Option<Level> {
        Level::ALL.into_iter().find(|l| l.code() == code)
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l as u8
    }
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Level, String> {
        Level::ALL
            .get((v as usize).wrapping_sub(1))
            .copied()
            .ok_or(format!("bad level {v}"))
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", *self as u8)
    }
}

/// Where a mention sits in a corpus.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MentionLocator {
    pub doc_id: String,
    pub sent_id: String,
    pub start: usize,
    pub end: usize,
}

/// A mention to be linked, with the keys the cascade looks up.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub locator: MentionLocator,
    pub text: String,
    pub head_lemma: String,
    pub corpus_id: String,
}

impl Mention {
    pub fn from_span(doc_id: &str, corpus_id: &str, sentence: &Sentence, span: &EntitySpan) -> Mention {
        Mention {
            locator: MentionLocator {
                doc_id: doc_id.to_string(),
                sent_id: sentence.sent_id.clone(),
                start: span.start,
                end: span.end,
            },
            text: sentence.text(span.start, span.end),
            head_lemma: sentence.token(span.head).lemma.clone(),
            corpus_id: corpus_id.to_string(),
        }
    }

    fn key(&self, level: Level) -> String {
        match level {
            Level::CorpusText => format!("{}{KEY_SEP}{}", self.corpus_id, self.text),
            Level::Text => self.text.clone(),
            Level::CorpusHead => format!("{}{KEY_SEP}{}", self.corpus_id, self.head_lemma),
            Level::Head => self.head_lemma.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSuggestion {
    pub article: String,
    pub rule_level: Level,
    pub support_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Accept,
    Reject,
    Assign,
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Action> {
        match s {
            "accept" => Ok(Action::Accept),
            "reject" => Ok(Action::Reject),
            "assign" => Ok(Action::Assign),
            _ => Err(Error::InvalidArgument(format!("unknown action `{s}`"))),
        }
    }
}

/// One reviewer decision, as stored in the decision log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDecision {
    pub decision_id: String,
    pub mention: Mention,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub article: Option<String>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub annotator: String,
}

type Counts = BTreeMap<String, u64>;

/// Article frequencies at the four cascade levels, plus the rejections and
/// applied decision ids carried over from review.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkTable {
    levels: [BTreeMap<String, Counts>; 4],
    suppressed: BTreeMap<MentionLocator, BTreeSet<String>>,
    applied: HashSet<String>,
}

fn best<'a>(counts: &'a Counts, skip: Option<&BTreeSet<String>>) -> Option<(&'a str, u64)> {
    let mut out: Option<(&'a str, u64)> = None;
    // ascending key order, strict comparison: ties keep the smallest article
    for (article, &n) in counts {
        if skip.is_some_and(|s| s.contains(article)) {
            continue;
        }
        if out.is_none_or(|(_, m)| n > m) {
            out = Some((article, n));
        }
    }
    out
}

impl LinkTable {
    pub fn is_empty(&self) -> bool {
        self.levels.iter().all(BTreeMap::is_empty)
    }

    /// Counts for one key at one level.
    pub fn counts(&self, level: Level, key: &str) -> Option<&BTreeMap<String, u64>> {
        self.levels[level as usize - 1].get(key)
    }

    /// Records `n` more links from `mention` to `article` at all levels.
    pub fn add(&mut self, mention: &Mention, article: &str, n: u64) {
        for level in Level::ALL {
            *self.levels[level as usize - 1]
                .entry(mention.key(level))
                .or_default()
                .entry(article.to_string())
                .or_default() += n;
        }
    }

    /// Every article the table knows, by total frequency then name.
    pub fn articles(&self) -> Vec<(String, u64)> {
        let mut totals: BTreeMap<&str, u64> = BTreeMap::new();
        for counts in self.levels[Level::Head as usize - 1].values() {
            for (a, n) in counts {
                *totals.entry(a).or_default() += n;
            }
        }
        let mut out: Vec<(String, u64)> = totals.into_iter().map(|(a, n)| (a.to_string(), n)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }

    pub fn suppressed(&self, locator: &MentionLocator) -> Option<&BTreeSet<String>> {
        self.suppressed.get(locator)
    }

    fn lookup(&self, level: Level, mention: &Mention) -> Option<LinkSuggestion> {
        let counts = self.counts(level, &mention.key(level))?;
        let (article, n) = best(counts, self.suppressed.get(&mention.locator))?;
        Some(LinkSuggestion {
            article: article.to_string(),
            rule_level: level,
            support_count: n,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for level in Level::ALL {
            for (key, counts) in &self.levels[level as usize - 1] {
                for (article, n) in counts {
                    let _ = writeln!(out, "{}\t{key}\t{article}\t{n}", level.code());
                }
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<LinkTable> {
        let mut table = LinkTable::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| Error::Parse {
                line: i + 1,
                message: message.to_string(),
            };
            let cols: Vec<&str> = line.split('\t').collect();
            let [level, key, article, count] = cols[..] else {
                return Err(err("expected 4 columns"));
            };
            let level = Level::from_code(level).ok_or_else(|| err("unknown level"))?;
            let n: u64 = count.parse().map_err(|_| err("bad count"))?;
            if n == 0 {
                return Err(err("counts must be positive"));
            }
            *table.levels[level as usize - 1]
                .entry(key.to_string())
                .or_default()
                .entry(article.to_string())
                .or_default() += n;
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_atomic(path, self.to_tsv())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LinkTable> {
        LinkTable::from_tsv(&std::fs::read_to_string(path)?)
    }
}

/// Every span with a gold identity, as a mention with its article.
pub fn linked_mentions(corpus: &Corpus) -> Vec<(Mention, String)> {
    let mut out = Vec::new();
    for doc in &corpus.documents {
        for s in &doc.sentences {
            for span in &s.entities {
                if let Some(article) = &span.identity {
                    out.push((
                        Mention::from_span(&doc.doc_id, &doc.corpus_id, s, span),
                        article.clone(),
                    ));
                }
            }
        }
    }
    out
}

/// Counts every linked mention of the given corpora.
pub fn build_link_table(corpora: &[&Corpus]) -> LinkTable {
    let mut table = LinkTable::default();
    for corpus in corpora {
        for (m, article) in linked_mentions(corpus) {
            table.add(&m, &article, 1);
        }
    }
    table
}

/// The first cascade level with an unsuppressed article for the mention.
pub fn link_cascade(mention: &Mention, table: &LinkTable) -> Option<LinkSuggestion> {
    Level::ALL.into_iter().find_map(|l| table.lookup(l, mention))
}

/// Most frequent article for the exact mention text.
pub fn link_exact_baseline(mention: &Mention, table: &LinkTable) -> Option<String> {
    table.lookup(Level::Text, mention).map(|s| s.article)
}

/// Most frequent article for the head lemma.
pub fn link_head_baseline(mention: &Mention, table: &LinkTable) -> Option<String> {
    table.lookup(Level::Head, mention).map(|s| s.article)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinkScores {
    pub accuracy: f64,
    pub coverage: f64,
    pub no_err: f64,
}

/// Accuracy, coverage and share of mentions without a wrong link.
pub fn evaluate_linking(gold: &[String], predictions: &[Option<String>]) -> Result<LinkScores> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument("no gold links to evaluate".into()));
    }
    if gold.len() != predictions.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} gold links",
            predictions.len(),
            gold.len()
        )));
    }
    let n = gold.len() as f64;
    let correct = gold
        .iter()
        .zip(predictions)
        .filter(|(g, p)| p.as_ref() == Some(*g))
        .count() as f64;
    let answered = predictions.iter().filter(|p| p.is_some()).count() as f64;
    Ok(LinkScores {
        accuracy: correct / n,
        coverage: answered / n,
        no_err: (correct + n - answered) / n,
    })
}

/// Applies reviewer decisions to a copy of the table. Decisions already
/// applied (by id) are skipped.
pub fn apply_decisions(table: &LinkTable, decisions: &[LinkDecision]) -> Result<LinkTable> {
    let mut out = table.clone();
    for d in decisions {
        apply_one(&mut out, d)?;
    }
    Ok(out)
}

/// Applies one decision; `false` when its id was already applied.
pub(crate) fn apply_one(table: &mut LinkTable, d: &LinkDecision) -> Result<bool> {
    if table.applied.contains(&d.decision_id) {
        return Ok(false);
    }
    let article = d.article.as_deref().filter(|a| !a.is_empty());
    match (d.action, article) {
        (Action::Accept | Action::Assign, Some(a)) => table.add(&d.mention, a, 1),
        (Action::Reject, Some(a)) => {
            table
                .suppressed
                .entry(d.mention.locator.clone())
                .or_default()
                .insert(a.to_string());
        }
        (Action::Reject, None) => {}
        (action, None) => {
            return Err(Error::InvalidArgument(format!("{action:?} decision without article")));
        }
    }
    table.applied.insert(d.decision_id.clone());
    Ok(true)
}
