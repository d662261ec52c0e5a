//! Candidate entity spans: the noun, lookup and parse strategies.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::corpus::{span_head, spans_cross, Corpus, DepTree, Sentence};
use crate::fsutil::write_atomic;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Noun,
    Lookup,
    Parse,
    /// Spans read from an annotated file.
    File,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Noun => "noun",
            Source::Lookup => "lookup",
            Source::Parse => "parse",
            Source::File => "file",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noun" => Ok(Source::Noun),
            "lookup" => Ok(Source::Lookup),
            "parse" => Ok(Source::Parse),
            "file" => Ok(Source::File),
            _ => Err(Error::InvalidArgument(format!("unknown detection method `{s}`"))),
        }
    }
}

/// An untyped candidate span with its head token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct MentionCandidate {
    pub start: usize,
    pub end: usize,
    pub head: usize,
    pub source: Source,
}

/// Which parts of speech head entity phrases.
#[derive(Clone, Copy, Debug, Default)]
pub struct ParseConfig {
    /// Also treat pronouns as phrase heads.
    pub include_pron: bool,
}

impl ParseConfig {
    fn is_head_pos(&self, upos: &str) -> bool {
        upos == "NOUN" || upos == "PROPN" || (self.include_pron && upos == "PRON")
    }
}

/// One singleton candidate per noun or proper noun.
pub fn detect_noun(sentence: &Sentence) -> Vec<MentionCandidate> {
    sentence
        .tokens
        .iter()
        .filter(|t| t.upos == "NOUN" || t.upos == "PROPN")
        .map(|t| MentionCandidate {
            start: t.id,
            end: t.id,
            head: t.id,
            source: Source::Noun,
        })
        .collect()
}

/// Token-form sequences attested as entity spans in training data.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LookupInventory {
    entries: BTreeSet<String>,
    max_len: usize,
}

impl LookupInventory {
    pub fn insert(&mut self, forms: &[&str]) {
        if forms.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(forms.len());
        self.entries.insert(forms.join(" "));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    /// One sequence per line, forms separated by single spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(e);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> LookupInventory {
        let mut inv = LookupInventory::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let forms: Vec<&str> = line.split(' ').collect();
            inv.insert(&forms);
        }
        inv
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LookupInventory> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }
}

/// Collects the form sequences of all gold spans in `train`.
pub fn build_lookup_inventory(train: &Corpus) -> LookupInventory {
    let mut inv = LookupInventory::default();
    for sent in train.sentences() {
        for span in &sent.entities {
            let forms: Vec<&str> = sent.tokens[span.start - 1..span.end]
                .iter()
                .map(|t| t.form.as_str())
                .collect();
            inv.insert(&forms);
        }
    }
    inv
}

/// Matches inventory sequences against the sentence. Nested matches are
/// kept; of two partially overlapping matches the longer wins, then the
/// leftmost.
pub fn detect_lookup(sentence: &Sentence, inv: &LookupInventory) -> Vec<MentionCandidate> {
    let n = sentence.len();
    let mut matches = Vec::new();
    for start in 1..=n {
        let mut key = String::new();
        for end in start..=(start + inv.max_len).saturating_sub(1).min(n) {
            if end > start {
                key.push(' ');
            }
            key.push_str(&sentence.token(end).form);
            if inv.contains(&key) {
                matches.push((start, end));
            }
        }
    }
    matches.sort_by_key(|&(s, e)| (std::cmp::Reverse(e - s), s));
    let mut kept: Vec<(usize, usize)> = Vec::new();
    for m in matches {
        if kept.iter().all(|&k| !spans_cross(k, m)) {
            kept.push(m);
        }
    }
    kept.sort_by_key(|&(s, e)| (s, std::cmp::Reverse(e)));
    kept.into_iter()
        .map(|(start, end)| MentionCandidate {
            start,
            end,
            head: span_head(start, end, &sentence.tokens).expect("match lies inside sentence"),
            source: Source::Lookup,
        })
        .collect()
}

/// Subtree projections of noun-headed phrases before conflict resolution,
/// edge punctuation trimmed.
pub fn parse_projections(sentence: &Sentence, tree: &DepTree, cfg: ParseConfig) -> Vec<MentionCandidate> {
    sentence
        .tokens
        .iter()
        .filter(|t| cfg.is_head_pos(&t.upos))
        .map(|t| {
            let (mut start, mut end) = tree.yield_bounds(t.id);
            while start < t.id && sentence.token(start).is_punct() {
                start += 1;
            }
            while end > t.id && sentence.token(end).is_punct() {
                end -= 1;
            }
            MentionCandidate {
                start,
                end,
                head: t.id,
                source: Source::Parse,
            }
        })
        .collect()
}

/// Spans of phrases headed by nouns. Crossing candidates (possible only in
/// non-projective trees) are resolved by dropping the one whose head is
/// deeper; on equal depth the leftmost start is kept.
pub fn detect_parse(sentence: &Sentence, cfg: ParseConfig) -> Result<Vec<MentionCandidate>> {
    let tree = sentence.tree()?;
    let mut cands = parse_projections(sentence, &tree, cfg);
    cands.sort_by_key(|c| (tree.depth(c.head), c.start, c.head));
    let mut kept: Vec<MentionCandidate> = Vec::with_capacity(cands.len());
    for c in cands {
        if kept.iter().all(|k| !spans_cross((k.start, k.end), (c.start, c.end))) {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| (c.start, std::cmp::Reverse(c.end), c.head));
    Ok(kept)
}

/// Runs one strategy over a sentence.
pub fn detect(
    sentence: &Sentence,
    source: Source,
    inv: Option<&LookupInventory>,
    cfg: ParseConfig,
) -> Result<Vec<MentionCandidate>> {
    match source {
        Source::Noun => Ok(detect_noun(sentence)),
        Source::Lookup => {
            let inv = inv.ok_or_else(|| Error::InvalidArgument("lookup needs an inventory".into()))?;
            Ok(detect_lookup(sentence, inv))
        }
        Source::Parse => detect_parse(sentence, cfg),
        Source::File => Ok(spans_as_candidates(sentence)),
    }
}

/// Runs one strategy over every sentence of a corpus, in corpus order.
pub fn detect_corpus(
    corpus: &Corpus,
    source: Source,
    inv: Option<&LookupInventory>,
    cfg: ParseConfig,
) -> Result<Vec<Vec<MentionCandidate>>> {
    use rayon::prelude::*;
    let sentences: Vec<&Sentence> = corpus.sentences().collect();
    sentences.par_iter().map(|s| detect(s, source, inv, cfg)).collect()
}

/// The entity spans already on a sentence, as untyped candidates.
pub fn spans_as_candidates(sentence: &Sentence) -> Vec<MentionCandidate> {
    sentence
        .entities
        .iter()
        .map(|e| MentionCandidate {
            start: e.start,
            end: e.end,
            head: e.head,
            source: Source::File,
        })
        .collect()
}

/// Distinct head positions, for diagnostics.
pub fn head_set(cands: &[MentionCandidate]) -> HashSet<usize> {
    cands.iter().map(|c| c.head).collect()
}
