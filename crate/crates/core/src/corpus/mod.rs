//! Dependency-annotated corpora with nested entity annotations.
//!
//! Corpora are read from and written to CoNLL-U. Entity spans are stored in
//! the MISC column under the `Entity` key using a bracket notation, see
//! [`encode_entities`] and [`decode_entities`].

mod conllu;
mod entities;
mod tree;
mod validate;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use conllu::{overlay_trees, parse_conllu, parse_conllu_with, read_corpus, serialize_conllu, write_corpus};
pub use entities::{decode_entities, encode_entities, span_head, spans_cross};
pub use tree::DepTree;
pub use validate::{validate_corpus, validate_sentence, Rule, Violation};

/// The ten entity categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Abstract,
    Animal,
    Event,
    Object,
    Organization,
    Person,
    Place,
    Plant,
    Substance,
    Time,
}

impl EntityType {
    /// All types in alphabetical order.
    pub const ALL: [EntityType; 10] = [
        EntityType::Abstract,
        EntityType::Animal,
        EntityType::Event,
        EntityType::Object,
        EntityType::Organization,
        EntityType::Person,
        EntityType::Place,
        EntityType::Plant,
        EntityType::Substance,
        EntityType::Time,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Abstract => "abstract",
            EntityType::Animal => "animal",
            EntityType::Event => "event",
            EntityType::Object => "object",
            EntityType::Organization => "organization",
            EntityType::Person => "person",
            EntityType::Place => "place",
            EntityType::Plant => "plant",
            EntityType::Substance => "substance",
            EntityType::Time => "time",
        }
    }

    /// Position in [`EntityType::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EntityType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Decode(format!("unknown entity type `{s}`")))
    }
}

/// Ordered MISC attributes of a token, excluding the `Entity` key.
///
/// The position the `Entity` key occupied is remembered so that
/// serialization puts it back in the same place.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Misc {
    entries: Vec<(String, Option<String>)>,
    entity_slot: Option<usize>,
}

impl Misc {
    pub(crate) const ENTITY_KEY: &'static str = "Entity";

    /// Splits a raw MISC column, returning the attributes and the raw
    /// `Entity` value if present.
    pub(crate) fn parse(raw: &str) -> (Misc, Option<String>) {
        let mut misc = Misc::default();
        let mut entity = None;
        if raw == "_" || raw.is_empty() {
            return (misc, None);
        }
        for part in raw.split('|') {
            let (key, value) = match part.split_once('=') {
                Some((k, v)) => (k.to_string(), Some(v.to_string())),
                None => (part.to_string(), None),
            };
            if key == Self::ENTITY_KEY && entity.is_none() {
                misc.entity_slot = Some(misc.entries.len());
                entity = Some(value.unwrap_or_default());
            } else {
                misc.entries.push((key, value));
            }
        }
        (misc, entity)
    }

    /// Renders the column, inserting `entity` at its remembered slot (or at
    /// the end when the token had no `Entity` key before).
    pub(crate) fn render(&self, entity: Option<&str>) -> String {
        let mut parts: Vec<String> = self
            .entries
            .iter()
            .map(|(k, v)| match v {
                Some(v) => format!("{k}={v}"),
                None => k.clone(),
            })
            .collect();
        if let Some(e) = entity {
            let slot = self.entity_slot.unwrap_or(parts.len()).min(parts.len());
            parts.insert(slot, format!("{}={e}", Self::ENTITY_KEY));
        }
        if parts.is_empty() {
            "_".to_string()
        } else {
            parts.join("|")
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .and_then(|(_, v)| v.as_deref())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = Some(value.to_string()),
            None => self.entries.push((key.to_string(), Some(value.to_string()))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Option<&str>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_deref()))
    }
}

/// One syntactic word of a sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    /// 1-based position in the sentence.
    pub id: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    /// Governor position, 0 for the root.
    pub head: usize,
    pub deprel: String,
    pub deps: String,
    pub misc: Misc,
    /// Multiword-token or empty-node lines that preceded this token.
    pub pre_lines: Vec<String>,
}

impl Token {
    /// A token with the given core columns; the remaining columns are `_`.
    pub fn new(id: usize, form: &str, lemma: &str, upos: &str, head: usize, deprel: &str) -> Token {
        Token {
            id,
            form: form.to_string(),
            lemma: lemma.to_string(),
            upos: upos.to_string(),
            xpos: "_".to_string(),
            feats: "_".to_string(),
            head,
            deprel: deprel.to_string(),
            deps: "_".to_string(),
            misc: Misc::default(),
            pre_lines: Vec::new(),
        }
    }

    pub fn is_punct(&self) -> bool {
        self.upos == "PUNCT"
    }

    pub fn is_propn(&self) -> bool {
        self.upos == "PROPN"
    }
}

/// A typed, possibly nested entity mention over an inclusive token range.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub etype: EntityType,
    pub head: usize,
    pub entity_id: u32,
    /// Linked article identifier (title with `_` for spaces).
    pub identity: Option<String>,
}

impl EntitySpan {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, other: &EntitySpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn covers(&self, token: usize) -> bool {
        self.start <= token && token <= self.end
    }

    /// Canonical ordering key: start ascending, end descending, id ascending.
    pub(crate) fn order_key(&self) -> (usize, std::cmp::Reverse<usize>, u32) {
        (self.start, std::cmp::Reverse(self.end), self.entity_id)
    }
}

/// Sorts spans into canonical order (outer spans before the spans they contain).
pub fn sort_spans(spans: &mut [EntitySpan]) {
    spans.sort_by_key(|s| s.order_key());
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub sent_id: String,
    /// Comment lines (without the leading `#`) in input order.
    pub comments: Vec<String>,
    pub tokens: Vec<Token>,
    pub entities: Vec<EntitySpan>,
    /// Empty-node lines following the last token.
    pub trailing_lines: Vec<String>,
}

impl Sentence {
    /// A sentence carrying a `sent_id` comment.
    pub fn new(sent_id: &str, tokens: Vec<Token>) -> Sentence {
        Sentence {
            sent_id: sent_id.to_string(),
            comments: vec![format!(" sent_id = {sent_id}")],
            tokens,
            entities: Vec::new(),
            trailing_lines: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token at a 1-based position.
    pub fn token(&self, id: usize) -> &Token {
        &self.tokens[id - 1]
    }

    /// Forms of the tokens in `[start, end]` joined by single spaces.
    pub fn text(&self, start: usize, end: usize) -> String {
        self.tokens[start - 1..end]
            .iter()
            .map(|t| t.form.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// A span is named iff its head token is a proper noun.
    pub fn is_named(&self, span: &EntitySpan) -> bool {
        span.head >= 1 && span.head <= self.len() && self.token(span.head).is_propn()
    }

    pub fn tree(&self) -> Result<DepTree> {
        DepTree::new(&self.tokens)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
    Unlabeled,
}

impl Partition {
    /// Guesses the partition from a file name such as `xx-ud-train.conllu`.
    pub fn from_file_name(name: &str) -> Partition {
        let lower = name.to_lowercase();
        if lower.contains("train") {
            Partition::Train
        } else if lower.contains("dev") {
            Partition::Dev
        } else if lower.contains("test") {
            Partition::Test
        } else {
            Partition::Unlabeled
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    /// Sub-corpus the document belongs to; keys the in-corpus link levels.
    pub corpus_id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    /// Corpus id derived from a document id of the form `corpus:document`.
    pub fn corpus_of(doc_id: &str, fallback: &str) -> String {
        match doc_id.split_once(':') {
            Some((prefix, _)) if !prefix.is_empty() => prefix.to_string(),
            _ => fallback.to_string(),
        }
    }

    pub fn entity_count(&self) -> usize {
        self.sentences.iter().map(|s| s.entities.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corpus {
    pub corpus_id: String,
    pub documents: Vec<Document>,
    pub partition: Partition,
}

impl Corpus {
    pub fn new(corpus_id: &str, partition: Partition) -> Corpus {
        Corpus {
            corpus_id: corpus_id.to_string(),
            documents: Vec::new(),
            partition,
        }
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentences_mut(&mut self) -> impl Iterator<Item = &mut Sentence> {
        self.documents.iter_mut().flat_map(|d| d.sentences.iter_mut())
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn token_count(&self) -> usize {
        self.sentences().map(|s| s.len()).sum()
    }

    pub fn entity_count(&self) -> usize {
        self.documents.iter().map(|d| d.entity_count()).sum()
    }

    /// Reassigns entity ids 1.. in document order so they are unique per
    /// document.
    pub fn renumber_entities(&mut self) {
        for doc in &mut self.documents {
            let mut next = 1u32;
            for sent in &mut doc.sentences {
                sort_spans(&mut sent.entities);
                for span in &mut sent.entities {
                    span.entity_id = next;
                    next += 1;
                }
            }
        }
    }

    /// Removes all entity annotations, keeping the trees.
    pub fn strip_entities(&mut self) {
        for sent in self.sentences_mut() {
            sent.entities.clear();
        }
    }

    pub(crate) fn check_unique_doc_ids(&self) -> Option<String> {
        let mut seen = HashSet::new();
        self.documents
            .iter()
            .find(|d| !seen.insert(d.doc_id.as_str()))
            .map(|d| d.doc_id.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entity_type_strings() {
        assert_eq!(EntityType::ALL.len(), 10);
        for t in EntityType::ALL {
            assert_eq!(t.as_str().parse::<EntityType>().unwrap(), t);
            assert!(t.as_str().chars().all(|c| c.is_ascii_lowercase()));
        }
        let mut sorted = EntityType::ALL.map(|t| t.as_str());
        sorted.sort();
        assert_eq!(sorted, EntityType::ALL.map(|t| t.as_str()));
        assert!("Person".parse::<EntityType>().is_err());
    }

    #[test]
    fn misc_keeps_entity_slot() {
        let (misc, ent) = Misc::parse("A=1|Entity=(person-1)|SpaceAfter=No");
        assert_eq!(ent.as_deref(), Some("(person-1)"));
        assert_eq!(misc.get("A"), Some("1"));
        assert_eq!(misc.render(Some("(person-1)")), "A=1|Entity=(person-1)|SpaceAfter=No");
        assert_eq!(misc.render(None), "A=1|SpaceAfter=No");
        let (empty, none) = Misc::parse("_");
        assert!(none.is_none());
        assert_eq!(empty.render(None), "_");
        assert_eq!(empty.render(Some("1)")), "Entity=1)");
    }

    #[test]
    fn corpus_of_document() {
        assert_eq!(Document::corpus_of("sahidica.mark:01", "x"), "sahidica.mark");
        assert_eq!(Document::corpus_of("plain", "x"), "x");
    }

    #[test]
    fn partition_from_name() {
        assert_eq!(
            Partition::from_file_name("cop_scriptorium-ud-train.conllu"),
            Partition::Train
        );
        assert_eq!(
            Partition::from_file_name("cop_scriptorium-ud-dev.conllu"),
            Partition::Dev
        );
        assert_eq!(Partition::from_file_name("x-test.conllu"), Partition::Test);
        assert_eq!(Partition::from_file_name("other.conllu"), Partition::Unlabeled);
    }
}
