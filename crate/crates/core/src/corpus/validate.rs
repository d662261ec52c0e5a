use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{entities::spans_cross, Corpus, DepTree, Sentence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    TokenIndex,
    HeadRange,
    Cycle,
    RootCount,
    SpanRange,
    SpanHead,
    Crossing,
    DuplicateEntityId,
    IdentityOnUnnamed,
    DuplicateSentId,
    DuplicateDocId,
    EmptyDocId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub doc_id: String,
    pub sent_id: String,
    pub rule: Rule,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{:?}\t{}", self.doc_id, self.sent_id, self.rule, self.detail)
    }
}

/// Checks the structural invariants of a single sentence. `doc_id` is only
/// used to label the findings.
pub fn validate_sentence(doc_id: &str, sent: &Sentence) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |rule, detail: String| {
        out.push(Violation {
            doc_id: doc_id.to_string(),
            sent_id: sent.sent_id.clone(),
            rule,
            detail,
        })
    };
    let n = sent.len();

    for (i, tok) in sent.tokens.iter().enumerate() {
        if tok.id != i + 1 {
            push(
                Rule::TokenIndex,
                format!("token at position {} has index {}", i + 1, tok.id),
            );
        }
        if tok.head > n || tok.head == tok.id {
            push(Rule::HeadRange, format!("token {} has head {}", tok.id, tok.head));
        }
    }
    let heads_ok = sent
        .tokens
        .iter()
        .enumerate()
        .all(|(i, t)| t.id == i + 1 && t.head <= n && t.head != t.id);
    if heads_ok && n > 0 {
        match DepTree::new(&sent.tokens) {
            Ok(tree) => {
                if tree.roots().len() != 1 {
                    push(Rule::RootCount, format!("{} root tokens", tree.roots().len()));
                }
            }
            Err(e) => push(Rule::Cycle, e.to_string()),
        }
    }

    for s in &sent.entities {
        if s.start == 0 || s.start > s.end || s.end > n {
            push(
                Rule::SpanRange,
                format!("entity {} spans [{},{}]", s.entity_id, s.start, s.end),
            );
            continue;
        }
        if s.head < s.start || s.head > s.end {
            push(
                Rule::SpanHead,
                format!("entity {} head {} outside [{},{}]", s.entity_id, s.head, s.start, s.end),
            );
        }
        if s.identity.is_some() && !sent.is_named(s) {
            push(
                Rule::IdentityOnUnnamed,
                format!("entity {} has an identity but its head is not PROPN", s.entity_id),
            );
        }
    }
    for (i, a) in sent.entities.iter().enumerate() {
        for b in &sent.entities[i + 1..] {
            if spans_cross((a.start, a.end), (b.start, b.end)) {
                push(
                    Rule::Crossing,
                    format!("[{},{}] and [{},{}] cross", a.start, a.end, b.start, b.end),
                );
            }
        }
    }
    out
}

/// Returns every invariant violation in the corpus; empty iff it is valid.
pub fn validate_corpus(corpus: &Corpus) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut doc_ids = HashSet::new();
    for doc in &corpus.documents {
        let violation = |rule, sent_id: &str, detail: String| Violation {
            doc_id: doc.doc_id.clone(),
            sent_id: sent_id.to_string(),
            rule,
            detail,
        };
        if doc.doc_id.is_empty() {
            out.push(violation(Rule::EmptyDocId, "", "document id is empty".into()));
        }
        if !doc_ids.insert(doc.doc_id.as_str()) {
            out.push(violation(
                Rule::DuplicateDocId,
                "",
                format!("document `{}` repeated", doc.doc_id),
            ));
        }
        let mut sent_ids = HashSet::new();
        let mut entity_ids = HashSet::new();
        for sent in &doc.sentences {
            if !sent_ids.insert(sent.sent_id.as_str()) {
                out.push(violation(
                    Rule::DuplicateSentId,
                    &sent.sent_id,
                    format!("sentence `{}` repeated", sent.sent_id),
                ));
            }
            for s in &sent.entities {
                if !entity_ids.insert(s.entity_id) {
                    out.push(violation(
                        Rule::DuplicateEntityId,
                        &sent.sent_id,
                        format!("entity id {} repeated in document", s.entity_id),
                    ));
                }
            }
            out.extend(validate_sentence(&doc.doc_id, sent));
        }
    }
    out
}
