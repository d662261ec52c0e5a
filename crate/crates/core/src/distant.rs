//! Corpus-scale aggregations: term networks around a head lemma, the
//! named/type/lemma tree map, and entity type proportions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::corpus::{Corpus, EntityType};

/// Co-occurrence of forms inside the spans headed by one lemma.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermNetwork {
    pub focus: String,
    pub nodes: BTreeMap<String, u64>,
    pub edges: BTreeMap<(String, String), u64>,
}

#[derive(Serialize)]
struct NodeOut<'a> {
    word: &'a str,
    count: u64,
}

#[derive(Serialize)]
struct EdgeOut<'a> {
    from: &'a str,
    to: &'a str,
    count: u64,
}

impl Serialize for TermNetwork {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            focus: &'a str,
            nodes: Vec<NodeOut<'a>>,
            edges: Vec<EdgeOut<'a>>,
        }
        Out {
            focus: &self.focus,
            nodes: self
                .nodes
                .iter()
                .map(|(w, &count)| NodeOut { word: w, count })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|((from, to), &count)| EdgeOut { from, to, count })
                .collect(),
        }
        .serialize(s)
    }
}

/// Forms and adjacent-form bigrams over every span headed by `lemma`.
pub fn term_network(corpus: &Corpus, lemma: &str) -> TermNetwork {
    let mut net = TermNetwork {
        focus: lemma.to_string(),
        ..TermNetwork::default()
    };
    for s in corpus.sentences() {
        for span in s.entities.iter().filter(|e| s.token(e.head).lemma == lemma) {
            let forms: Vec<&str> = (span.start..=span.end).map(|i| s.token(i).form.as_str()).collect();
            for f in &forms {
                *net.nodes.entry(f.to_string()).or_default() += 1;
            }
            for w in forms.windows(2) {
                *net.edges.entry((w[0].to_string(), w[1].to_string())).or_default() += 1;
            }
        }
    }
    net
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TreeMapNode {
    pub label: String,
    pub count: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TreeMapNode>,
}

impl TreeMapNode {
    fn from_counts(label: &str, children: Vec<TreeMapNode>) -> TreeMapNode {
        let mut children = children;
        children.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.label.cmp(&b.label)));
        TreeMapNode {
            label: label.to_string(),
            count: children.iter().map(|c| c.count).sum(),
            children,
        }
    }

    pub fn child(&self, label: &str) -> Option<&TreeMapNode> {
        self.children.iter().find(|c| c.label == label)
    }
}

/// Mentions grouped by named/non-named, then type, then head lemma.
pub fn treemap(corpus: &Corpus) -> TreeMapNode {
    let mut counts: BTreeMap<(&str, EntityType), BTreeMap<&str, u64>> = BTreeMap::new();
    for s in corpus.sentences() {
        for e in &s.entities {
            let named = if s.is_named(e) { "named" } else { "non-named" };
            *counts
                .entry((named, e.etype))
                .or_default()
                .entry(&s.token(e.head).lemma)
                .or_default() += 1;
        }
    }
    let mut top: BTreeMap<&str, Vec<TreeMapNode>> = BTreeMap::new();
    for ((named, etype), lemmas) in counts {
        let leaves = lemmas
            .into_iter()
            .map(|(l, count)| TreeMapNode {
                label: l.to_string(),
                count,
                children: Vec::new(),
            })
            .collect();
        top.entry(named)
            .or_default()
            .push(TreeMapNode::from_counts(etype.as_str(), leaves));
    }
    let children = top.into_iter().map(|(l, c)| TreeMapNode::from_counts(l, c)).collect();
    TreeMapNode::from_counts(&corpus.corpus_id, children)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupBy {
    Document,
    Corpus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Proportions {
    pub group: String,
    pub total: u64,
    pub counts: BTreeMap<EntityType, u64>,
    /// Percent of all mentions in the group, per attested type.
    pub percentages: BTreeMap<EntityType, f64>,
    /// person / abstract; `None` when there are no abstract mentions.
    pub person_abstract_ratio: Option<f64>,
}

/// Type shares per document or per sub-corpus, in first-seen order.
pub fn type_proportions(corpus: &Corpus, group_by: GroupBy) -> Vec<Proportions> {
    let mut groups: Vec<(String, BTreeMap<EntityType, u64>)> = Vec::new();
    for doc in &corpus.documents {
        let key = match group_by {
            GroupBy::Document => &doc.doc_id,
            GroupBy::Corpus => &doc.corpus_id,
        };
        let idx = match groups.iter().position(|(g, _)| g == key) {
            Some(i) => i,
            None => {
                groups.push((key.clone(), BTreeMap::new()));
                groups.len() - 1
            }
        };
        for s in &doc.sentences {
            for e in &s.entities {
                *groups[idx].1.entry(e.etype).or_default() += 1;
            }
        }
    }
    groups
        .into_iter()
        .map(|(group, counts)| {
            let total: u64 = counts.values().sum();
            let percentages = counts
                .iter()
                .map(|(&t, &n)| (t, 100.0 * n as f64 / total as f64))
                .collect();
            let get = |t| counts.get(&t).copied().unwrap_or(0);
            let abs = get(EntityType::Abstract);
            Proportions {
                person_abstract_ratio: (abs > 0).then(|| get(EntityType::Person) as f64 / abs as f64),
                group,
                total,
                counts,
                percentages,
            }
        })
        .collect()
}

/// TSV with one row per group and one percentage column per type.
pub fn proportions_tsv(rows: &[Proportions]) -> String {
    let mut out = String::from("group\ttotal");
    for t in EntityType::ALL {
        let _ = write!(out, "\t{t}");
    }
    out.push_str("\tperson/abstract\n");
    for r in rows {
        let _ = write!(out, "{}\t{}", r.group, r.total);
        for t in EntityType::ALL {
            match (r.total, r.percentages.get(&t)) {
                (0, _) => out.push('\t'),
                (_, p) => {
                    let _ = write!(out, "\t{:.2}", p.copied().unwrap_or(0.0));
                }
            }
        }
        match r.person_abstract_ratio {
            Some(x) => {
                let _ = writeln!(out, "\t{x:.3}");
            }
            None => out.push_str("\tn/a\n"),
        }
    }
    out
}
