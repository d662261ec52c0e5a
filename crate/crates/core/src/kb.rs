//! Head-lemma knowledge base and the majority, KB-only and CRF+KB
//! classifiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::corpus::{Corpus, EntitySpan, EntityType, Sentence};
use crate::crf::{CrfModel, LabelSet};
use crate::fsutil::write_atomic;
use crate::mentions::MentionCandidate;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KbEntry {
    pub lemma: String,
    pub types: BTreeSet<EntityType>,
    pub majority: EntityType,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Training,
    External,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeBase {
    entries: BTreeMap<String, KbEntry>,
    pub provenance: Provenance,
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        KnowledgeBase {
            entries: BTreeMap::new(),
            provenance: Provenance::External,
        }
    }
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, lemma: &str) -> Option<&KbEntry> {
        self.entries.get(lemma)
    }

    pub fn iter(&self) -> impl Iterator<Item = &KbEntry> {
        self.entries.values()
    }

    pub fn insert(&mut self, lemma: &str, types: BTreeSet<EntityType>, majority: EntityType) -> Result<()> {
        if lemma.is_empty() || lemma.contains(['\t', '\n']) {
            return Err(Error::InvalidArgument(format!("bad KB lemma {lemma:?}")));
        }
        if !types.contains(&majority) {
            return Err(Error::InvalidArgument(format!(
                "majority type of `{lemma}` is not among its types"
            )));
        }
        self.entries.insert(
            lemma.to_string(),
            KbEntry {
                lemma: lemma.to_string(),
                types,
                majority,
            },
        );
        Ok(())
    }

    /// One entry per gold head lemma in `train`, with every attested type and
    /// the most frequent one (ties go to the alphabetically first type).
    pub fn from_training(train: &Corpus) -> KnowledgeBase {
        let mut counts: BTreeMap<String, [usize; 10]> = BTreeMap::new();
        for s in train.sentences() {
            for span in &s.entities {
                counts.entry(s.token(span.head).lemma.clone()).or_default()[span.etype.index()] += 1;
            }
        }
        let entries = counts
            .into_iter()
            .map(|(lemma, c)| {
                let types = EntityType::ALL.iter().copied().filter(|t| c[t.index()] > 0).collect();
                // max_by_key keeps the last maximum; scan in reverse so ties
                // resolve to the first type alphabetically.
                let majority = *EntityType::ALL.iter().rev().max_by_key(|t| c[t.index()]).unwrap();
                let entry = KbEntry {
                    lemma: lemma.clone(),
                    types,
                    majority,
                };
                (lemma, entry)
            })
            .collect();
        KnowledgeBase {
            entries,
            provenance: Provenance::Training,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            let types: Vec<&str> = e.types.iter().map(|t| t.as_str()).collect();
            let _ = writeln!(out, "{}\t{}\t{}", e.lemma, types.join("|"), e.majority);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<KnowledgeBase> {
        let mut kb = KnowledgeBase::default();
        for (i, line) in text.lines().enumerate() {
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [lemma, types, majority] = cols[..] else {
                return Err(parse_err(format!("expected 3 columns, found {}", cols.len())));
            };
            let types = types
                .split('|')
                .map(EntityType::from_str)
                .collect::<Result<BTreeSet<_>>>()
                .map_err(|e| parse_err(e.to_string()))?;
            let majority = EntityType::from_str(majority).map_err(|e| parse_err(e.to_string()))?;
            kb.insert(lemma, types, majority)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(kb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(write_atomic(path.as_ref(), self.to_tsv().as_bytes())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
        KnowledgeBase::from_tsv(&std::fs::read_to_string(path)?)
    }
}

/// Settings of the CRF-consulting classifiers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridConfig {
    /// Candidates whose head has P(O) above this are discarded.
    pub o_threshold: f64,
    /// Apply the discard rule before consulting the KB. When off, only
    /// out-of-vocabulary heads can be discarded.
    pub discard_first: bool,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            o_threshold: 0.95,
            discard_first: true,
        }
    }
}

fn typed(c: &MentionCandidate, etype: EntityType) -> EntitySpan {
    EntitySpan {
        start: c.start,
        end: c.end,
        etype,
        head: c.head,
        entity_id: 0,
        identity: None,
    }
}

/// Every candidate typed `abstract`.
pub fn classify_majority(cands: &[MentionCandidate]) -> Vec<EntitySpan> {
    cands.iter().map(|c| typed(c, EntityType::Abstract)).collect()
}

/// The training majority of the head lemma; `abstract` when unknown.
pub fn classify_kb_only(sentence: &Sentence, cands: &[MentionCandidate], kb: &KnowledgeBase) -> Vec<EntitySpan> {
    cands
        .iter()
        .map(|c| {
            let lemma = &sentence.token(c.head).lemma;
            typed(c, kb.get(lemma).map_or(EntityType::Abstract, |e| e.majority))
        })
        .collect()
}

fn best_of(marg: &[f64], types: impl Iterator<Item = EntityType>) -> EntityType {
    let mut best: Option<(EntityType, f64)> = None;
    for t in types {
        let p = marg[LabelSet::index(Some(t))];
        if best.is_none_or(|(_, bp)| p > bp) {
            best = Some((t, p));
        }
    }
    best.expect("nonempty type set").0
}

/// Types candidates from the KB and per-token CRF marginals (11 columns,
/// `O` first). Never outputs `O`; unlikely candidates are dropped instead.
pub fn classify_hybrid_with_marginals(
    sentence: &Sentence,
    cands: &[MentionCandidate],
    kb: &KnowledgeBase,
    marginals: &[Vec<f64>],
    cfg: HybridConfig,
) -> Vec<EntitySpan> {
    let mut out = Vec::with_capacity(cands.len());
    for c in cands {
        let marg = &marginals[c.head - 1];
        let discard = marg[LabelSet::OUTSIDE] > cfg.o_threshold;
        if discard && cfg.discard_first {
            continue;
        }
        let etype = match kb.get(&sentence.token(c.head).lemma) {
            Some(e) if e.types.len() == 1 => *e.types.first().unwrap(),
            Some(e) => best_of(marg, e.types.iter().copied()),
            None if discard => continue,
            None => best_of(marg, EntityType::ALL.into_iter()),
        };
        out.push(typed(c, etype));
    }
    out
}

pub fn classify_hybrid(
    sentence: &Sentence,
    cands: &[MentionCandidate],
    kb: &KnowledgeBase,
    model: &CrfModel,
    cfg: HybridConfig,
) -> Result<Vec<EntitySpan>> {
    if cands.is_empty() {
        return Ok(Vec::new());
    }
    let marginals = model.sentence_marginals(sentence)?;
    Ok(classify_hybrid_with_marginals(sentence, cands, kb, &marginals, cfg))
}

/// A classification strategy with the resources it needs.
#[derive(Clone, Copy)]
pub enum Strategy<'a> {
    Majority,
    Kb(&'a KnowledgeBase),
    /// The hybrid rules with an empty KB.
    Crf(&'a CrfModel, HybridConfig),
    Hybrid(&'a KnowledgeBase, &'a CrfModel, HybridConfig),
}

impl Strategy<'_> {
    pub fn classify(&self, sentence: &Sentence, cands: &[MentionCandidate]) -> Result<Vec<EntitySpan>> {
        match *self {
            Strategy::Majority => Ok(classify_majority(cands)),
            Strategy::Kb(kb) => Ok(classify_kb_only(sentence, cands, kb)),
            Strategy::Crf(model, cfg) => classify_hybrid(sentence, cands, &KnowledgeBase::default(), model, cfg),
            Strategy::Hybrid(kb, model, cfg) => classify_hybrid(sentence, cands, kb, model, cfg),
        }
    }
}

/// Replaces the entities of `corpus` with the classified candidates. `cands`
/// holds one list per sentence in corpus order.
pub fn classify_corpus(corpus: &Corpus, cands: &[Vec<MentionCandidate>], strategy: Strategy<'_>) -> Result<Corpus> {
    if cands.len() != corpus.sentence_count() {
        return Err(Error::InvalidArgument(format!(
            "{} candidate lists for {} sentences",
            cands.len(),
            corpus.sentence_count()
        )));
    }
    let sentences: Vec<&Sentence> = corpus.sentences().collect();
    let typed: Vec<Vec<EntitySpan>> = sentences
        .par_iter()
        .zip(cands)
        .map(|(s, c)| strategy.classify(s, c))
        .collect::<Result<_>>()?;
    let mut out = corpus.clone();
    for (s, spans) in out.sentences_mut().zip(typed) {
        s.entities = spans;
    }
    out.renumber_entities();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Partition, Token};
    use crate::mentions::Source;

    fn cand(start: usize, end: usize, head: usize) -> MentionCandidate {
        MentionCandidate {
            start,
            end,
            head,
            source: Source::Parse,
        }
    }

    fn sentence(lemmas: &[&str]) -> Sentence {
        let tokens = lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| Token::new(i + 1, l, l, "NOUN", if i == 0 { 0 } else { 1 }, "dep"))
            .collect();
        Sentence::new("s", tokens)
    }

    fn corpus(spans: &[(&str, EntityType)]) -> Corpus {
        let sentences = spans
            .iter()
            .enumerate()
            .map(|(k, &(lemma, t))| {
                let mut s = sentence(&[lemma]);
                s.sent_id = format!("s{k}");
                s.entities.push(EntitySpan {
                    start: 1,
                    end: 1,
                    etype: t,
                    head: 1,
                    entity_id: k as u32 + 1,
                    identity: None,
                });
                s
            })
            .collect();
        Corpus {
            corpus_id: "c".into(),
            partition: Partition::Train,
            documents: vec![Document {
                doc_id: "d".into(),
                corpus_id: "c".into(),
                sentences,
            }],
        }
    }

    #[test]
    fn kb_from_training_counts() {
        use EntityType::*;
        let kb = KnowledgeBase::from_training(&corpus(&[
            ("ma", Person),
            ("ma", Place),
            ("ma", Person),
            ("ma", Person),
        ]));
        let e = kb.get("ma").unwrap();
        assert_eq!(e.types, BTreeSet::from([Person, Place]));
        assert_eq!(e.majority, Person);
        assert_eq!(kb.provenance, Provenance::Training);

        let kb = KnowledgeBase::from_training(&corpus(&[("x", Time), ("x", Animal)]));
        assert_eq!(kb.get("x").unwrap().majority, Animal);
        assert!(KnowledgeBase::from_training(&Corpus::new("c", Partition::Train)).is_empty());
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let text = "# comment\nma\tperson|place\tplace\nrome\tplace\tplace\n";
        let kb = KnowledgeBase::from_tsv(text).unwrap();
        assert_eq!(kb.len(), 2);
        assert_eq!(KnowledgeBase::from_tsv(&kb.to_tsv()).unwrap(), kb);
        assert!(matches!(
            KnowledgeBase::from_tsv("a\tperson\tplace"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(KnowledgeBase::from_tsv("a\tpeople\tpeople").is_err());
        assert!(KnowledgeBase::from_tsv("a\tperson").is_err());
    }

    #[test]
    fn majority_and_kb_only() {
        let s = sentence(&["rome", "ma", "zzz"]);
        let cands = [cand(1, 3, 1), cand(2, 2, 2), cand(3, 3, 3)];
        assert!(classify_majority(&cands)
            .iter()
            .all(|e| e.etype == EntityType::Abstract));
        let kb = KnowledgeBase::from_tsv("rome\tplace\tplace\nma\tperson|place\tperson\n").unwrap();
        let types: Vec<_> = classify_kb_only(&s, &cands, &kb).iter().map(|e| e.etype).collect();
        assert_eq!(types, [EntityType::Place, EntityType::Person, EntityType::Abstract]);
    }

    fn marg(pairs: &[(Option<EntityType>, f64)]) -> Vec<f64> {
        let mut m = vec![0.0; LabelSet::SIZE];
        for &(t, p) in pairs {
            m[LabelSet::index(t)] = p;
        }
        m
    }

    #[test]
    fn hybrid_rules() {
        use EntityType::*;
        let s = sentence(&["ma", "rome", "zzz", "ma"]);
        let kb = KnowledgeBase::from_tsv("rome\tplace\tplace\nma\tperson|place\tplace\n").unwrap();
        let m = vec![
            marg(&[(None, 0.5), (Some(Person), 0.4), (Some(Place), 0.1)]),
            marg(&[(None, 0.2), (Some(Person), 0.8)]),
            marg(&[(None, 0.3), (Some(Time), 0.3), (Some(Animal), 0.3), (Some(Event), 0.1)]),
            marg(&[(None, 0.99), (Some(Place), 0.01)]),
        ];
        let cands: Vec<_> = (1..=4).map(|i| cand(i, i, i)).collect();
        let out = classify_hybrid_with_marginals(&s, &cands, &kb, &m, HybridConfig::default());
        let got: Vec<_> = out.iter().map(|e| (e.head, e.etype)).collect();
        // multiple KB types -> best marginal; single KB type wins over CRF;
        // OOV -> argmax over non-O with ties to the earlier label; P(O) > .95 dropped
        assert_eq!(got, [(1, Person), (2, Place), (3, Animal)]);

        let late = HybridConfig {
            discard_first: false,
            ..HybridConfig::default()
        };
        let out = classify_hybrid_with_marginals(&s, &cands, &kb, &m, late);
        assert_eq!(out.len(), 4);
        assert_eq!(out[3].etype, Place);
    }

    #[test]
    fn hybrid_never_outputs_outside_and_empty_kb_uses_crf() {
        let s = sentence(&["a", "b"]);
        let m = vec![
            marg(&[(None, 0.9), (Some(EntityType::Plant), 0.1)]),
            marg(&[(None, 0.96), (Some(EntityType::Plant), 0.04)]),
        ];
        let cands = [cand(1, 2, 1), cand(2, 2, 2)];
        let out = classify_hybrid_with_marginals(&s, &cands, &KnowledgeBase::default(), &m, HybridConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].etype, EntityType::Plant);
    }

    #[test]
    fn classify_corpus_checks_lengths_and_renumbers() {
        let c = corpus(&[("ma", EntityType::Place), ("rome", EntityType::Place)]);
        assert!(classify_corpus(&c, &[], Strategy::Majority).is_err());
        let cands = vec![vec![cand(1, 1, 1)], vec![cand(1, 1, 1)]];
        let out = classify_corpus(&c, &cands, Strategy::Majority).unwrap();
        let ids: Vec<u32> = out
            .sentences()
            .flat_map(|s| s.entities.iter().map(|e| e.entity_id))
            .collect();
        assert_eq!(ids, [1, 2]);
    }
}
