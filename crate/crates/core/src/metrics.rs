//! Span alignment and scoring, deepest-span BIO projection, Cohen's kappa and
//! head accuracy.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;

use crate::corpus::{Corpus, EntitySpan, Sentence};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Identical boundaries.
    Exact,
    /// The predicted span contains the gold head.
    Fuzzy,
}

/// One-to-one pairing of gold and predicted spans (indices into the inputs).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanAlignment {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_gold: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
    pub mode: MatchMode,
    pub typed: bool,
}

impl SpanAlignment {
    pub fn counts(&self) -> MatchCounts {
        MatchCounts {
            matched: self.pairs.len(),
            gold: self.pairs.len() + self.unmatched_gold.len(),
            pred: self.pairs.len() + self.unmatched_pred.len(),
        }
    }
}

fn compatible(g: &EntitySpan, p: &EntitySpan, mode: MatchMode, typed: bool) -> bool {
    if typed && g.etype != p.etype {
        return false;
    }
    match mode {
        MatchMode::Exact => g.start == p.start && g.end == p.end,
        MatchMode::Fuzzy => p.covers(g.head),
    }
}

/// Kuhn's augmenting path search from gold `g`.
fn augment(g: usize, adj: &[Vec<usize>], pred_of: &mut [Option<usize>], seen: &mut [bool]) -> bool {
    for &p in &adj[g] {
        if seen[p] {
            continue;
        }
        seen[p] = true;
        if pred_of[p].is_none_or(|other| augment(other, adj, pred_of, seen)) {
            pred_of[p] = Some(g);
            return true;
        }
    }
    false
}

/// Aligns the spans of one sentence. Exact-boundary pairs are taken first,
/// then each remaining gold span (shortest first) takes the smallest
/// unmatched predicted span containing its head, leftmost on ties. In fuzzy
/// mode the result is then completed to a maximum matching, so adding
/// compatible pairs can never lower the matched count.
pub fn align_spans(gold: &[EntitySpan], pred: &[EntitySpan], mode: MatchMode, typed: bool) -> SpanAlignment {
    let mut order: Vec<usize> = (0..gold.len()).collect();
    order.sort_by_key(|&i| (gold[i].len(), gold[i].start, i));
    let mut gold_to: Vec<Option<usize>> = vec![None; gold.len()];
    let mut pred_of: Vec<Option<usize>> = vec![None; pred.len()];

    for &g in &order {
        let hit =
            (0..pred.len()).find(|&p| pred_of[p].is_none() && compatible(&gold[g], &pred[p], MatchMode::Exact, typed));
        if let Some(p) = hit {
            gold_to[g] = Some(p);
            pred_of[p] = Some(g);
        }
    }
    if mode == MatchMode::Fuzzy {
        for &g in &order {
            if gold_to[g].is_some() {
                continue;
            }
            let hit = (0..pred.len())
                .filter(|&p| pred_of[p].is_none() && compatible(&gold[g], &pred[p], mode, typed))
                .min_by_key(|&p| (pred[p].len(), pred[p].start, p));
            if let Some(p) = hit {
                gold_to[g] = Some(p);
                pred_of[p] = Some(g);
            }
        }
        let adj: Vec<Vec<usize>> = gold
            .iter()
            .map(|g| {
                let mut ps: Vec<usize> = (0..pred.len())
                    .filter(|&p| compatible(g, &pred[p], mode, typed))
                    .collect();
                ps.sort_by_key(|&p| (pred[p].len(), pred[p].start, p));
                ps
            })
            .collect();
        for &g in &order {
            if pred_of.contains(&Some(g)) {
                continue;
            }
            let mut seen = vec![false; pred.len()];
            augment(g, &adj, &mut pred_of, &mut seen);
        }
    }

    let mut pairs: Vec<(usize, usize)> = pred_of
        .iter()
        .enumerate()
        .filter_map(|(p, g)| g.map(|g| (g, p)))
        .collect();
    pairs.sort_unstable();
    let matched_gold: Vec<bool> = {
        let mut m = vec![false; gold.len()];
        pairs.iter().for_each(|&(g, _)| m[g] = true);
        m
    };
    SpanAlignment {
        unmatched_gold: (0..gold.len()).filter(|&g| !matched_gold[g]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&p| pred_of[p].is_none()).collect(),
        pairs,
        mode,
        typed,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct MatchCounts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = MatchCounts;

    fn add(self, o: MatchCounts) -> MatchCounts {
        MatchCounts {
            matched: self.matched + o.matched,
            gold: self.gold + o.gold,
            pred: self.pred + o.pred,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(c: MatchCounts) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (precision, recall) = (ratio(c.matched, c.pred), ratio(c.matched, c.gold));
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

pub fn span_prf(alignment: &SpanAlignment) -> Prf {
    Prf::from_counts(alignment.counts())
}

fn paired_sentences<'a>(gold: &'a Corpus, pred: &'a Corpus) -> Result<Vec<(&'a Sentence, &'a Sentence)>> {
    let (g, p) = (gold.sentence_count(), pred.sentence_count());
    if g != p {
        return Err(Error::Validation(format!("gold has {g} sentences, prediction has {p}")));
    }
    let pairs: Vec<_> = gold.sentences().zip(pred.sentences()).collect();
    if let Some((a, b)) = pairs.iter().find(|(a, b)| a.len() != b.len()) {
        return Err(Error::Validation(format!(
            "sentence {} has {} tokens in gold, {} in prediction",
            a.sent_id,
            a.len(),
            b.len()
        )));
    }
    Ok(pairs)
}

/// Micro-averaged matching counts over aligned corpora.
pub fn corpus_counts(gold: &Corpus, pred: &Corpus, mode: MatchMode, typed: bool) -> Result<MatchCounts> {
    Ok(paired_sentences(gold, pred)?
        .iter()
        .map(|(g, p)| align_spans(&g.entities, &p.entities, mode, typed).counts())
        .fold(MatchCounts::default(), |a, b| a + b))
}

pub fn corpus_prf(gold: &Corpus, pred: &Corpus, mode: MatchMode, typed: bool) -> Result<Prf> {
    Ok(Prf::from_counts(corpus_counts(gold, pred, mode, typed)?))
}

/// Per-token tags of the innermost covering span: `B-<type>` at that span's
/// first token, `I-<type>` inside it, `O` elsewhere. With `typed` off the
/// tags are just `B`, `I` and `O`.
pub fn deepest_bio_labels(n_tokens: usize, spans: &[EntitySpan], typed: bool) -> Vec<String> {
    (1..=n_tokens)
        .map(|i| {
            let inner = spans
                .iter()
                .filter(|s| s.covers(i))
                .min_by_key(|s| (s.len(), std::cmp::Reverse(s.start)));
            match inner {
                None => "O".to_string(),
                Some(s) => {
                    let prefix = if s.start == i { "B" } else { "I" };
                    if typed {
                        format!("{prefix}-{}", s.etype)
                    } else {
                        prefix.to_string()
                    }
                }
            }
        })
        .collect()
}

/// Cohen's kappa between two equally long tag sequences.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "tag sequences differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("kappa of empty sequences".into()));
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut ma: HashMap<&T, usize> = HashMap::new();
    let mut mb: HashMap<&T, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *ma.entry(x).or_default() += 1;
        *mb.entry(y).or_default() += 1;
    }
    let p_e: f64 = ma
        .iter()
        .map(|(t, &ca)| ca as f64 / n * mb.get(t).map_or(0.0, |&cb| cb as f64 / n))
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Ok(if (p_o - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Share of spans in `a` for which `b` has a span with the same head (and
/// type, when `typed`). Counts pooled over sentences; 0 when `a` is empty.
pub fn head_accuracy(a: &Corpus, b: &Corpus, typed: bool) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for (sa, sb) in paired_sentences(a, b)? {
        for x in &sa.entities {
            total += 1;
            if sb
                .entities
                .iter()
                .any(|y| y.head == x.head && (!typed || y.etype == x.etype))
            {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Kappa over deepest-span BIO tags of every token.
pub fn corpus_kappa(a: &Corpus, b: &Corpus, typed: bool) -> Result<f64> {
    let mut ta = Vec::new();
    let mut tb = Vec::new();
    for (sa, sb) in paired_sentences(a, b)? {
        ta.extend(deepest_bio_labels(sa.len(), &sa.entities, typed));
        tb.extend(deepest_bio_labels(sb.len(), &sb.entities, typed));
    }
    cohen_kappa(&ta, &tb)
}
