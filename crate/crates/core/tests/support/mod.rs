//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use nestrec::corpus::{Document, EntitySpan, EntityType, Partition, Sentence, Token};
use nestrec::crf::{CrfModel, Instance};
use nestrec::Corpus;
use rand::seq::SliceRandom;
use rand::Rng;

/// A model over `n_labels` labels and `n_features` features `f0..` with
/// weights drawn from [-scale, scale].
pub fn random_model<R: Rng>(rng: &mut R, n_labels: usize, n_features: usize, scale: f64) -> CrfModel {
    let labels: Vec<String> = (0..n_labels).map(|i| format!("L{i}")).collect();
    let mut m = CrfModel::new(&labels, (0..n_features).map(|f| format!("f{f}")));
    let params = (0..m.params().len()).map(|_| rng.gen_range(-scale..scale)).collect();
    m.set_params(params);
    m
}

pub fn random_instance<R: Rng>(rng: &mut R, n_tokens: usize, n_labels: usize, n_features: usize) -> Instance {
    let features = (0..n_tokens)
        .map(|_| {
            let k = rng.gen_range(1..=n_features.min(3));
            let mut fs: Vec<usize> = (0..n_features).collect();
            fs.shuffle(rng);
            fs.truncate(k);
            fs
        })
        .collect();
    let labels = (0..n_tokens).map(|_| rng.gen_range(0..n_labels)).collect();
    Instance { features, labels }
}

/// Every label sequence of length `t` over `l` labels.
pub fn all_sequences(t: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Exhaustive argmax (first maximum in lexicographic order) and marginals.
pub fn brute_force(model: &CrfModel, features: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<f64>>) {
    let l = model.n_labels();
    let seqs = all_sequences(features.len(), l);
    let scores: Vec<f64> = seqs.iter().map(|y| model.score(features, y)).collect();
    let z = log_sum_exp(&scores);
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    let mut marg = vec![vec![0.0; l]; features.len()];
    for (y, s) in seqs.iter().zip(&scores) {
        let p = (s - z).exp();
        for (t, &lab) in y.iter().enumerate() {
            marg[t][lab] += p;
        }
    }
    (seqs[best].clone(), marg)
}

/// Largest relative error between the analytic gradient and central
/// differences, with the denominator floored at 1.
pub fn gradient_error(model: &CrfModel, inst: &Instance, l2: f64) -> f64 {
    let (_, grad) = model
        .log_likelihood_and_gradient(std::slice::from_ref(inst), l2)
        .unwrap();
    let h = 1e-5;
    let base = model.params().to_vec();
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] += h;
        probe.set_params(p.clone());
        let up = probe
            .log_likelihood_and_gradient(std::slice::from_ref(inst), l2)
            .unwrap()
            .0;
        p[i] -= 2.0 * h;
        probe.set_params(p);
        let down = probe
            .log_likelihood_and_gradient(std::slice::from_ref(inst), l2)
            .unwrap()
            .0;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1.0));
    }
    worst
}

/// Random strictly nested spans over `n` tokens with ids 1...
pub fn random_nested<R: Rng>(rng: &mut R, n: usize, max_spans: usize) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    let attempts = rng.gen_range(0..=max_spans * 3);
    for _ in 0..attempts {
        if spans.len() >= max_spans {
            break;
        }
        let a = rng.gen_range(1..=n);
        let b = rng.gen_range(a..=n.min(a + 4));
        let crosses = spans
            .iter()
            .any(|s| (s.start < a && a <= s.end && s.end < b) || (a < s.start && s.start <= b && b < s.end));
        if crosses {
            continue;
        }
        spans.push(EntitySpan {
            start: a,
            end: b,
            etype: EntityType::ALL[rng.gen_range(0..10)],
            head: rng.gen_range(a..=b),
            entity_id: 0,
            identity: None,
        });
    }
    spans
}

/// A flat sentence of `n` tokens (all attached to token 1).
pub fn flat_sentence(id: &str, n: usize, upos: &[&str]) -> Sentence {
    let tokens = (1..=n)
        .map(|i| {
            let pos = upos[(i - 1) % upos.len()];
            Token::new(
                i,
                &format!("w{i}"),
                &format!("w{i}"),
                pos,
                if i == 1 { 0 } else { 1 },
                if i == 1 { "root" } else { "dep" },
            )
        })
        .collect();
    Sentence::new(id, tokens)
}

pub fn one_doc(corpus_id: &str, partition: Partition, sentences: Vec<Sentence>) -> Corpus {
    Corpus {
        corpus_id: corpus_id.into(),
        partition,
        documents: vec![Document {
            doc_id: format!("{corpus_id}:doc"),
            corpus_id: corpus_id.into(),
            sentences,
        }],
    }
}

const PEOPLE: [(&str, &str); 4] = [
    ("Paulos", "Paul_the_Apostle"),
    ("Shenoute", "Shenoute"),
    ("Maria", "Mary_mother_of_Jesus"),
    ("Apa", "Apa_Victor"),
];
const PLACES: [(&str, &str); 3] = [
    ("Alexandria", "Alexandria"),
    ("Egypt", "Egypt"),
    ("Jerusalem", "Jerusalem"),
];
const ROLES: [&str; 3] = ["monk", "brother", "father"];
const SETTLEMENTS: [&str; 2] = ["city", "village"];
const THINGS: [(&str, EntityType); 4] = [
    ("bread", EntityType::Substance),
    ("water", EntityType::Substance),
    ("sheep", EntityType::Animal),
    ("book", EntityType::Object),
];
const WHEN: [(&str, EntityType); 3] = [
    ("morning", EntityType::Time),
    ("evening", EntityType::Time),
    ("desert", EntityType::Place),
];

type Row = (&'static str, &'static str, usize, &'static str);

fn build(
    id: &str,
    rows: &[(String, &str, usize, &str)],
    spans: &[(usize, usize, EntityType, Option<&str>)],
) -> Sentence {
    let tokens = rows
        .iter()
        .enumerate()
        .map(|(i, (form, upos, head, rel))| Token::new(i + 1, form, form, upos, *head, rel))
        .collect();
    let mut s = Sentence::new(id, tokens);
    s.entities = spans
        .iter()
        .map(|&(start, end, etype, identity)| EntitySpan {
            start,
            end,
            etype,
            head: nestrec::corpus::span_head(start, end, &s.tokens).unwrap(),
            entity_id: 0,
            identity: identity.map(str::to_string),
        })
        .collect();
    nestrec::corpus::sort_spans(&mut s.entities);
    s
}

fn own(rows: &[Row]) -> Vec<(String, &'static str, usize, &'static str)> {
    rows.iter().map(|&(f, u, h, r)| (f.to_string(), u, h, r)).collect()
}

/// One sentence drawn from a few templates with nested, typed and partly
/// linked entities.
pub fn synthetic_sentence<R: Rng>(rng: &mut R, id: &str) -> Sentence {
    match rng.gen_range(0..3) {
        0 => {
            let (who, who_id) = PEOPLE[rng.gen_range(0..PEOPLE.len())];
            let (place, place_id) = PLACES[rng.gen_range(0..PLACES.len())];
            let mut rows = own(&[
                ("the", "DET", 2, "det"),
                ("", "NOUN", 4, "nsubj"),
                ("", "PROPN", 2, "appos"),
                ("went", "VERB", 0, "root"),
                ("to", "ADP", 7, "case"),
                ("the", "DET", 7, "det"),
                ("", "NOUN", 4, "obl"),
                ("of", "ADP", 9, "case"),
                ("", "PROPN", 7, "nmod"),
                (".", "PUNCT", 4, "punct"),
            ]);
            rows[1].0 = ROLES[rng.gen_range(0..ROLES.len())].into();
            rows[2].0 = who.into();
            rows[6].0 = SETTLEMENTS[rng.gen_range(0..SETTLEMENTS.len())].into();
            rows[8].0 = place.into();
            build(
                id,
                &rows,
                &[
                    (1, 3, EntityType::Person, None),
                    (3, 3, EntityType::Person, Some(who_id)),
                    (6, 9, EntityType::Place, None),
                    (9, 9, EntityType::Place, Some(place_id)),
                ],
            )
        }
        1 => {
            let (thing, ttype) = THINGS[rng.gen_range(0..THINGS.len())];
            let (when, wtype) = WHEN[rng.gen_range(0..WHEN.len())];
            let mut rows = own(&[
                ("the", "DET", 2, "det"),
                ("brothers", "NOUN", 3, "nsubj"),
                ("ate", "VERB", 0, "root"),
                ("", "NOUN", 3, "obj"),
                ("in", "ADP", 7, "case"),
                ("the", "DET", 7, "det"),
                ("", "NOUN", 3, "obl"),
                (".", "PUNCT", 3, "punct"),
            ]);
            rows[3].0 = thing.into();
            rows[6].0 = when.into();
            build(
                id,
                &rows,
                &[
                    (1, 2, EntityType::Person, None),
                    (4, 4, ttype, None),
                    (6, 7, wtype, None),
                ],
            )
        }
        _ => {
            let (who, who_id) = PEOPLE[rng.gen_range(0..PEOPLE.len())];
            let mut rows = own(&[
                ("the", "DET", 2, "det"),
                ("love", "NOUN", 5, "nsubj"),
                ("of", "ADP", 4, "case"),
                ("", "PROPN", 2, "nmod"),
                ("great", "ADJ", 0, "root"),
                (".", "PUNCT", 5, "punct"),
            ]);
            rows[3].0 = who.into();
            build(
                id,
                &rows,
                &[
                    (1, 4, EntityType::Abstract, None),
                    (4, 4, EntityType::Person, Some(who_id)),
                ],
            )
        }
    }
}

/// A corpus of `n_docs` documents of `per_doc` template sentences.
pub fn synthetic_corpus<R: Rng>(
    rng: &mut R,
    corpus_id: &str,
    partition: Partition,
    n_docs: usize,
    per_doc: usize,
) -> Corpus {
    let documents = (0..n_docs)
        .map(|d| Document {
            doc_id: format!("{corpus_id}:doc{d}"),
            corpus_id: corpus_id.into(),
            sentences: (0..per_doc)
                .map(|k| synthetic_sentence(rng, &format!("d{d}s{k}")))
                .collect(),
        })
        .collect();
    let mut c = Corpus {
        corpus_id: corpus_id.into(),
        partition,
        documents,
    };
    c.renumber_entities();
    c
}
