//! End-to-end run over synthetic train/dev/test corpora written to disk.

mod support;

use nestrec::corpus::{read_corpus, validate_corpus, write_corpus};
use nestrec::crf::{train_entity_model, TrainConfig};
use nestrec::kb::{classify_corpus, HybridConfig, KnowledgeBase, Strategy};
use nestrec::linker::build_link_table;
use nestrec::mentions::{build_lookup_inventory, detect_corpus, spans_as_candidates, ParseConfig, Source};
use nestrec::report::{classification_report, linking_report, mention_report};
use nestrec::Partition;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::synthetic_corpus;

fn without_entities(c: &nestrec::Corpus) -> nestrec::Corpus {
    let mut c = c.clone();
    c.strip_entities();
    c
}

#[test]
fn full_pipeline_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, part, docs) in [
        ("train", Partition::Train, 12),
        ("dev", Partition::Dev, 3),
        ("test", Partition::Test, 4),
    ] {
        let c = synthetic_corpus(&mut rng, "fixture", part, docs, 8);
        write_corpus(dir.path().join(format!("fixture-{name}.conllu")), &c).unwrap();
    }
    let train = read_corpus(dir.path().join("fixture-train.conllu")).unwrap();
    let test = read_corpus(dir.path().join("fixture-test.conllu")).unwrap();
    assert_eq!(train.partition, Partition::Train);
    assert_eq!(test.partition, Partition::Test);
    assert!(validate_corpus(&train).is_empty());
    assert_eq!(train.documents.len(), 12);
    assert_eq!(train.documents[0].corpus_id, "fixture");

    // Detection. Parse projections include case-marking adpositions, which
    // the gold spans leave out, so only fuzzy matching is perfect.
    let bare = without_entities(&test);
    let inv = build_lookup_inventory(&train);
    let cfg = ParseConfig::default();
    let mut runs = Vec::new();
    for (name, source) in [
        ("noun", Source::Noun),
        ("lookup", Source::Lookup),
        ("parse", Source::Parse),
    ] {
        let cands = detect_corpus(&bare, source, Some(&inv), cfg).unwrap();
        runs.push((name, classify_corpus(&bare, &cands, Strategy::Majority).unwrap()));
    }
    let refs: Vec<(&str, &nestrec::Corpus)> = runs.iter().map(|(n, c)| (*n, c)).collect();
    let mentions = mention_report(&test, &refs).unwrap();
    let m = |run, col| mentions.get(run, col).unwrap();
    assert_eq!(m("parse", "fuzzy F1"), 1.0);
    assert_eq!(m("noun", "fuzzy F1"), 1.0);
    assert!(m("parse", "exact F1") > m("noun", "exact F1"));
    assert!(m("lookup", "exact P") > 0.99, "{}", mentions.to_tsv());

    // Classification over gold spans.
    let gold_cands: Vec<_> = test.sentences().map(spans_as_candidates).collect();
    let kb = KnowledgeBase::from_training(&train);
    let (model, log) = train_entity_model(&train, &TrainConfig::default()).unwrap();
    assert!(log.objectives.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    let hybrid = HybridConfig::default();
    let strategies = [
        ("majority", Strategy::Majority),
        ("kb", Strategy::Kb(&kb)),
        ("crf", Strategy::Crf(&model, hybrid)),
        ("crf+kb", Strategy::Hybrid(&kb, &model, hybrid)),
    ];
    let typed: Vec<(&str, nestrec::Corpus)> = strategies
        .iter()
        .map(|(n, s)| (*n, classify_corpus(&bare, &gold_cands, *s).unwrap()))
        .collect();
    let refs: Vec<(&str, &nestrec::Corpus)> = typed.iter().map(|(n, c)| (*n, c)).collect();
    let cls = classification_report(&test, &refs).unwrap();
    let f1 = |n| cls.get(n, "head F1").unwrap();
    assert!(f1("majority") < 0.2, "{}", cls.to_tsv());
    assert!(f1("kb") > 0.95, "{}", cls.to_tsv());
    assert!(f1("crf") > 0.95, "{}", cls.to_tsv());
    assert!(f1("crf+kb") >= f1("crf"), "{}", cls.to_tsv());

    // Linking: every test name occurs in training with one article.
    let table = build_link_table(&[&train]);
    let links = linking_report(&test, &table).unwrap();
    assert_eq!(links.get("cascade", "acc"), Some(1.0));
    assert_eq!(links.get("cascade", "no_err"), Some(1.0));
    assert!(links.get("cascade", "acc") >= links.get("head", "acc"));
    assert!(links.get("head", "acc") >= links.get("exact", "acc"));
}
