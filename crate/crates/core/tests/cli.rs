//! The `nestrec` binary: outputs, exit codes and reproducibility.

mod support;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nestrec::corpus::{read_corpus, write_corpus};
use nestrec::Partition;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn nestrec(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nestrec"));
    cmd.args(args).env_remove("NESTREC_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (name, part, docs) in [
            ("train", Partition::Train, 6),
            ("dev", Partition::Dev, 2),
            ("test", Partition::Test, 2),
        ] {
            let c = support::synthetic_corpus(&mut rng, "fx", part, docs, 6);
            write_corpus(dir.path().join(format!("fx-{name}.conllu")), &c).unwrap();
        }
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn convert_and_validate() {
    let f = Fixture::new();
    let text = ok(&nestrec(&["convert", "--input", &f.s("fx-test.conllu")], &[]));
    assert_eq!(text.as_bytes(), read(&f.path("fx-test.conllu")));
    assert_eq!(
        ok(&nestrec(&["validate", "--input", &f.s("fx-test.conllu")], &[])).trim(),
        "[]"
    );

    // A crossing pair: exit 3 with the violation listed.
    let bad = "# sent_id = s1\n1\ta\ta\tNOUN\t_\t_\t0\troot\t_\tEntity=(place-1\n2\tb\tb\tNOUN\t_\t_\t1\tdep\t_\tEntity=(person-2\n3\tc\tc\tNOUN\t_\t_\t1\tdep\t_\tEntity=place-1)\n4\td\td\tNOUN\t_\t_\t1\tdep\t_\tEntity=person-2)\n\n";
    std::fs::write(f.path("bad.conllu"), bad).unwrap();
    let out = nestrec(&["validate", "--input", &f.s("bad.conllu")], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(error_json(&out)["exit_code"] == 3);
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let test = f.s("fx-test.conllu");
    // Lookup without an inventory is a usage error.
    let out = nestrec(&["detect", "--input", &test, "--method", "lookup"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "argument");
    // Missing input file.
    let out = nestrec(&["detect", "--input", &f.s("missing.conllu"), "--method", "parse"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "io");
    // Unknown flag value is rejected by the argument parser.
    assert_eq!(
        nestrec(&["detect", "--input", &test, "--method", "magic"], &[])
            .status
            .code(),
        Some(2)
    );
    // Malformed CoNLL-U.
    std::fs::write(f.path("broken.conllu"), "1\tonly\tthree\n\n").unwrap();
    let out = nestrec(&["convert", "--input", &f.s("broken.conllu")], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"], "parse");
    // Training on a corpus without entities.
    std::fs::write(f.path("empty.conllu"), "").unwrap();
    let out = nestrec(&["train", "--train", &f.s("empty.conllu"), "--out", &f.s("m.txt")], &[]);
    assert_eq!(out.status.code(), Some(3));
    // A bad seed in the environment.
    let out = nestrec(
        &["train", "--train", &f.s("fx-train.conllu"), "--out", &f.s("m.txt")],
        &[("NESTREC_SEED", "x")],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn detect_outputs_abstract_spans() {
    let f = Fixture::new();
    let text = ok(&nestrec(
        &["detect", "--input", &f.s("fx-test.conllu"), "--method", "noun"],
        &[],
    ));
    let out = nestrec::corpus::parse_conllu(&text).unwrap();
    let gold = read_corpus(f.path("fx-test.conllu")).unwrap();
    assert_eq!(out.token_count(), gold.token_count());
    let spans: Vec<_> = out.sentences().flat_map(|s| s.entities.clone()).collect();
    assert!(!spans.is_empty());
    assert!(spans
        .iter()
        .all(|e| e.etype == nestrec::EntityType::Abstract && e.start == e.end));
}

#[test]
fn train_is_reproducible_and_seed_env_wins() {
    let f = Fixture::new();
    let train = f.s("fx-train.conllu");
    let summary = ok(&nestrec(
        &[
            "train",
            "--train",
            &train,
            "--dev",
            &f.s("fx-dev.conllu"),
            "--out",
            &f.s("a.model"),
            "--max-iters",
            "40",
        ],
        &[],
    ));
    let summary: Value = serde_json::from_str(summary.trim()).unwrap();
    assert!(summary["dev_token_accuracy"].as_f64().unwrap() > 0.9);
    ok(&nestrec(
        &[
            "train",
            "--train",
            &train,
            "--out",
            &f.s("b.model"),
            "--max-iters",
            "40",
        ],
        &[],
    ));
    assert_eq!(read(&f.path("a.model")), read(&f.path("b.model")));

    ok(&nestrec(
        &[
            "train",
            "--train",
            &train,
            "--out",
            &f.s("c.model"),
            "--max-iters",
            "40",
            "--seed",
            "1",
        ],
        &[("NESTREC_SEED", "9")],
    ));
    ok(&nestrec(
        &[
            "train",
            "--train",
            &train,
            "--out",
            &f.s("d.model"),
            "--max-iters",
            "40",
            "--seed",
            "9",
        ],
        &[],
    ));
    assert_eq!(read(&f.path("c.model")), read(&f.path("d.model")));
    assert!(String::from_utf8(read(&f.path("c.model"))).unwrap().contains("seed=9"));
}

#[test]
fn classify_evaluate_link_export() {
    let f = Fixture::new();
    let (train, test) = (f.s("fx-train.conllu"), f.s("fx-test.conllu"));
    ok(&nestrec(&["build-kb", "--train", &train, "--out", &f.s("kb.tsv")], &[]));
    ok(&nestrec(
        &["build-inventory", "--train", &train, "--out", &f.s("inv.txt")],
        &[],
    ));
    ok(&nestrec(
        &["build-links", "--corpus", &train, "--out", &f.s("links.tsv")],
        &[],
    ));
    ok(&nestrec(&["train", "--train", &train, "--out", &f.s("crf.model")], &[]));

    let args = [
        "classify",
        "--input",
        &test,
        "--method",
        "hybrid",
        "--spans",
        "file",
        "--kb",
        &f.s("kb.tsv"),
        "--model",
        &f.s("crf.model"),
        "--output",
        &f.s("pred.conllu"),
    ];
    ok(&nestrec(&args, &[]));
    ok(&nestrec(
        &[
            "evaluate",
            "--task",
            "classification",
            "--gold",
            &test,
            "--pred",
            &f.s("pred.conllu"),
            "--json",
            &f.s("cls.json"),
        ],
        &[],
    ));
    let report: Value = serde_json::from_slice(&read(&f.path("cls.json"))).unwrap();
    let text = report.to_string();
    assert!(text.contains("head F1"), "{text}");

    let tsv = ok(&nestrec(
        &["evaluate", "--task", "mentions", "--gold", &test, "--pred", &test],
        &[],
    ));
    assert!(
        tsv.lines().nth(1).unwrap().starts_with("pred\t1.000\t1.000\t1.000"),
        "{tsv}"
    );
    let tsv = ok(&nestrec(
        &[
            "evaluate",
            "--task",
            "linking",
            "--gold",
            &test,
            "--links",
            &f.s("links.tsv"),
        ],
        &[],
    ));
    assert!(
        tsv.lines().any(|l| l.starts_with("cascade\t1.000\t1.000\t1.000")),
        "{tsv}"
    );
    let tsv = ok(&nestrec(
        &["evaluate", "--task", "agreement", "--gold", &test, "--pred", &test],
        &[],
    ));
    assert!(tsv.lines().any(|l| l.starts_with("typed\t1.000")), "{tsv}");
    assert_eq!(
        nestrec(&["evaluate", "--task", "mentions", "--gold", &test], &[])
            .status
            .code(),
        Some(2)
    );

    let links = ok(&nestrec(
        &["link", "--input", &f.s("pred.conllu"), "--links", &f.s("links.tsv")],
        &[],
    ));
    assert!(links.starts_with("doc_id\tsent_id\tstart\tend\ttext\tarticle\tlevel\tsupport\n"));

    let net: Value = serde_json::from_str(&ok(&nestrec(
        &["export", "--input", &test, "--what", "network", "--lemma", "city"],
        &[],
    )))
    .unwrap();
    assert_eq!(net["focus"], "city");
    let tm: Value =
        serde_json::from_str(&ok(&nestrec(&["export", "--input", &test, "--what", "treemap"], &[]))).unwrap();
    assert_eq!(tm["label"], "fx-test");
    let props = ok(&nestrec(
        &[
            "export",
            "--input",
            &test,
            "--what",
            "proportions",
            "--group-by",
            "corpus",
        ],
        &[],
    ));
    assert_eq!(props.lines().count(), 2, "{props}");
}
