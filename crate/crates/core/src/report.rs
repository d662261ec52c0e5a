//! Evaluation tables for mention detection, classification, linking and
//! annotator agreement, rendered as TSV or JSON.

use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::corpus::Corpus;
use crate::linker::{
    evaluate_linking, link_cascade, link_exact_baseline, link_head_baseline, linked_mentions, LinkTable,
};
use crate::metrics::{corpus_kappa, corpus_prf, head_accuracy, MatchMode, Prf};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    /// One value per column; `None` where a score is undefined.
    pub values: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub table: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    fn new(table: &str, columns: &[&str]) -> Report {
        Report {
            table: table.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, method: &str, values: Vec<Option<f64>>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(ReportRow {
            method: method.to_string(),
            values,
        });
    }

    pub fn get(&self, method: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.method == method)?.values[c]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("method\t{}\n", self.columns.join("\t"));
        for r in &self.rows {
            out.push_str(&r.method);
            for v in &r.values {
                match v {
                    Some(x) => {
                        let _ = write!(out, "\t{x:.3}");
                    }
                    None => out.push_str("\tN/A"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut m = Map::new();
                m.insert("method".into(), json!(r.method));
                for (c, v) in self.columns.iter().zip(&r.values) {
                    m.insert(c.clone(), v.map_or(Value::Null, |x| json!(x)));
                }
                Value::Object(m)
            })
            .collect();
        json!({ "table": self.table, "columns": self.columns, "rows": rows })
    }
}

fn rpf(p: Prf) -> [Option<f64>; 3] {
    [Some(p.recall), Some(p.precision), Some(p.f1)]
}

fn two_blocks(gold: &Corpus, pred: &Corpus, typed: bool) -> Result<Vec<Option<f64>>> {
    let mut v = rpf(corpus_prf(gold, pred, MatchMode::Exact, typed)?).to_vec();
    v.extend(rpf(corpus_prf(gold, pred, MatchMode::Fuzzy, typed)?));
    Ok(v)
}

/// Untyped span detection scores, exact and fuzzy-head, one row per run.
pub fn mention_report(gold: &Corpus, runs: &[(&str, &Corpus)]) -> Result<Report> {
    let mut r = Report::new(
        "mention detection",
        &["exact R", "exact P", "exact F1", "fuzzy R", "fuzzy P", "fuzzy F1"],
    );
    for (name, pred) in runs {
        r.push(name, two_blocks(gold, pred, false)?);
    }
    Ok(r)
}

/// Typed scores: exact span match and head match (prediction containing the
/// gold head with the gold type).
pub fn classification_report(gold: &Corpus, runs: &[(&str, &Corpus)]) -> Result<Report> {
    let mut r = Report::new(
        "classification",
        &["span R", "span P", "span F1", "head R", "head P", "head F1"],
    );
    for (name, pred) in runs {
        r.push(name, two_blocks(gold, pred, true)?);
    }
    Ok(r)
}

/// Links every identified mention of `test` with the exact, head and cascade
/// strategies.
pub fn linking_report(test: &Corpus, table: &LinkTable) -> Result<Report> {
    let gold = linked_mentions(test);
    let articles: Vec<String> = gold.iter().map(|(_, a)| a.clone()).collect();
    let mut r = Report::new("linking", &["acc", "cov", "no_err"]);
    type Linker<'a> = &'a dyn Fn(&crate::linker::Mention) -> Option<String>;
    let runs: [(&str, Linker); 3] = [
        ("exact", &|m| link_exact_baseline(m, table)),
        ("head", &|m| link_head_baseline(m, table)),
        ("cascade", &|m| link_cascade(m, table).map(|s| s.article)),
    ];
    for (name, f) in runs {
        let preds: Vec<Option<String>> = gold.iter().map(|(m, _)| f(m)).collect();
        let s = evaluate_linking(&articles, &preds)?;
        r.push(name, vec![Some(s.accuracy), Some(s.coverage), Some(s.no_err)]);
    }
    Ok(r)
}

/// Agreement between two annotations of the same text; precision and recall
/// treat `a` as the reference.
pub fn agreement_report(a: &Corpus, b: &Corpus) -> Result<Report> {
    let mut r = Report::new("agreement", &["kappa", "F1", "precision", "recall", "head acc"]);
    for (name, typed) in [("typed", true), ("untyped", false)] {
        let prf = corpus_prf(a, b, MatchMode::Exact, typed)?;
        let head = if typed { Some(head_accuracy(a, b, true)?) } else { None };
        r.push(
            name,
            vec![
                Some(corpus_kappa(a, b, typed)?),
                Some(prf.f1),
                Some(prf.precision),
                Some(prf.recall),
                head,
            ],
        );
    }
    Ok(r)
}
