//! CoNLL-U reading and writing.

use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::fsutil::write_atomic;
use crate::{Error, Result};

use super::entities::{decode_entities, encode_entities};
use super::{Corpus, DepTree, Document, Misc, Partition, Sentence, Token};

struct Block<'a> {
    first_line: usize,
    lines: Vec<&'a str>,
}

fn blocks(text: &str) -> Vec<Block<'_>> {
    let mut out = Vec::new();
    let mut cur: Option<Block> = None;
    for (i, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if let Some(b) = cur.take() {
                out.push(b);
            }
        } else {
            cur.get_or_insert_with(|| Block {
                first_line: i + 1,
                lines: Vec::new(),
            })
            .lines
            .push(line);
        }
    }
    out.extend(cur);
    out
}

fn comment_value<'a>(comment: &'a str, key: &str) -> Option<&'a str> {
    let rest = comment.trim_start().strip_prefix(key)?;
    let rest = rest.trim_start();
    if rest.is_empty() {
        return Some("");
    }
    rest.strip_prefix('=').map(str::trim)
}

struct ParsedBlock {
    sentence: Sentence,
    newdoc: Option<String>,
}

fn parse_block(block: &Block) -> Result<ParsedBlock> {
    let mut comments = Vec::new();
    let mut tokens: Vec<Token> = Vec::new();
    let mut raw_entities: Vec<Option<String>> = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut token_lines = Vec::new();

    for (offset, line) in block.lines.iter().enumerate() {
        let lineno = block.first_line + offset;
        let perr = |message: String| Error::Parse { line: lineno, message };
        if let Some(c) = line.strip_prefix('#') {
            if !tokens.is_empty() || !pending.is_empty() {
                return Err(perr("comment after token lines".into()));
            }
            comments.push(c.to_string());
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(perr(format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            pending.push(line.to_string());
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| perr(format!("invalid token id `{}`", cols[0])))?;
        if id != tokens.len() + 1 {
            return Err(perr(format!(
                "token id {id} out of sequence (expected {})",
                tokens.len() + 1
            )));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| perr(format!("invalid head `{}`", cols[6])))?;
        let (misc, entity) = Misc::parse(cols[9]);
        tokens.push(Token {
            id,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc,
            pre_lines: std::mem::take(&mut pending),
        });
        raw_entities.push(entity);
        token_lines.push(lineno);
    }

    if tokens.is_empty() {
        return Err(Error::Parse {
            line: block.first_line,
            message: "sentence without tokens".into(),
        });
    }
    let n = tokens.len();
    for (tok, &lineno) in tokens.iter().zip(&token_lines) {
        if tok.head > n {
            return Err(Error::Validation(format!(
                "line {lineno}: head {} out of range for a {n}-token sentence",
                tok.head
            )));
        }
    }
    DepTree::new(&tokens)
        .map_err(|e| Error::Validation(format!("sentence starting at line {}: {e}", block.first_line)))?;

    let raw: Vec<Option<&str>> = raw_entities.iter().map(|e| e.as_deref()).collect();
    let entities = decode_entities(&tokens, &raw).map_err(|e| match e {
        Error::Decode(m) => Error::Decode(format!("sentence starting at line {}: {m}", block.first_line)),
        other => other,
    })?;

    let mut sent_id = None;
    let mut newdoc = None;
    for c in &comments {
        if let Some(v) = comment_value(c, "sent_id") {
            sent_id = Some(v.to_string());
        } else if let Some(v) = comment_value(c, "newdoc id") {
            newdoc = Some(v.to_string());
        } else if comment_value(c, "newdoc").is_some() && newdoc.is_none() {
            newdoc = Some(String::new());
        }
    }

    Ok(ParsedBlock {
        sentence: Sentence {
            sent_id: sent_id.unwrap_or_default(),
            comments,
            tokens,
            entities,
            trailing_lines: pending,
        },
        newdoc,
    })
}

/// Parses CoNLL-U text into a corpus with id `corpus` and no partition.
pub fn parse_conllu(text: &str) -> Result<Corpus> {
    parse_conllu_with(text, "corpus", Partition::Unlabeled)
}

/// Parses CoNLL-U text. Sentences are parsed in parallel and merged in
/// input order. `# newdoc id =` comments start documents; a document's
/// corpus id is the part of its id before `:` when present.
pub fn parse_conllu_with(text: &str, corpus_id: &str, partition: Partition) -> Result<Corpus> {
    let blocks = blocks(text);
    let parsed: Vec<ParsedBlock> = blocks.par_iter().map(parse_block).collect::<Result<_>>()?;

    let mut corpus = Corpus::new(corpus_id, partition);
    for block in parsed {
        if block.newdoc.is_some() || corpus.documents.is_empty() {
            let doc_id = match block.newdoc {
                Some(id) if !id.is_empty() => id,
                Some(_) => format!("{corpus_id}-doc{}", corpus.documents.len() + 1),
                None => corpus_id.to_string(),
            };
            corpus.documents.push(Document {
                corpus_id: Document::corpus_of(&doc_id, corpus_id),
                doc_id,
                sentences: Vec::new(),
            });
        }
        let doc = corpus.documents.last_mut().expect("document pushed above");
        let mut sentence = block.sentence;
        if sentence.sent_id.is_empty() {
            sentence.sent_id = format!("{}-s{}", doc.doc_id, doc.sentences.len() + 1);
        }
        doc.sentences.push(sentence);
    }
    if let Some(dup) = corpus.check_unique_doc_ids() {
        return Err(Error::Validation(format!("document id `{dup}` appears twice")));
    }
    Ok(corpus)
}

/// Reads a CoNLL-U file. The corpus id is the file stem and the partition
/// is guessed from the file name.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string());
    parse_conllu_with(&text, &stem, Partition::from_file_name(&name))
}

fn write_sentence(out: &mut String, sent: &Sentence) -> Result<()> {
    for c in &sent.comments {
        out.push('#');
        out.push_str(c);
        out.push('\n');
    }
    let encoded = encode_entities(&sent.entities, sent.len())?;
    for (tok, ent) in sent.tokens.iter().zip(&encoded) {
        for l in &tok.pre_lines {
            out.push_str(l);
            out.push('\n');
        }
        let cols = [
            tok.id.to_string(),
            tok.form.clone(),
            tok.lemma.clone(),
            tok.upos.clone(),
            tok.xpos.clone(),
            tok.feats.clone(),
            tok.head.to_string(),
            tok.deprel.clone(),
            tok.deps.clone(),
            tok.misc.render(ent.as_deref()),
        ];
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    for l in &sent.trailing_lines {
        out.push_str(l);
        out.push('\n');
    }
    out.push('\n');
    Ok(())
}

/// Serializes a corpus to CoNLL-U, encoding entities into MISC.
pub fn serialize_conllu(corpus: &Corpus) -> Result<String> {
    let mut out = String::new();
    let multi = corpus.documents.len() > 1;
    for doc in &corpus.documents {
        let has_newdoc = doc.sentences.first().is_some_and(|s| {
            s.comments
                .iter()
                .any(|c| comment_value(c, "newdoc").is_some() || comment_value(c, "newdoc id").is_some())
        });
        if multi && !has_newdoc {
            out.push_str(&format!("# newdoc id = {}\n", doc.doc_id));
        }
        for sent in &doc.sentences {
            write_sentence(&mut out, sent)?;
        }
    }
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    write_atomic(path, serialize_conllu(corpus)?)?;
    Ok(())
}

/// Replaces POS tags and trees of `target` with those of `trees`, which
/// must have identical sentence and token inventories. Used to run
/// detection and features over predicted analyses while keeping gold
/// entities.
pub fn overlay_trees(target: &mut Corpus, trees: &Corpus) -> Result<()> {
    if target.sentence_count() != trees.sentence_count() {
        return Err(Error::Validation(format!(
            "tree file has {} sentences, corpus has {}",
            trees.sentence_count(),
            target.sentence_count()
        )));
    }
    for (sent, other) in target.sentences_mut().zip(trees.sentences()) {
        if sent.len() != other.len() {
            return Err(Error::Validation(format!(
                "sentence {}: {} tokens vs {} in tree file",
                sent.sent_id,
                sent.len(),
                other.len()
            )));
        }
        for (t, o) in sent.tokens.iter_mut().zip(&other.tokens) {
            t.upos = o.upos.clone();
            t.xpos = o.xpos.clone();
            t.head = o.head;
            t.deprel = o.deprel.clone();
        }
        for span in &mut sent.entities {
            span.head = super::span_head(span.start, span.end, &sent.tokens)?;
        }
    }
    Ok(())
}
