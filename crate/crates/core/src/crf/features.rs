use crate::corpus::{DepTree, EntityType, Sentence};

/// Indicator features of one token.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureVector(pub Vec<String>);

impl FeatureVector {
    pub fn contains(&self, f: &str) -> bool {
        self.0.iter().any(|x| x == f)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[String]> for FeatureVector {
    fn as_ref(&self) -> &[String] {
        &self.0
    }
}

fn desc_bin(size: usize) -> &'static str {
    match size {
        0 | 1 => "1",
        2 => "2",
        3 => "3",
        4..=5 => "4-5",
        6..=10 => "6-10",
        _ => "11+",
    }
}

fn sentlen_bin(n: usize) -> &'static str {
    match n {
        0..=5 => "1-5",
        6..=10 => "6-10",
        11..=20 => "11-20",
        21..=40 => "21-40",
        _ => "41+",
    }
}

/// Features of token `i` (1-based): affixes, POS and relation, parent,
/// binned subtree size, binned relative position and sentence length, and
/// the neighbouring tokens.
pub fn extract_features(sentence: &Sentence, i: usize, tree: &DepTree) -> FeatureVector {
    let n = sentence.len();
    let tok = sentence.token(i);
    let chars: Vec<char> = tok.form.chars().collect();
    let mut f = Vec::with_capacity(24);

    for k in [2, 3] {
        if chars.len() >= k {
            f.push(format!("pref{k}={}", chars[..k].iter().collect::<String>()));
        }
    }
    for k in [2, 3] {
        if chars.len() >= k {
            f.push(format!(
                "suf{k}={}",
                chars[chars.len() - k..].iter().collect::<String>()
            ));
        }
    }
    f.push(format!("pos={}", tok.upos));
    f.push(format!("dep={}", tok.deprel));
    if tok.head == 0 {
        f.push("parent_lemma=__ROOT__".to_string());
        f.push("parent_pos=__ROOT__".to_string());
    } else {
        let parent = sentence.token(tok.head);
        f.push(format!("parent_lemma={}", parent.lemma));
        f.push(format!("parent_pos={}", parent.upos));
    }
    f.push(format!("desc_bin={}", desc_bin(tree.subtree_size(i))));
    f.push(format!("pos_pct_bin={}", (10 * i / n).min(9)));
    f.push(format!("sentlen_bin={}", sentlen_bin(n)));
    if i > 1 {
        let p = sentence.token(i - 1);
        f.push(format!("prev_form={}", p.form));
        f.push(format!("prev_pos={}", p.upos));
        f.push(format!("prev_dep={}", p.deprel));
    } else {
        f.push("prev_form=__BOS__".to_string());
        f.push("prev_pos=__BOS__".to_string());
        f.push("prev_dep=__BOS__".to_string());
    }
    if i < n {
        let x = sentence.token(i + 1);
        f.push(format!("next_form={}", x.form));
        f.push(format!("next_pos={}", x.upos));
        f.push(format!("next_dep={}", x.deprel));
    } else {
        f.push("next_form=__EOS__".to_string());
        f.push("next_pos=__EOS__".to_string());
        f.push("next_dep=__EOS__".to_string());
    }
    f.push("bias".to_string());
    FeatureVector(f)
}

/// Features for every token of the sentence.
pub fn sentence_features(sentence: &Sentence, tree: &DepTree) -> Vec<FeatureVector> {
    (1..=sentence.len())
        .map(|i| extract_features(sentence, i, tree))
        .collect()
}

/// The type of the span headed by each token, preferring the outermost
/// span when several share a head; `None` elsewhere.
pub fn gold_labels(sentence: &Sentence) -> Vec<Option<EntityType>> {
    let mut best: Vec<Option<(usize, EntityType)>> = vec![None; sentence.len()];
    for span in &sentence.entities {
        let slot = &mut best[span.head - 1];
        if slot.is_none_or(|(len, _)| span.len() > len) {
            *slot = Some((span.len(), span.etype));
        }
    }
    best.into_iter().map(|b| b.map(|(_, t)| t)).collect()
}
