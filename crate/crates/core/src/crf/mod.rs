//! Linear-chain CRF labelling entity head tokens.
//!
//! The label space is `O` followed by the ten entity types in alphabetical
//! order. Only head positions carry a type; every other token is `O`.

mod features;
mod model;
mod train;

use rayon::prelude::*;

use crate::corpus::{Corpus, EntityType, Sentence};
use crate::{Error, Result};

pub use features::{extract_features, gold_labels, sentence_features, FeatureVector};
pub use model::{CrfModel, Instance};
pub use train::{fit, TrainConfig, TrainLog};

/// Fixed label inventory for entity head labelling.
pub struct LabelSet;

impl LabelSet {
    pub const SIZE: usize = 11;
    pub const OUTSIDE: usize = 0;

    pub fn names() -> Vec<&'static str> {
        std::iter::once("O")
            .chain(EntityType::ALL.iter().map(|t| t.as_str()))
            .collect()
    }

    pub fn index(label: Option<EntityType>) -> usize {
        label.map_or(Self::OUTSIDE, |t| t.index() + 1)
    }

    pub fn label(index: usize) -> Option<EntityType> {
        if index == Self::OUTSIDE {
            None
        } else {
            Some(EntityType::ALL[index - 1])
        }
    }
}

/// Feature strings for every token of a sentence.
pub fn sentence_feature_strings(sentence: &Sentence) -> Result<Vec<FeatureVector>> {
    let tree = sentence.tree()?;
    Ok(sentence_features(sentence, &tree))
}

/// Trains the entity head labeller on the gold annotations of `train`.
pub fn train_entity_model(train: &Corpus, cfg: &TrainConfig) -> Result<(CrfModel, TrainLog)> {
    let sentences: Vec<&Sentence> = train.sentences().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(Error::Validation("training corpus has no sentences".into()));
    }
    let feats: Vec<Vec<FeatureVector>> = sentences
        .par_iter()
        .map(|s| sentence_feature_strings(s))
        .collect::<Result<_>>()?;
    let alphabet = feats.iter().flatten().flat_map(|fv| fv.0.iter().cloned());
    let mut model = CrfModel::new(&LabelSet::names(), alphabet);
    let instances: Vec<Instance> = sentences
        .iter()
        .zip(&feats)
        .map(|(s, fv)| Instance {
            features: model.encode(fv),
            labels: gold_labels(s).into_iter().map(LabelSet::index).collect(),
        })
        .collect();
    let log = fit(&mut model, &instances, cfg)?;
    Ok((model, log))
}

impl CrfModel {
    /// Viterbi labels for a sentence.
    pub fn decode_sentence(&self, sentence: &Sentence) -> Result<Vec<Option<EntityType>>> {
        let fv = sentence_feature_strings(sentence)?;
        Ok(self
            .decode(&self.encode(&fv))
            .into_iter()
            .map(LabelSet::label)
            .collect())
    }

    /// Posterior distribution over the 11 labels at each token.
    pub fn sentence_marginals(&self, sentence: &Sentence) -> Result<Vec<Vec<f64>>> {
        let fv = sentence_feature_strings(sentence)?;
        Ok(self.marginals(&self.encode(&fv)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, EntitySpan, Partition, Token};

    #[test]
    fn label_set_order() {
        let names = LabelSet::names();
        assert_eq!(names.len(), LabelSet::SIZE);
        assert_eq!(names[0], "O");
        assert_eq!(names[1], "abstract");
        assert_eq!(names[10], "time");
        for t in EntityType::ALL {
            assert_eq!(LabelSet::label(LabelSet::index(Some(t))), Some(t));
        }
        assert_eq!(LabelSet::index(None), 0);
    }

    fn one_token_corpus(form: &str, etype: Option<EntityType>, copies: usize) -> Corpus {
        let sentences = (0..copies)
            .map(|k| {
                let mut s = Sentence::new(&format!("s{k}"), vec![Token::new(1, form, form, "NOUN", 0, "root")]);
                if let Some(t) = etype {
                    s.entities.push(EntitySpan {
                        start: 1,
                        end: 1,
                        etype: t,
                        head: 1,
                        entity_id: k as u32 + 1,
                        identity: None,
                    });
                }
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
    fn memorizes_single_example() {
        let train = one_token_corpus("Shenoute", Some(EntityType::Person), 1);
        let (model, log) = train_entity_model(&train, &TrainConfig::default()).unwrap();
        assert!(log.iterations > 0);
        let s = &train.documents[0].sentences[0];
        assert_eq!(model.decode_sentence(s).unwrap(), vec![Some(EntityType::Person)]);
        let marg = model.sentence_marginals(s).unwrap();
        assert!((marg[0].iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn empty_training_rejected() {
        let empty = Corpus::new("c", Partition::Train);
        assert!(train_entity_model(&empty, &TrainConfig::default()).is_err());
    }
}
