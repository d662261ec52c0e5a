//! Nested, typed entity recognition and semi-automatic entity linking over
//! dependency-parsed corpora.
//!
//! The pipeline is split into small modules that mirror the workflow:
//!
//! * [`corpus`]: CoNLL-U reading/writing, nested entity encoding, validation.
//! * [`mentions`]: candidate span detection (noun, lookup and parse strategies).
//! * [`crf`]: a linear-chain CRF that labels entity heads.
//! * [`kb`]: head-lemma knowledge base and the majority/KB/hybrid classifiers.
//! * [`linker`]: the cascaded Wikification lookup and its baselines.
//! * [`metrics`]: span alignment, P/R/F, kappa and head accuracy.
//! * [`distant`]: term networks, tree maps and type proportions.
//! * [`review`] and [`server`]: the event-sourced link review service.

pub mod corpus;
pub mod crf;
pub mod distant;
mod error;
pub mod fsutil;
pub mod kb;
pub mod linker;
pub mod mentions;
pub mod metrics;
pub mod report;
pub mod review;
pub mod server;

pub use error::{Error, Result};

pub use corpus::{Corpus, Document, EntitySpan, EntityType, Partition, Sentence, Token};
