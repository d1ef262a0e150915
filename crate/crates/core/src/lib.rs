//! au2vec: facial action-unit streams → expression clusters → token
//! sequences → co-occurrence statistics → GloVe-style embeddings, plus the
//! baseline feature extractors and the regression harness used to compare
//! them.
//!
//! Data flows through small binary artifacts, one per stage:
//!
//! ```text
//! OpenFace CSVs → FrameCorpus (.aufc) → Codebook (.aukm)
//!               → TokenSequences (.autk) + Vocabulary (.auvb)
//!               → CooccurrenceTable (.auco) → EmbeddingModel (.augv)
//!               → feature TSVs → evaluation report
//! ```

pub mod cluster;
pub mod cooccur;
mod error;
pub mod eval;
pub mod features;
pub mod glove;
pub mod ingest;
mod store;
pub mod synth;
pub mod tokenize;

pub use error::{Error, Result};

/// Names and versions of the on-disk artifact formats, in pipeline order.
pub const FORMAT_VERSIONS: [(&str, u32); 6] = [
    ("AUFC", ingest::CORPUS_VERSION),
    ("AUKM", cluster::CODEBOOK_VERSION),
    ("AUVB", tokenize::VOCAB_VERSION),
    ("AUTK", tokenize::TOKENS_VERSION),
    ("AUCO", cooccur::TABLE_VERSION),
    ("AUGV", glove::MODEL_VERSION),
];
