//! Dataset ingestion, vocabularies, IDF statistics and synthetic data.

pub mod dataset;
pub mod idf;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

pub use dataset::{
    link_instances, load_dataset, load_unlabeled, parse_dataset, save_dataset, to_jsonl, Candidate,
    QAInstance, RawCandidate, RawRecord, DEFAULT_MAX_LEN,
};
pub use idf::{stopwords, IdfTable};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};
pub use tokenize::tokenize;
pub use vocab::{build_word_table, PretrainedVectors, Vocabulary, OOV, PAD};
