//! ABSynth: deterministic frame-semantic corpus generation.
//!
//! Builds annotated synthetic corpora with Zipfian lexical statistics,
//! cluster-based collocations, frame-governed syntax, and entropy-tier
//! calibration. Every sentence carries parallel POS, semantic-role, and
//! entropy-tier annotations derived from its frame.

pub mod entropy;
pub mod error;
pub mod frames;
pub mod generator;
pub mod io;
pub mod lexicon;
pub mod rng;
pub mod stats;

pub use entropy::EntropyProfile;
pub use error::{AbsynthError, Result};
pub use frames::{default_inventory, validate_frame, Complexity, FrameSpec, Role, Slot, Tier};
pub use generator::{
    generate_corpus, Corpus, CorpusConfig, Generator, Predictability, SamplingTuning,
    SentenceRecord,
};
pub use lexicon::{
    association_strength, build_lexicon, default_category_counts, zipf_distribution,
    zipf_probability, ClusterConfig, Lexicon, LexiconEntry, PosCategory, ZipfConfig,
};
pub use stats::{corpus_stats, zipf_fit, StatsReport};
