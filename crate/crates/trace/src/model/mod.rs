//! Decoder-only transformer: configuration, tokenisation, forward/backward,
//! training loop, evaluation, and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod tokenizer;
pub mod train;
pub mod transformer;

pub use config::{ablate, Ablation, ModelConfig, BOS_ID, PAD_ID, SEQ_LEN};
pub use eval::{bleu4, corpus_bleu, evaluate, greedy_continuations, EvalMetrics};
pub use tokenizer::Vocab;
pub use train::{
    train, CheckpointEvent, MetricSeries, PlateauConfig, StopReason, TokenizedCorpus,
    TokenizedSplit, TrainOutput, TrainSchedule,
};
pub use transformer::{ForwardStats, ForwardTrace, Mode, Model, TokenBatch};
