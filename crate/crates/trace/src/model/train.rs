//! Next-token-prediction training loop with dense checkpointing.

use absynth::rng::SeedTree;
use absynth::Corpus;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::kernel::{AdamHyper, AdamState, Real};
use crate::model::config::{ModelConfig, BOS_ID};
use crate::model::tokenizer::Vocab;
use crate::model::transformer::{Mode, Model, TokenBatch};

/// A tokenised corpus split: fixed-length rows.
#[derive(Clone, Debug)]
pub struct TokenizedSplit {
    pub rows: Vec<Vec<u32>>,
}

impl TokenizedSplit {
    pub fn from_records(vocab: &Vocab, records: &[absynth::SentenceRecord]) -> Result<Self> {
        let rows = records
            .iter()
            .map(|r| vocab.encode_tokens(&r.tokens))
            .collect::<Result<Vec<_>>>()?;
        Ok(TokenizedSplit { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn batch(&self, indices: &[usize], seq_len: usize) -> TokenBatch {
        let seqs: Vec<Vec<u32>> = indices.iter().map(|&i| self.rows[i].clone()).collect();
        TokenBatch::from_sequences(&seqs, seq_len, BOS_ID)
    }
}

/// Tokenised corpus with its vocabulary.
#[derive(Clone, Debug)]
pub struct TokenizedCorpus {
    pub vocab: Vocab,
    pub train: TokenizedSplit,
    pub val: TokenizedSplit,
    pub test: TokenizedSplit,
}

impl TokenizedCorpus {
    pub fn from_corpus(corpus: &Corpus) -> Result<Self> {
        let vocab = Vocab::from_lexicon(&corpus.lexicon);
        Ok(TokenizedCorpus {
            train: TokenizedSplit::from_records(&vocab, &corpus.train)?,
            val: TokenizedSplit::from_records(&vocab, &corpus.val)?,
            test: TokenizedSplit::from_records(&vocab, &corpus.test)?,
            vocab,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlateauConfig {
    /// Number of consecutive checkpoints over which smoothed accuracy must be
    /// flat to stop early.
    pub window: usize,
    pub min_delta: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig {
            window: 20,
            min_delta: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub adam: AdamHyper,
    /// Hard cap on optimisation steps (None = epochs decide).
    pub max_steps: Option<u64>,
    /// Early stop on an accuracy plateau (None = disabled).
    pub plateau: Option<PlateauConfig>,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            epochs: 500,
            batch_size: 128,
            checkpoint_every: 500,
            seed: 0,
            adam: AdamHyper::default(),
            max_steps: None,
            plateau: Some(PlateauConfig::default()),
        }
    }
}

/// Time-indexed diagnostic values keyed by training step.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

impl MetricSeries {
    pub fn new(name: impl Into<String>) -> Self {
        MetricSeries {
            name: name.into(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, step: u64, value: f64) {
        self.points.push((step, value));
    }

    pub fn steps(&self) -> Vec<u64> {
        self.points.iter().map(|&(s, _)| s).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, v)| v).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    EpochBudget,
    MaxSteps,
    Plateau,
}

pub struct TrainOutput<T> {
    pub model: Model<T>,
    pub opt: AdamState<T>,
    pub loss: MetricSeries,
    pub token_acc: MetricSeries,
    pub steps: u64,
    pub stopped: StopReason,
}

/// Checkpoint boundary callback payload.
pub struct CheckpointEvent<'a, T> {
    pub step: u64,
    pub model: &'a Model<T>,
    pub opt: &'a AdamState<T>,
}

const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_WINDOW: u64 = 1000;

/// Train a model from scratch (or resume from `resume`) on the train split.
///
/// Emits a checkpoint event at step 0 (or the resume step), every
/// `checkpoint_every` steps, and after the final step. Per-step training
/// loss and batch token accuracy are recorded in the returned series.
pub fn train<T: Real>(
    cfg: &ModelConfig,
    corpus: &TokenizedCorpus,
    schedule: &TrainSchedule,
    resume: Option<(Model<T>, AdamState<T>, u64)>,
    on_checkpoint: &mut dyn FnMut(CheckpointEvent<'_, T>) -> Result<()>,
) -> Result<TrainOutput<T>> {
    if schedule.epochs == 0 {
        return Err(TraceError::Config("epochs must be >= 1".into()));
    }
    if corpus.train.is_empty() {
        return Err(TraceError::Config("empty training split".into()));
    }
    let root = SeedTree::new(schedule.seed);
    let (mut model, mut opt, start_step) = match resume {
        Some((m, o, s)) => (m, o, s),
        None => {
            let model = Model::<T>::init(cfg.clone(), root.child("init").key())?;
            let opt = AdamState::new(model.params.len());
            (model, opt, 0)
        }
    };
    let dropout_root = root.child("dropout");
    let shuffle_root = root.child("shuffle");

    let mut loss_series = MetricSeries::new("loss");
    let mut acc_series = MetricSeries::new("token_acc");

    let n_train = corpus.train.len();
    let bs = schedule.batch_size.min(n_train);
    let steps_per_epoch = (n_train / bs).max(1);
    let total_budget = schedule.epochs as u64 * steps_per_epoch as u64;
    let max_steps = schedule.max_steps.unwrap_or(u64::MAX).min(total_budget);

    let mut step = start_step;
    on_checkpoint(CheckpointEvent {
        step,
        model: &model,
        opt: &opt,
    })?;

    let mut initial_loss: Option<f64> = None;
    let mut high_loss_run = 0u64;
    // Per-checkpoint mean accuracies for the plateau detector.
    let mut ckpt_acc_history: Vec<f64> = Vec::new();
    let mut acc_accum = 0.0f64;
    let mut acc_count = 0usize;
    let mut stopped = StopReason::EpochBudget;

    'outer: for epoch in 0..schedule.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut sh = shuffle_root.index(epoch as u64).stream();
        sh.shuffle(&mut order);
        for chunk in order.chunks_exact(bs) {
            if step >= max_steps {
                stopped = if step >= total_budget {
                    StopReason::EpochBudget
                } else {
                    StopReason::MaxSteps
                };
                break 'outer;
            }
            let batch = corpus.train.batch(chunk, cfg.seq_len);
            let (loss, grads, stats) = model.loss_and_grad(
                &batch,
                Mode::Train {
                    dropout_root,
                    step,
                },
            )?;
            let acc = stats.correct_targets as f64 / stats.target_rows.max(1) as f64;

            opt.step(&mut model.params.data, &grads.data, &schedule.adam, step)
                .map_err(TraceError::Kernel)?;
            step += 1;

            loss_series.push(step, loss);
            acc_series.push(step, acc);
            acc_accum += acc;
            acc_count += 1;

            let init = *initial_loss.get_or_insert(loss);
            if loss > DIVERGENCE_FACTOR * init {
                high_loss_run += 1;
                if high_loss_run >= DIVERGENCE_WINDOW {
                    return Err(TraceError::Diverged {
                        step,
                        loss,
                        initial: init,
                        window: DIVERGENCE_WINDOW,
                    });
                }
            } else {
                high_loss_run = 0;
            }

            if step % schedule.checkpoint_every == 0 {
                on_checkpoint(CheckpointEvent {
                    step,
                    model: &model,
                    opt: &opt,
                })?;
                ckpt_acc_history.push(acc_accum / acc_count.max(1) as f64);
                acc_accum = 0.0;
                acc_count = 0;
                if let Some(pl) = &schedule.plateau {
                    if ckpt_acc_history.len() >= pl.window {
                        let tail = &ckpt_acc_history[ckpt_acc_history.len() - pl.window..];
                        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        if hi - lo < pl.min_delta {
                            stopped = StopReason::Plateau;
                            break 'outer;
                        }
                    }
                }
            }
        }
    }

    if step % schedule.checkpoint_every != 0 {
        on_checkpoint(CheckpointEvent {
            step,
            model: &model,
            opt: &opt,
        })?;
    }

    Ok(TrainOutput {
        model,
        opt,
        loss: loss_series,
        token_acc: acc_series,
        steps: step,
        stopped,
    })
}
