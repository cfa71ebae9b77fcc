//! Evaluation metrics: token accuracy, perplexity, exact match, BLEU.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};
use crate::kernel::Real;
use crate::model::config::PAD_ID;
use crate::model::train::TokenizedSplit;
use crate::model::transformer::{Model, TokenBatch};

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Fraction of sequences whose every non-pad target is reproduced under
    /// teacher-forced greedy decoding.
    pub exact_match: f64,
    /// Per-position argmax accuracy over non-pad targets.
    pub token_accuracy: f64,
    /// Corpus BLEU-4 (add-one smoothing) of greedy continuations of 3-token
    /// prompts against the reference completions.
    pub bleu: f64,
    /// `exp(mean NLL)` over positions whose input is not padding.
    pub perplexity: f64,
}

const EVAL_BATCH: usize = 128;
const BLEU_PROMPT: usize = 3;

/// Evaluate a model on a split.
pub fn evaluate<T: Real>(
    model: &Model<T>,
    split: &TokenizedSplit,
    with_bleu: bool,
) -> Result<EvalMetrics> {
    if split.is_empty() {
        return Err(TraceError::Config("empty evaluation split".into()));
    }
    let seq_len = model.cfg.seq_len;
    let mut loss_sum = 0.0;
    let mut loss_rows = 0usize;
    let mut correct = 0usize;
    let mut targets = 0usize;
    let mut exact = 0usize;

    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let batch = split.batch(chunk, seq_len);
        let (stats, _) = model.forward_eval(&batch, false, false)?;
        loss_sum += stats.loss_sum;
        loss_rows += stats.loss_rows;
        correct += stats.correct_targets;
        targets += stats.target_rows;
        exact += stats.seq_exact.iter().filter(|&&e| e).count();
    }

    let bleu = if with_bleu {
        corpus_bleu(model, split)?
    } else {
        f64::NAN
    };

    Ok(EvalMetrics {
        exact_match: exact as f64 / split.len() as f64,
        token_accuracy: correct as f64 / targets.max(1) as f64,
        bleu,
        perplexity: (loss_sum / loss_rows.max(1) as f64).exp(),
    })
}

/// Greedy continuation of each sequence's first `prompt` tokens, batched.
/// Decoding stops at the first predicted PAD. Returns one candidate token
/// list per sequence.
pub fn greedy_continuations<T: Real>(
    model: &Model<T>,
    split: &TokenizedSplit,
    prompt: usize,
) -> Result<Vec<Vec<u32>>> {
    let seq_len = model.cfg.seq_len;
    let mut out = Vec::with_capacity(split.len());
    let idx: Vec<usize> = (0..split.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        // Working copies seeded with the prompt, padded elsewhere.
        let mut work: Vec<Vec<u32>> = chunk
            .iter()
            .map(|&i| {
                let mut row = vec![PAD_ID; seq_len];
                row[..prompt].copy_from_slice(&split.rows[i][..prompt]);
                row
            })
            .collect();
        let mut done: Vec<bool> = work
            .iter()
            .map(|row| row[..prompt].iter().any(|&t| t == PAD_ID))
            .collect();
        for pos in prompt..seq_len {
            if done.iter().all(|&d| d) {
                break;
            }
            let batch = TokenBatch::from_sequences(&work, seq_len, crate::model::config::BOS_ID);
            let (stats, _) = model.forward_eval(&batch, false, true)?;
            for (bi, row) in work.iter_mut().enumerate() {
                if done[bi] {
                    continue;
                }
                // argmax at input position `pos` predicts the token at `pos`.
                let pred = stats.argmax[bi * seq_len + pos];
                if pred == PAD_ID {
                    done[bi] = true;
                } else {
                    row[pos] = pred;
                }
            }
        }
        for (bi, row) in work.into_iter().enumerate() {
            let mut cand: Vec<u32> = row[prompt..].iter().copied().take_while(|&t| t != PAD_ID).collect();
            if done[bi] && cand.is_empty() {
                cand.clear();
            }
            out.push(cand);
        }
    }
    Ok(out)
}

/// Corpus BLEU-4 with add-one smoothing over n-gram precisions.
pub fn corpus_bleu<T: Real>(model: &Model<T>, split: &TokenizedSplit) -> Result<f64> {
    let candidates = greedy_continuations(model, split, BLEU_PROMPT)?;
    let references: Vec<Vec<u32>> = split
        .rows
        .iter()
        .map(|row| {
            row[BLEU_PROMPT..]
                .iter()
                .copied()
                .take_while(|&t| t != PAD_ID)
                .collect()
        })
        .collect();
    Ok(bleu4(&candidates, &references))
}

/// BLEU-4 with add-one smoothed precisions and the standard brevity penalty.
pub fn bleu4(candidates: &[Vec<u32>], references: &[Vec<u32>]) -> f64 {
    use std::collections::HashMap;
    let mut match_n = [0u64; 4];
    let mut total_n = [0u64; 4];
    let mut cand_len = 0u64;
    let mut ref_len = 0u64;
    for (cand, reference) in candidates.iter().zip(references.iter()) {
        cand_len += cand.len() as u64;
        ref_len += reference.len() as u64;
        for n in 1..=4usize {
            if cand.len() < n {
                continue;
            }
            let mut ref_counts: HashMap<&[u32], u64> = HashMap::new();
            if reference.len() >= n {
                for g in reference.windows(n) {
                    *ref_counts.entry(g).or_default() += 1;
                }
            }
            for g in cand.windows(n) {
                total_n[n - 1] += 1;
                if let Some(c) = ref_counts.get_mut(g) {
                    if *c > 0 {
                        *c -= 1;
                        match_n[n - 1] += 1;
                    }
                }
            }
        }
    }
    let mut log_p = 0.0;
    for n in 0..4 {
        let p = (match_n[n] as f64 + 1.0) / (total_n[n] as f64 + 1.0);
        log_p += p.ln() / 4.0;
    }
    let bp = if cand_len >= ref_len || cand_len == 0 {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    bp * log_p.exp()
}
