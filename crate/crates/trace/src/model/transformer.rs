//! Decoder-only transformer: explicit forward and backward passes over flat
//! parameter blocks, with optional per-layer hidden-state capture.
//!
//! Pre-norm blocks: `x += attn(ln1(x))`, then `x += ffn(ln2(x))` when the FFN
//! is enabled; a final layer norm feeds the unembedding. The unembedding and
//! cross-entropy are fused and streamed over row chunks so full logit tensors
//! are never materialised.

use absynth::rng::SeedTree;

use crate::error::{Result, TraceError};
use crate::kernel::{
    add_bias, layer_norm_backward, layer_norm_forward, matmul, matmul_a_bt, matmul_at_b,
    relu_backward, relu_forward, softmax_rows, KernelError, Layout, LayerNormCache, Params, Real,
};
use crate::model::config::{ModelConfig, PAD_ID};

/// One training/evaluation batch: `input[i] = BOS ++ tokens[..S-1]`,
/// `target[i] = tokens`. Loss runs over positions whose input is not padding
/// (so the first padding target — end of sentence — is learned); token
/// accuracy runs over positions whose target is not padding.
#[derive(Clone, Debug)]
pub struct TokenBatch {
    pub input: Vec<u32>,
    pub target: Vec<u32>,
    pub batch: usize,
    pub seq: usize,
}

impl TokenBatch {
    /// Build from tokenised sequences (each already padded to `seq_len`).
    pub fn from_sequences(seqs: &[Vec<u32>], seq_len: usize, bos: u32) -> Self {
        let b = seqs.len();
        let mut input = Vec::with_capacity(b * seq_len);
        let mut target = Vec::with_capacity(b * seq_len);
        for s in seqs {
            input.push(bos);
            input.extend_from_slice(&s[..seq_len - 1]);
            target.extend_from_slice(&s[..seq_len]);
        }
        TokenBatch {
            input,
            target,
            batch: b,
            seq: seq_len,
        }
    }

    pub fn rows(&self) -> usize {
        self.batch * self.seq
    }

    /// Positions contributing to the loss: input is not padding.
    pub fn loss_mask(&self) -> Vec<bool> {
        self.input.iter().map(|&id| id != PAD_ID).collect()
    }

    /// Positions contributing to token accuracy: target is not padding.
    pub fn target_mask(&self) -> Vec<bool> {
        self.target.iter().map(|&id| id != PAD_ID).collect()
    }
}

/// Per-layer activations captured for diagnostics. Index 0 is the embedding
/// output (token embedding plus positional encoding); index `l + 1` is the
/// residual stream after block `l`. Always f64.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub hidden: Vec<Vec<f64>>,
    pub logits: Option<Vec<f64>>,
    pub batch: usize,
    pub seq: usize,
    pub d_model: usize,
}

impl ForwardTrace {
    pub fn n_layers_captured(&self) -> usize {
        self.hidden.len()
    }
}

/// Evaluation-mode forward outputs, accumulated streaming.
#[derive(Clone, Debug, Default)]
pub struct ForwardStats {
    pub loss_sum: f64,
    pub loss_rows: usize,
    pub correct_targets: usize,
    pub target_rows: usize,
    /// Per-sequence: whether every non-pad target matched the argmax.
    pub seq_exact: Vec<bool>,
    /// Per-row argmax token (filled when requested).
    pub argmax: Vec<u32>,
}

struct LayerCache<T> {
    x_in: Vec<T>,
    ln1: LayerNormCache<T>,
    h1: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    probs: Vec<T>,
    ctx: Vec<T>,
    attn_drop: Option<Vec<T>>,
    x_mid: Vec<T>,
    ln2: Option<LayerNormCache<T>>,
    h2: Option<Vec<T>>,
    ffn_act: Option<Vec<T>>,
    ffn_drop: Option<Vec<T>>,
}

struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
    x_final: Vec<T>,
    ln_f: LayerNormCache<T>,
    h_f: Vec<T>,
}

/// Dropout behaviour for one forward pass.
#[derive(Clone, Copy)]
pub enum Mode {
    /// Training mode: dropout keyed by (seed root, step).
    Train { dropout_root: SeedTree, step: u64 },
    /// Evaluation / diagnostic mode: dropout disabled.
    Eval,
}

pub struct Model<T> {
    pub cfg: ModelConfig,
    pub params: Params<T>,
    /// Sinusoidal positional encodings, [seq, d].
    pos: Vec<T>,
}

pub fn layout_for(cfg: &ModelConfig) -> Layout {
    let d = cfg.d_model;
    let v = cfg.vocab_size;
    let mut layout = Layout::default();
    layout.push("embed", &[v, d]);
    for l in 0..cfg.n_layers {
        layout.push(format!("layer{l}.ln1.g"), &[d]);
        layout.push(format!("layer{l}.ln1.b"), &[d]);
        layout.push(format!("layer{l}.attn.wq"), &[d, d]);
        layout.push(format!("layer{l}.attn.bq"), &[d]);
        layout.push(format!("layer{l}.attn.wk"), &[d, d]);
        layout.push(format!("layer{l}.attn.bk"), &[d]);
        layout.push(format!("layer{l}.attn.wv"), &[d, d]);
        layout.push(format!("layer{l}.attn.bv"), &[d]);
        layout.push(format!("layer{l}.attn.wo"), &[d, d]);
        layout.push(format!("layer{l}.attn.bo"), &[d]);
        if cfg.use_ffn {
            layout.push(format!("layer{l}.ln2.g"), &[d]);
            layout.push(format!("layer{l}.ln2.b"), &[d]);
            layout.push(format!("layer{l}.ffn.w1"), &[d, cfg.d_ffn]);
            layout.push(format!("layer{l}.ffn.b1"), &[cfg.d_ffn]);
            layout.push(format!("layer{l}.ffn.w2"), &[cfg.d_ffn, d]);
            layout.push(format!("layer{l}.ffn.b2"), &[d]);
        }
    }
    layout.push("ln_f.g", &[d]);
    layout.push("ln_f.b", &[d]);
    layout.push("unembed", &[d, v]);
    layout
}

fn sinusoidal_positions<T: Real>(seq: usize, d: usize) -> Vec<T> {
    let mut pos = vec![T::zero(); seq * d];
    for p in 0..seq {
        for i in 0..d / 2 {
            let rate = (p as f64) / 10000f64.powf(2.0 * i as f64 / d as f64);
            pos[p * d + 2 * i] = T::from_f64(rate.sin());
            pos[p * d + 2 * i + 1] = T::from_f64(rate.cos());
        }
    }
    pos
}

impl<T: Real> Model<T> {
    /// Initialise with normal(0, 0.02) projections and zeroed biases.
    pub fn init(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let layout = layout_for(&cfg);
        let mut params = Params::zeros(layout.clone());
        let root = SeedTree::new(seed).child("init");
        for (bi, block) in layout.blocks.iter().enumerate() {
            let data = &mut params.data[block.offset..block.offset + block.len()];
            if block.name.ends_with(".g") || block.name == "ln_f.g" {
                for x in data.iter_mut() {
                    *x = T::one();
                }
            } else if block.name.ends_with(".b")
                || block.name.ends_with(".bq")
                || block.name.ends_with(".bk")
                || block.name.ends_with(".bv")
                || block.name.ends_with(".bo")
                || block.name.ends_with(".b1")
                || block.name.ends_with(".b2")
            {
                // biases stay zero
            } else {
                let mut s = root.index(bi as u64).stream();
                for x in data.iter_mut() {
                    *x = T::from_f64(s.normal() * 0.02);
                }
            }
        }
        let pos = sinusoidal_positions(cfg.seq_len, cfg.d_model);
        Ok(Model { cfg, params, pos })
    }

    pub fn from_params(cfg: ModelConfig, params: Params<T>) -> Result<Self> {
        cfg.validate()?;
        if params.len() != cfg.param_count() {
            return Err(TraceError::Config(format!(
                "parameter vector length {} does not match config ({})",
                params.len(),
                cfg.param_count()
            )));
        }
        let pos = sinusoidal_positions(cfg.seq_len, cfg.d_model);
        Ok(Model { cfg, params, pos })
    }

    /// Cast parameters to another precision (used to run diagnostics in f64
    /// on models trained in f32).
    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.cast(),
            pos: self.pos.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    fn dropout_mask(&self, root: &SeedTree, step: u64, site: u64, n: usize) -> Vec<T> {
        let p = self.cfg.dropout;
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mut s = root.index(step).index(site).stream();
        (0..n)
            .map(|_| {
                if s.next_f64() < p {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect()
    }

    fn embed(&self, batch: &TokenBatch) -> Vec<T> {
        let d = self.cfg.d_model;
        let embed = self.params.block("embed");
        let mut x = vec![T::zero(); batch.rows() * d];
        for (r, &id) in batch.input.iter().enumerate() {
            let row = &embed[(id as usize) * d..(id as usize + 1) * d];
            let prow = &self.pos[(r % batch.seq) * d..(r % batch.seq + 1) * d];
            let xr = &mut x[r * d..(r + 1) * d];
            for i in 0..d {
                xr[i] = row[i] + prow[i];
            }
        }
        x
    }

    /// Multi-head causal self-attention forward for one layer.
    #[allow(clippy::type_complexity)]
    fn attention_forward(
        &self,
        layer: usize,
        h1: &[T],
        batch: &TokenBatch,
    ) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
        let d = self.cfg.d_model;
        let nh = self.cfg.n_heads;
        let dh = self.cfg.d_head();
        let s = batch.seq;
        let rows = batch.rows();
        let p = &self.params;
        let mut q = vec![T::zero(); rows * d];
        let mut k = vec![T::zero(); rows * d];
        let mut v = vec![T::zero(); rows * d];
        matmul(h1, p.block(&format!("layer{layer}.attn.wq")), &mut q, rows, d, d);
        add_bias(&mut q, p.block(&format!("layer{layer}.attn.bq")));
        matmul(h1, p.block(&format!("layer{layer}.attn.wk")), &mut k, rows, d, d);
        add_bias(&mut k, p.block(&format!("layer{layer}.attn.bk")));
        matmul(h1, p.block(&format!("layer{layer}.attn.wv")), &mut v, rows, d, d);
        add_bias(&mut v, p.block(&format!("layer{layer}.attn.bv")));

        let scale = T::from_f64(1.0 / (dh as f64).sqrt());
        let neg_inf = T::from_f64(-1e30);
        let mut probs = vec![T::zero(); batch.batch * nh * s * s];
        let mut ctx = vec![T::zero(); rows * d];
        for b in 0..batch.batch {
            for h in 0..nh {
                let pb = &mut probs[(b * nh + h) * s * s..(b * nh + h + 1) * s * s];
                for si in 0..s {
                    let qrow = &q[(b * s + si) * d + h * dh..(b * s + si) * d + (h + 1) * dh];
                    for sj in 0..s {
                        if sj > si {
                            pb[si * s + sj] = neg_inf;
                            continue;
                        }
                        let krow =
                            &k[(b * s + sj) * d + h * dh..(b * s + sj) * d + (h + 1) * dh];
                        let mut acc = T::zero();
                        for t in 0..dh {
                            acc += qrow[t] * krow[t];
                        }
                        pb[si * s + sj] = acc * scale;
                    }
                }
                softmax_rows(pb, s);
                for si in 0..s {
                    let orow =
                        &mut ctx[(b * s + si) * d + h * dh..(b * s + si) * d + (h + 1) * dh];
                    for sj in 0..=si {
                        let w = pb[si * s + sj];
                        let vrow =
                            &v[(b * s + sj) * d + h * dh..(b * s + sj) * d + (h + 1) * dh];
                        for t in 0..dh {
                            orow[t] += w * vrow[t];
                        }
                    }
                }
            }
        }
        let mut out = vec![T::zero(); rows * d];
        matmul(&ctx, p.block(&format!("layer{layer}.attn.wo")), &mut out, rows, d, d);
        add_bias(&mut out, p.block(&format!("layer{layer}.attn.bo")));
        (out, q, k, v, probs, ctx)
    }

    /// Full forward pass. Returns final hidden states (post final norm) plus
    /// the cache needed for the backward, and optionally captured states.
    fn forward_inner(
        &self,
        batch: &TokenBatch,
        mode: Mode,
        capture: Option<&mut ForwardTrace>,
    ) -> ForwardCache<T> {
        let d = self.cfg.d_model;
        let rows = batch.rows();
        let mut x = self.embed(batch);
        let mut trace_hidden: Vec<Vec<f64>> = Vec::new();
        let capturing = capture.is_some();
        if capturing {
            trace_hidden.push(x.iter().map(|v| v.to_f64()).collect());
        }

        let mut layers = Vec::with_capacity(self.cfg.n_layers);
        for l in 0..self.cfg.n_layers {
            let x_in = x.clone();
            let gain = self.params.block(&format!("layer{l}.ln1.g"));
            let bias = self.params.block(&format!("layer{l}.ln1.b"));
            let mut h1 = vec![T::zero(); rows * d];
            let ln1 = layer_norm_forward(&x, gain, bias, &mut h1, d);
            let (mut attn_out, q, k, v, probs, ctx) = self.attention_forward(l, &h1, batch);
            let attn_drop = match mode {
                Mode::Train { dropout_root, step } => {
                    let mask = self.dropout_mask(&dropout_root, step, (l * 2) as u64, rows * d);
                    for (o, &m) in attn_out.iter_mut().zip(mask.iter()) {
                        *o *= m;
                    }
                    Some(mask)
                }
                Mode::Eval => None,
            };
            for (xi, &a) in x.iter_mut().zip(attn_out.iter()) {
                *xi += a;
            }
            let x_mid = x.clone();

            let (ln2, h2, ffn_act, ffn_drop) = if self.cfg.use_ffn {
                let gain2 = self.params.block(&format!("layer{l}.ln2.g"));
                let bias2 = self.params.block(&format!("layer{l}.ln2.b"));
                let mut h2 = vec![T::zero(); rows * d];
                let ln2 = layer_norm_forward(&x, gain2, bias2, &mut h2, d);
                let f = self.cfg.d_ffn;
                let mut act = vec![T::zero(); rows * f];
                matmul(&h2, self.params.block(&format!("layer{l}.ffn.w1")), &mut act, rows, d, f);
                add_bias(&mut act, self.params.block(&format!("layer{l}.ffn.b1")));
                relu_forward(&mut act);
                let mut ffn_out = vec![T::zero(); rows * d];
                matmul(&act, self.params.block(&format!("layer{l}.ffn.w2")), &mut ffn_out, rows, f, d);
                add_bias(&mut ffn_out, self.params.block(&format!("layer{l}.ffn.b2")));
                let ffn_drop = match mode {
                    Mode::Train { dropout_root, step } => {
                        let mask =
                            self.dropout_mask(&dropout_root, step, (l * 2 + 1) as u64, rows * d);
                        for (o, &m) in ffn_out.iter_mut().zip(mask.iter()) {
                            *o *= m;
                        }
                        Some(mask)
                    }
                    Mode::Eval => None,
                };
                for (xi, &a) in x.iter_mut().zip(ffn_out.iter()) {
                    *xi += a;
                }
                (Some(ln2), Some(h2), Some(act), ffn_drop)
            } else {
                (None, None, None, None)
            };

            if capturing {
                trace_hidden.push(x.iter().map(|v| v.to_f64()).collect());
            }
            layers.push(LayerCache {
                x_in,
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                ctx,
                attn_drop,
                x_mid,
                ln2,
                h2,
                ffn_act,
                ffn_drop,
            });
        }

        let gain = self.params.block("ln_f.g");
        let bias = self.params.block("ln_f.b");
        let mut h_f = vec![T::zero(); rows * d];
        let ln_f = layer_norm_forward(&x, gain, bias, &mut h_f, d);

        if let Some(tr) = capture {
            tr.hidden = trace_hidden;
            tr.batch = batch.batch;
            tr.seq = batch.seq;
            tr.d_model = d;
        }

        ForwardCache {
            layers,
            x_final: x,
            ln_f,
            h_f,
        }
    }

    /// Cross-entropy over the batch plus full parameter gradients and the
    /// batch accuracy statistics (computed from the same fused logits pass).
    pub fn loss_and_grad(
        &self,
        batch: &TokenBatch,
        mode: Mode,
    ) -> Result<(f64, Params<T>, ForwardStats)> {
        let cache = self.forward_inner(batch, mode, None);
        let loss_mask = batch.loss_mask();
        let n_loss = loss_mask.iter().filter(|&&m| m).count();
        if n_loss == 0 {
            return Err(TraceError::Kernel(KernelError::EmptyBatch));
        }
        let mut grads = Params::zeros(self.params.layout.clone());
        let rows = batch.rows();
        let d = self.cfg.d_model;
        let mut dh_f = vec![T::zero(); rows * d];
        let mut stats = ForwardStats::default();
        let (loss_sum, _) = self.unembed_ce(
            &cache.h_f,
            batch,
            &loss_mask,
            n_loss,
            Some((&mut dh_f, &mut grads)),
            Some((&mut stats, false)),
        );
        stats.loss_sum = loss_sum;
        stats.loss_rows = n_loss;
        let loss = loss_sum / n_loss as f64;
        if !loss.is_finite() {
            return Err(TraceError::Kernel(KernelError::NonFinite {
                what: "loss".into(),
                step: 0,
            }));
        }
        self.backward(batch, &cache, dh_f, &mut grads);
        Ok((loss, grads, stats))
    }

    /// Evaluation forward: loss/accuracy statistics, optional capture and
    /// per-row argmax.
    pub fn forward_eval(
        &self,
        batch: &TokenBatch,
        capture: bool,
        want_argmax: bool,
    ) -> Result<(ForwardStats, Option<ForwardTrace>)> {
        let mut trace = if capture {
            Some(ForwardTrace {
                hidden: vec![],
                logits: None,
                batch: batch.batch,
                seq: batch.seq,
                d_model: self.cfg.d_model,
            })
        } else {
            None
        };
        let cache = self.forward_inner(batch, Mode::Eval, trace.as_mut());
        let loss_mask = batch.loss_mask();
        let n_loss = loss_mask.iter().filter(|&&m| m).count().max(1);
        let mut stats = ForwardStats::default();
        let (loss_sum, _) = self.unembed_ce(
            &cache.h_f,
            batch,
            &loss_mask,
            n_loss,
            None,
            Some((&mut stats, want_argmax)),
        );
        stats.loss_sum = loss_sum;
        stats.loss_rows = loss_mask.iter().filter(|&&m| m).count();
        Ok((stats, trace))
    }

    /// Fused unembedding + cross-entropy, streamed over row chunks.
    /// When `grad` is given, fills `dh_f` and the unembedding gradient.
    /// When `eval` is given, accumulates accuracy statistics.
    fn unembed_ce(
        &self,
        h_f: &[T],
        batch: &TokenBatch,
        loss_mask: &[bool],
        n_loss: usize,
        grad: Option<(&mut Vec<T>, &mut Params<T>)>,
        eval: Option<(&mut ForwardStats, bool)>,
    ) -> (f64, usize) {
        let d = self.cfg.d_model;
        let vsz = self.cfg.vocab_size;
        let rows = batch.rows();
        let unembed = self.params.block("unembed");
        let chunk = 256usize;
        let mut loss_sum = 0.0f64;
        let inv_n = T::from_f64(1.0 / n_loss as f64);
        let mut grad = grad;
        let mut eval = eval;
        let target_mask = batch.target_mask();
        let mut seq_ok = vec![true; batch.batch];
        let mut argmax_all: Vec<u32> = Vec::new();
        let mut correct = 0usize;
        let mut targets_seen = 0usize;

        let mut logits = vec![T::zero(); chunk * vsz];
        for start in (0..rows).step_by(chunk) {
            let end = (start + chunk).min(rows);
            let r = end - start;
            let hrow = &h_f[start * d..end * d];
            let lchunk = &mut logits[..r * vsz];
            matmul(hrow, unembed, lchunk, r, d, vsz);
            for i in 0..r {
                let row = &mut lchunk[i * vsz..(i + 1) * vsz];
                let gi = start + i;
                let tgt = batch.target[gi] as usize;
                // stable log-softmax
                let mut max = row[0];
                let mut arg = 0usize;
                for (j, &v) in row.iter().enumerate() {
                    if v > max {
                        max = v;
                        arg = j;
                    }
                }
                let mut sum = T::zero();
                for &v in row.iter() {
                    sum += (v - max).exp();
                }
                let log_z = max.to_f64() + sum.to_f64().ln();
                if loss_mask[gi] {
                    loss_sum += log_z - row[tgt].to_f64();
                }
                if let Some((stats, want_arg)) = eval.as_mut() {
                    if target_mask[gi] {
                        targets_seen += 1;
                        if arg == tgt {
                            correct += 1;
                        } else {
                            seq_ok[gi / batch.seq] = false;
                        }
                    }
                    if *want_arg {
                        argmax_all.push(arg as u32);
                    }
                    let _ = stats;
                }
                if let Some((_, _)) = grad.as_ref() {
                    // dlogits = (softmax - onehot) / n_loss for loss rows
                    let inv_sum = T::one() / sum;
                    if loss_mask[gi] {
                        for v in row.iter_mut() {
                            *v = (*v - max).exp() * inv_sum * inv_n;
                        }
                        row[tgt] -= inv_n;
                    } else {
                        for v in row.iter_mut() {
                            *v = T::zero();
                        }
                    }
                }
            }
            if let Some((dh, grads)) = grad.as_mut() {
                let dchunk = &mut dh[start * d..end * d];
                matmul_a_bt(lchunk, unembed, dchunk, r, vsz, d);
                let du = grads.block_mut("unembed");
                crate::kernel::matmul_at_b_acc(hrow, lchunk, du, r, d, vsz);
            }
        }

        if let Some((stats, want_arg)) = eval {
            stats.correct_targets = correct;
            stats.target_rows = targets_seen;
            stats.seq_exact = seq_ok;
            if want_arg {
                stats.argmax = argmax_all;
            }
        }
        (loss_sum, n_loss)
    }

    /// Backward through blocks given the gradient at the final hidden states.
    fn backward(&self, batch: &TokenBatch, cache: &ForwardCache<T>, dh_f: Vec<T>, grads: &mut Params<T>) {
        let d = self.cfg.d_model;
        let rows = batch.rows();
        let mut dx = vec![T::zero(); rows * d];
        // final layer norm backward
        {
            let gain = self.params.block("ln_f.g").to_vec();
            let mut dgain = vec![T::zero(); d];
            let mut dbias = vec![T::zero(); d];
            layer_norm_backward(&dh_f, &cache.ln_f, &gain, &mut dx, &mut dgain, &mut dbias, d);
            add_into(grads.block_mut("ln_f.g"), &dgain);
            add_into(grads.block_mut("ln_f.b"), &dbias);
        }

        for l in (0..self.cfg.n_layers).rev() {
            let lc = &self.cfg;
            let c = &cache.layers[l];
            let f = lc.d_ffn;
            if lc.use_ffn {
                // x = x_mid + drop(ffn(ln2(x_mid)))
                let mut dffn = dx.clone();
                if let Some(mask) = &c.ffn_drop {
                    for (g, &m) in dffn.iter_mut().zip(mask.iter()) {
                        *g *= m;
                    }
                }
                let act = c.ffn_act.as_ref().expect("ffn cache");
                let h2 = c.h2.as_ref().expect("ffn cache");
                // dW2, db2
                let mut dw2 = vec![T::zero(); f * d];
                matmul_at_b(act, &dffn, &mut dw2, rows, f, d);
                add_into(grads.block_mut(&format!("layer{l}.ffn.w2")), &dw2);
                bias_grad(&dffn, grads.block_mut(&format!("layer{l}.ffn.b2")), d);
                // back through W2 and relu
                let w2 = self.params.block(&format!("layer{l}.ffn.w2"));
                let mut dact = vec![T::zero(); rows * f];
                matmul_a_bt(&dffn, w2, &mut dact, rows, d, f);
                relu_backward(&mut dact, act);
                let mut dw1 = vec![T::zero(); d * f];
                matmul_at_b(h2, &dact, &mut dw1, rows, d, f);
                add_into(grads.block_mut(&format!("layer{l}.ffn.w1")), &dw1);
                bias_grad(&dact, grads.block_mut(&format!("layer{l}.ffn.b1")), f);
                let w1 = self.params.block(&format!("layer{l}.ffn.w1"));
                let mut dh2 = vec![T::zero(); rows * d];
                matmul_a_bt(&dact, w1, &mut dh2, rows, f, d);
                // ln2 backward adds into dx (the residual stream)
                let gain2 = self.params.block(&format!("layer{l}.ln2.g")).to_vec();
                let mut dg2 = vec![T::zero(); d];
                let mut db2v = vec![T::zero(); d];
                let mut dx_mid = vec![T::zero(); rows * d];
                layer_norm_backward(
                    &dh2,
                    c.ln2.as_ref().expect("ln2 cache"),
                    &gain2,
                    &mut dx_mid,
                    &mut dg2,
                    &mut db2v,
                    d,
                );
                add_into(grads.block_mut(&format!("layer{l}.ln2.g")), &dg2);
                add_into(grads.block_mut(&format!("layer{l}.ln2.b")), &db2v);
                for (a, &b) in dx.iter_mut().zip(dx_mid.iter()) {
                    *a += b;
                }
            }

            // x_mid = x_in + drop(attn_out)
            let mut dattn = dx.clone();
            if let Some(mask) = &c.attn_drop {
                for (g, &m) in dattn.iter_mut().zip(mask.iter()) {
                    *g *= m;
                }
            }
            // attn_out = ctx × Wo + bo
            let mut dwo = vec![T::zero(); d * d];
            matmul_at_b(&c.ctx, &dattn, &mut dwo, rows, d, d);
            add_into(grads.block_mut(&format!("layer{l}.attn.wo")), &dwo);
            bias_grad(&dattn, grads.block_mut(&format!("layer{l}.attn.bo")), d);
            let wo = self.params.block(&format!("layer{l}.attn.wo"));
            let mut dctx = vec![T::zero(); rows * d];
            matmul_a_bt(&dattn, wo, &mut dctx, rows, d, d);

            // attention core backward
            let nh = lc.n_heads;
            let dh_w = lc.d_head();
            let s = batch.seq;
            let scale = T::from_f64(1.0 / (dh_w as f64).sqrt());
            let mut dq = vec![T::zero(); rows * d];
            let mut dk = vec![T::zero(); rows * d];
            let mut dv = vec![T::zero(); rows * d];
            for b in 0..batch.batch {
                for h in 0..nh {
                    let pb = &c.probs[(b * nh + h) * s * s..(b * nh + h + 1) * s * s];
                    for si in 0..s {
                        let dctx_row = &dctx
                            [(b * s + si) * d + h * dh_w..(b * s + si) * d + (h + 1) * dh_w];
                        // dP[si, sj] = dctx · v_sj ; dV accumulation
                        let mut dprow = vec![T::zero(); si + 1];
                        for sj in 0..=si {
                            let vrow = &c.v
                                [(b * s + sj) * d + h * dh_w..(b * s + sj) * d + (h + 1) * dh_w];
                            let mut acc = T::zero();
                            for t in 0..dh_w {
                                acc += dctx_row[t] * vrow[t];
                            }
                            dprow[sj] = acc;
                            let w = pb[si * s + sj];
                            let dvrow = &mut dv
                                [(b * s + sj) * d + h * dh_w..(b * s + sj) * d + (h + 1) * dh_w];
                            for t in 0..dh_w {
                                dvrow[t] += w * dctx_row[t];
                            }
                        }
                        // softmax backward: ds = p ⊙ (dp − Σ p dp)
                        let mut dot = T::zero();
                        for sj in 0..=si {
                            dot += pb[si * s + sj] * dprow[sj];
                        }
                        for sj in 0..=si {
                            let ds = pb[si * s + sj] * (dprow[sj] - dot) * scale;
                            let krow = &c.k
                                [(b * s + sj) * d + h * dh_w..(b * s + sj) * d + (h + 1) * dh_w];
                            let qrow = &c.q
                                [(b * s + si) * d + h * dh_w..(b * s + si) * d + (h + 1) * dh_w];
                            let dqrow = &mut dq
                                [(b * s + si) * d + h * dh_w..(b * s + si) * d + (h + 1) * dh_w];
                            for t in 0..dh_w {
                                dqrow[t] += ds * krow[t];
                            }
                            let dkrow = &mut dk
                                [(b * s + sj) * d + h * dh_w..(b * s + sj) * d + (h + 1) * dh_w];
                            for t in 0..dh_w {
                                dkrow[t] += ds * qrow[t];
                            }
                        }
                    }
                }
            }

            // projections backward
            let mut dh1 = vec![T::zero(); rows * d];
            for (wname, bname, dmat) in [
                ("wq", "bq", &dq),
                ("wk", "bk", &dk),
                ("wv", "bv", &dv),
            ] {
                let mut dw = vec![T::zero(); d * d];
                matmul_at_b(&c.h1, dmat, &mut dw, rows, d, d);
                add_into(grads.block_mut(&format!("layer{l}.attn.{wname}")), &dw);
                bias_grad(dmat, grads.block_mut(&format!("layer{l}.attn.{bname}")), d);
                let w = self.params.block(&format!("layer{l}.attn.{wname}"));
                let mut partial = vec![T::zero(); rows * d];
                matmul_a_bt(dmat, w, &mut partial, rows, d, d);
                for (a, &b) in dh1.iter_mut().zip(partial.iter()) {
                    *a += b;
                }
            }

            // ln1 backward, then add residual path
            let gain1 = self.params.block(&format!("layer{l}.ln1.g")).to_vec();
            let mut dg1 = vec![T::zero(); d];
            let mut db1 = vec![T::zero(); d];
            let mut dx_in = vec![T::zero(); rows * d];
            layer_norm_backward(&dh1, &c.ln1, &gain1, &mut dx_in, &mut dg1, &mut db1, d);
            add_into(grads.block_mut(&format!("layer{l}.ln1.g")), &dg1);
            add_into(grads.block_mut(&format!("layer{l}.ln1.b")), &db1);
            for (a, &b) in dx.iter_mut().zip(dx_in.iter()) {
                *a += b;
            }
        }

        // embedding scatter
        let demb = grads.block_mut("embed");
        for (r, &id) in batch.input.iter().enumerate() {
            let drow = &dx[r * d..(r + 1) * d];
            let erow = &mut demb[(id as usize) * d..(id as usize + 1) * d];
            for i in 0..d {
                erow[i] += drow[i];
            }
        }
    }

    /// Teacher-forced trace capture in evaluation mode.
    pub fn capture_trace(&self, batch: &TokenBatch) -> Result<ForwardTrace> {
        let (_, trace) = self.forward_eval(batch, true, false)?;
        Ok(trace.expect("capture requested"))
    }
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src.iter()) {
        *a += b;
    }
}

/// Column-sum of a [rows × n] gradient into a bias gradient.
fn bias_grad<T: Real>(dmat: &[T], dbias: &mut [T], n: usize) {
    for row in dmat.chunks_exact(n) {
        for (b, &g) in dbias.iter_mut().zip(row.iter()) {
            *b += g;
        }
    }
}


