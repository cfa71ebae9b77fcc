//! Model configurations: the three published presets plus ablation variants.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TraceError};

pub const SEQ_LEN: usize = 16;
pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const RESERVED_TOKENS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    NoFfn,
    SingleHead,
}

impl Ablation {
    pub fn tag(&self) -> &'static str {
        match self {
            Ablation::NoFfn => "no_ffn",
            Ablation::SingleHead => "single_head",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "no_ffn" => Some(Ablation::NoFfn),
            "single_head" => Some(Ablation::SingleHead),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub seq_len: usize,
    pub dropout: f64,
    pub vocab_size: usize,
    pub use_ffn: bool,
    /// Pre-norm by default; post-norm is kept testable.
    pub post_norm: bool,
    pub variant: String,
}

impl ModelConfig {
    fn preset(n_layers: usize, d_model: usize, n_heads: usize, d_ffn: usize, vocab: usize, variant: &str) -> Self {
        ModelConfig {
            n_layers,
            d_model,
            n_heads,
            d_ffn,
            seq_len: SEQ_LEN,
            dropout: 0.1,
            vocab_size: vocab,
            use_ffn: true,
            post_norm: false,
            variant: variant.into(),
        }
    }

    pub fn small(vocab_size: usize) -> Self {
        Self::preset(1, 64, 2, 128, vocab_size, "small")
    }

    pub fn medium(vocab_size: usize) -> Self {
        Self::preset(2, 96, 3, 384, vocab_size, "medium")
    }

    pub fn large(vocab_size: usize) -> Self {
        Self::preset(3, 128, 4, 512, vocab_size, "large")
    }

    pub fn by_name(name: &str, vocab_size: usize) -> Option<Self> {
        match name {
            "small" => Some(Self::small(vocab_size)),
            "medium" => Some(Self::medium(vocab_size)),
            "large" => Some(Self::large(vocab_size)),
            _ => None,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(TraceError::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.seq_len != SEQ_LEN {
            return Err(TraceError::Config(format!(
                "seq_len must be {SEQ_LEN}, got {}",
                self.seq_len
            )));
        }
        if self.vocab_size <= RESERVED_TOKENS {
            return Err(TraceError::Config("vocab_size too small".into()));
        }
        Ok(())
    }

    /// Total trainable parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let v = self.vocab_size;
        let mut n = v * d; // embedding
        for _ in 0..self.n_layers {
            n += 2 * d; // ln1
            n += 4 * d * d + 4 * d; // attention projections + biases
            if self.use_ffn {
                n += 2 * d; // ln2
                n += d * self.d_ffn + self.d_ffn + self.d_ffn * d + d;
            }
        }
        n += 2 * d; // final layer norm
        n += d * v; // unembedding
        n
    }
}

/// Apply an architectural ablation to a base configuration.
pub fn ablate(base: &ModelConfig, variant: Ablation) -> ModelConfig {
    let mut cfg = base.clone();
    match variant {
        Ablation::NoFfn => {
            cfg.use_ffn = false;
        }
        Ablation::SingleHead => {
            cfg.n_heads = 1;
        }
    }
    cfg.variant = format!("{}+{}", base.variant, variant.tag());
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_published_table() {
        let s = ModelConfig::small(9002);
        assert_eq!((s.n_layers, s.d_model, s.n_heads, s.d_ffn), (1, 64, 2, 128));
        let m = ModelConfig::medium(9002);
        assert_eq!((m.n_layers, m.d_model, m.n_heads, m.d_ffn), (2, 96, 3, 384));
        let l = ModelConfig::large(9002);
        assert_eq!((l.n_layers, l.d_model, l.n_heads, l.d_ffn), (3, 128, 4, 512));
        for c in [&s, &m, &l] {
            assert_eq!(c.seq_len, 16);
            assert!((c.dropout - 0.1).abs() < 1e-12);
            c.validate().unwrap();
        }
    }

    #[test]
    fn parameter_counts_match_published_totals_at_their_vocab() {
        // The published totals (110K / 339K / 749K) correspond to a 600-token
        // vocabulary with untied embeddings.
        for (cfg, expect) in [
            (ModelConfig::small(600), 110_000.0),
            (ModelConfig::medium(600), 339_000.0),
            (ModelConfig::large(600), 749_000.0),
        ] {
            let n = cfg.param_count() as f64;
            assert!(
                (n - expect).abs() / expect < 0.10,
                "{}: {n} vs {expect}",
                cfg.variant
            );
        }
    }

    #[test]
    fn ablations() {
        let base = ModelConfig::large(9002);
        let no_ffn = ablate(&base, Ablation::NoFfn);
        assert!(!no_ffn.use_ffn);
        assert_eq!(no_ffn.n_layers, base.n_layers);
        assert!(no_ffn.param_count() < base.param_count());

        let single = ablate(&ModelConfig::medium(9002), Ablation::SingleHead);
        assert_eq!(single.n_heads, 1);
        assert_eq!(single.d_head(), 96);
        assert_eq!(single.param_count(), ModelConfig::medium(9002).param_count());
    }
}
