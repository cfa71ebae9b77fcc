//! Distributional validation of generated corpora.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{AbsynthError, Result};
use crate::generator::{Corpus, Predictability};

/// Observed corpus statistics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatsReport {
    /// Fraction of sentences per complexity level.
    pub complexity_mix: BTreeMap<String, f64>,
    /// Fraction of tokens per entropy tier.
    pub tier_profile: BTreeMap<String, f64>,
    /// Least-squares log-log slope over tokens with count >= 5.
    pub zipf_fit_exponent: f64,
    /// Lexicon vocabulary size per category.
    pub category_token_counts: BTreeMap<String, usize>,
    pub n_sentences: usize,
    pub n_tokens: u64,
    pub distinct_tokens: usize,
    pub predictability: Predictability,
}

/// Least-squares fit of `ln count ~ -alpha ln rank` over sorted counts.
pub fn zipf_fit(counts: &[u64], min_count: u64) -> Option<f64> {
    let mut freqs: Vec<u64> = counts.iter().copied().filter(|&c| c >= min_count).collect();
    if freqs.len() < 2 {
        return None;
    }
    freqs.sort_unstable_by(|a, b| b.cmp(a));
    let xs: Vec<f64> = (1..=freqs.len()).map(|r| (r as f64).ln()).collect();
    let ys: Vec<f64> = freqs.iter().map(|&f| (f as f64).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    Some(-(sxy / sxx))
}

/// Compute the observed distribution report for a corpus.
pub fn corpus_stats(corpus: &Corpus) -> Result<StatsReport> {
    if corpus.n_sentences() == 0 {
        return Err(AbsynthError::Config("corpus is empty".into()));
    }
    let mut complexity: BTreeMap<String, u64> = BTreeMap::new();
    let mut tiers: BTreeMap<String, u64> = BTreeMap::new();
    let mut token_counts: HashMap<&str, u64> = HashMap::new();
    let mut n_tokens = 0u64;
    for r in corpus.all_records() {
        *complexity.entry(r.complexity.clone()).or_default() += 1;
        for t in &r.tiers {
            *tiers.entry(t.clone()).or_default() += 1;
        }
        for tok in &r.tokens {
            *token_counts.entry(tok.as_str()).or_default() += 1;
            n_tokens += 1;
        }
    }
    let n_sentences = corpus.n_sentences() as f64;
    let complexity_mix = complexity
        .into_iter()
        .map(|(k, v)| (k, v as f64 / n_sentences))
        .collect();
    let tier_profile = tiers
        .into_iter()
        .map(|(k, v)| (k, v as f64 / n_tokens.max(1) as f64))
        .collect();
    let counts: Vec<u64> = token_counts.values().copied().collect();
    let zipf_fit_exponent = zipf_fit(&counts, 5).unwrap_or(f64::NAN);
    let category_token_counts = corpus
        .lexicon
        .category_counts()
        .into_iter()
        .map(|(c, n)| (c.label().to_string(), n))
        .collect();
    Ok(StatsReport {
        complexity_mix,
        tier_profile,
        zipf_fit_exponent,
        category_token_counts,
        n_sentences: corpus.n_sentences(),
        n_tokens,
        distinct_tokens: token_counts.len(),
        predictability: corpus.predictability.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zipf_fit_recovers_synthetic_exponent() {
        let alpha = 1.05;
        let counts: Vec<u64> = (1..=2000u64)
            .map(|r| ((1e6 / (r as f64).powf(alpha)).round() as u64).max(1))
            .collect();
        let fit = zipf_fit(&counts, 5).unwrap();
        assert!((fit - alpha).abs() < 0.05, "fit={fit}");
    }

    #[test]
    fn zipf_fit_needs_two_points() {
        assert!(zipf_fit(&[3, 2, 1], 5).is_none());
    }
}
