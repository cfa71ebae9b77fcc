//! Lexicon construction: Zipfian scaling and semantic clustering.
//!
//! Every token carries `[POS, Zipf_rank, ClusterID]` plus its normalised
//! unigram probability. Token frequencies follow a perturbed Zipf law
//! `P(tok_i) = (1/i^a + e_i) / sum_j (1/j^a + e_j)` and collocational structure
//! comes from cluster-based association strengths.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{AbsynthError, Result};
use crate::rng::SeedTree;

/// The 13 syntactic categories of the vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PosCategory {
    Noun,
    TransitiveVerb,
    IntransitiveVerb,
    CommunicationVerb,
    MotionVerb,
    Adjective,
    Adverb,
    Location,
    Temporal,
    Preposition,
    Determiner,
    Conjunction,
    Result,
}

pub const ALL_CATEGORIES: [PosCategory; 13] = [
    PosCategory::Noun,
    PosCategory::TransitiveVerb,
    PosCategory::IntransitiveVerb,
    PosCategory::CommunicationVerb,
    PosCategory::MotionVerb,
    PosCategory::Adjective,
    PosCategory::Adverb,
    PosCategory::Location,
    PosCategory::Temporal,
    PosCategory::Preposition,
    PosCategory::Determiner,
    PosCategory::Conjunction,
    PosCategory::Result,
];

impl PosCategory {
    /// Annotation label, matching the probe evaluation tables.
    pub fn label(&self) -> &'static str {
        match self {
            PosCategory::Noun => "NOUN",
            PosCategory::TransitiveVerb => "TRANSITIVE_VERB",
            PosCategory::IntransitiveVerb => "INTRANSITIVE_VERB",
            PosCategory::CommunicationVerb => "COMMUNICATION_VERB",
            PosCategory::MotionVerb => "MOTION_VERB",
            PosCategory::Adjective => "ADJ",
            PosCategory::Adverb => "ADV",
            PosCategory::Location => "LOCATION",
            PosCategory::Temporal => "TEMP",
            PosCategory::Preposition => "PREP",
            PosCategory::Determiner => "DETERMINER",
            PosCategory::Conjunction => "CONJ",
            PosCategory::Result => "RESULT",
        }
    }

    /// Stem used for naturalised token names ("noun5", "verb3", "det1", ...).
    pub fn stem(&self) -> &'static str {
        match self {
            PosCategory::Noun => "noun",
            PosCategory::TransitiveVerb => "verb",
            PosCategory::IntransitiveVerb => "iverb",
            PosCategory::CommunicationVerb => "cverb",
            PosCategory::MotionVerb => "mverb",
            PosCategory::Adjective => "adj",
            PosCategory::Adverb => "adv",
            PosCategory::Location => "location",
            PosCategory::Temporal => "temp",
            PosCategory::Preposition => "prep",
            PosCategory::Determiner => "det",
            PosCategory::Conjunction => "conj",
            PosCategory::Result => "result",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        ALL_CATEGORIES.iter().copied().find(|c| c.label() == label)
    }
}

/// Default per-category vocabulary sizes, totalling 9000.
///
/// Follows the published vocabulary distribution except ADJ, which is reduced
/// from 1388 to 1114 so the categories actually sum to the stated 9000.
pub fn default_category_counts() -> BTreeMap<PosCategory, usize> {
    use PosCategory::*;
    [
        (Noun, 2780),
        (TransitiveVerb, 694),
        (IntransitiveVerb, 694),
        (CommunicationVerb, 347),
        (MotionVerb, 347),
        (Adjective, 1114),
        (Adverb, 555),
        (Location, 694),
        (Temporal, 694),
        (Preposition, 416),
        (Determiner, 111),
        (Conjunction, 277),
        (Result, 277),
    ]
    .into_iter()
    .collect()
}

/// Zipfian frequency configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZipfConfig {
    /// Power-law exponent.
    pub alpha: f64,
    /// Std-dev of the per-rank perturbation e_i ~ N(0, sigma).
    pub noise_sigma: f64,
    /// Vocabulary size V.
    pub vocab_size: usize,
}

impl Default for ZipfConfig {
    fn default() -> Self {
        ZipfConfig {
            alpha: 1.05,
            noise_sigma: 0.05,
            vocab_size: 9000,
        }
    }
}

impl ZipfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 {
            return Err(AbsynthError::Config(format!(
                "zipf alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(AbsynthError::Config(format!(
                "zipf noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.vocab_size == 0 {
            return Err(AbsynthError::Config("vocab_size must be positive".into()));
        }
        Ok(())
    }
}

/// Semantic cluster configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n_clusters: usize,
    /// Intra-cluster association strengths are drawn from this interval.
    pub intra_range: (f64, f64),
    /// Cross-cluster association strengths are drawn from this interval.
    pub cross_range: (f64, f64),
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            n_clusters: 20,
            intra_range: (0.4, 0.7),
            cross_range: (0.05, 0.2),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_interval = |(lo, hi): (f64, f64)| (0.0..=1.0).contains(&lo) && lo <= hi && hi <= 1.0;
        if self.n_clusters == 0 {
            return Err(AbsynthError::Config("n_clusters must be positive".into()));
        }
        if !ok_interval(self.intra_range) || !ok_interval(self.cross_range) {
            return Err(AbsynthError::Config(
                "association ranges must be sub-intervals of [0,1]".into(),
            ));
        }
        if self.intra_range.0 <= self.cross_range.1 {
            return Err(AbsynthError::Config(format!(
                "intra lower bound {} must exceed cross upper bound {}",
                self.intra_range.0, self.cross_range.1
            )));
        }
        Ok(())
    }
}

/// One lexicon token.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub token_name: String,
    pub pos_category: PosCategory,
    /// Global frequency rank, 1-based (1 = most frequent).
    pub zipf_rank: usize,
    pub cluster_id: usize,
    pub unigram_prob: f64,
}

/// The full lexicon, ordered by global Zipf rank.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Lexicon {
    pub entries: Vec<LexiconEntry>,
    pub zipf: ZipfConfig,
    pub clusters: ClusterConfig,
    pub seed: u64,
    #[serde(skip)]
    name_index: HashMap<String, usize>,
    #[serde(skip)]
    by_category: BTreeMap<PosCategory, Vec<usize>>,
}

/// Unperturbed, or singly perturbed, Zipf weight for one rank.
pub fn zipf_weight(rank: usize, cfg: &ZipfConfig, noise: f64) -> Result<f64> {
    if rank == 0 || rank > cfg.vocab_size {
        return Err(AbsynthError::Config(format!(
            "rank {rank} out of range 1..={}",
            cfg.vocab_size
        )));
    }
    let w = (rank as f64).powf(-cfg.alpha) + noise;
    if w <= 0.0 {
        return Err(AbsynthError::NonPositiveWeight { rank, weight: w });
    }
    Ok(w)
}

/// `P(tok_rank)` with this rank's perturbation `noise` and all other ranks
/// unperturbed. With `noise = 0` this is the closed-form Zipf probability.
pub fn zipf_probability(rank: usize, cfg: &ZipfConfig, noise: f64) -> Result<f64> {
    let w = zipf_weight(rank, cfg, noise)?;
    let mut denom = 0.0;
    for j in 1..=cfg.vocab_size {
        denom += (j as f64).powf(-cfg.alpha);
    }
    denom += noise; // only this rank is perturbed
    Ok(w / denom)
}

/// Normalised distribution over all ranks given a full perturbation vector.
pub fn zipf_distribution(cfg: &ZipfConfig, noise: &[f64]) -> Result<Vec<f64>> {
    if !noise.is_empty() && noise.len() != cfg.vocab_size {
        return Err(AbsynthError::Config(format!(
            "noise vector length {} != vocab_size {}",
            noise.len(),
            cfg.vocab_size
        )));
    }
    let mut weights = Vec::with_capacity(cfg.vocab_size);
    for rank in 1..=cfg.vocab_size {
        let e = if noise.is_empty() { 0.0 } else { noise[rank - 1] };
        weights.push(zipf_weight(rank, cfg, e)?);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(weights)
}

/// Build the full lexicon: assign ranks to categories by proportional
/// interleaving, draw per-rank Zipf noise, and assign clusters round-robin
/// within each category. Deterministic given the seed.
pub fn build_lexicon(
    zipf: &ZipfConfig,
    clusters: &ClusterConfig,
    category_counts: &BTreeMap<PosCategory, usize>,
    seed: u64,
) -> Result<Lexicon> {
    zipf.validate()?;
    clusters.validate()?;
    let total: usize = category_counts.values().sum();
    if total != zipf.vocab_size {
        return Err(AbsynthError::Config(format!(
            "category counts sum to {total}, expected vocab_size {}",
            zipf.vocab_size
        )));
    }

    // Proportional interleave of ranks across categories: at every rank pick
    // the category with the largest accumulated quota, so each category's
    // tokens span the whole frequency spectrum and counts come out exact.
    let cats: Vec<PosCategory> = ALL_CATEGORIES
        .iter()
        .copied()
        .filter(|c| category_counts.get(c).copied().unwrap_or(0) > 0)
        .collect();
    let mut acc: Vec<i64> = vec![0; cats.len()];
    let mut remaining: Vec<i64> = cats
        .iter()
        .map(|c| category_counts[c] as i64)
        .collect();
    let mut cat_of_rank = Vec::with_capacity(total);
    for _ in 0..total {
        let mut best = None;
        let mut best_acc = i64::MIN;
        for (i, _) in cats.iter().enumerate() {
            if remaining[i] > 0 {
                acc[i] += category_counts[&cats[i]] as i64;
                if acc[i] > best_acc {
                    best_acc = acc[i];
                    best = Some(i);
                }
            }
        }
        let b = best.expect("counts exhausted before all ranks assigned");
        acc[b] -= total as i64;
        remaining[b] -= 1;
        cat_of_rank.push(cats[b]);
    }

    // Per-rank noise: resample once on a non-positive weight, then clamp.
    let noise_root = SeedTree::new(seed).child("zipf-noise");
    let mut weights = Vec::with_capacity(total);
    for rank in 1..=total {
        let mut s = noise_root.index(rank as u64).stream();
        let base = (rank as f64).powf(-zipf.alpha);
        let mut w = base + s.normal() * zipf.noise_sigma;
        if w <= 0.0 {
            w = base + s.normal() * zipf.noise_sigma;
        }
        if w <= 0.0 {
            w = 1e-6;
        }
        weights.push(w);
    }
    let norm: f64 = weights.iter().sum();

    let mut per_cat_index: BTreeMap<PosCategory, usize> = BTreeMap::new();
    let mut entries = Vec::with_capacity(total);
    for (i, &cat) in cat_of_rank.iter().enumerate() {
        let idx = per_cat_index.entry(cat).or_insert(0);
        *idx += 1;
        entries.push(LexiconEntry {
            token_name: format!("{}{}", cat.stem(), idx),
            pos_category: cat,
            zipf_rank: i + 1,
            cluster_id: (*idx - 1) % clusters.n_clusters,
            unigram_prob: weights[i] / norm,
        });
    }

    let mut lex = Lexicon {
        entries,
        zipf: zipf.clone(),
        clusters: clusters.clone(),
        seed,
        name_index: HashMap::new(),
        by_category: BTreeMap::new(),
    };
    lex.rebuild_indexes();
    Ok(lex)
}

impl Lexicon {
    /// Rebuild the derived lookup tables (needed after deserialisation).
    pub fn rebuild_indexes(&mut self) {
        self.name_index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token_name.clone(), i))
            .collect();
        self.by_category.clear();
        for (i, e) in self.entries.iter().enumerate() {
            self.by_category.entry(e.pos_category).or_default().push(i);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: usize) -> &LexiconEntry {
        &self.entries[id]
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.name_index.get(name).copied()
    }

    /// Entry ids of a category, in within-category rank order.
    pub fn category_ids(&self, cat: PosCategory) -> &[usize] {
        self.by_category
            .get(&cat)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
    }

    pub fn category_counts(&self) -> BTreeMap<PosCategory, usize> {
        self.by_category
            .iter()
            .map(|(c, v)| (*c, v.len()))
            .collect()
    }
}

/// Association strength between two tokens: `S_base(c_i, c_j) + U(0, S_range)`,
/// with intra-cluster pairs drawn from the stronger interval. Symmetric in its
/// arguments for a fixed seed.
pub fn association_strength(
    a: &LexiconEntry,
    b: &LexiconEntry,
    cfg: &ClusterConfig,
    seed: u64,
) -> f64 {
    let (lo, hi) = if a.cluster_id == b.cluster_id {
        cfg.intra_range
    } else {
        cfg.cross_range
    };
    let (r1, r2) = if a.zipf_rank <= b.zipf_rank {
        (a.zipf_rank, b.zipf_rank)
    } else {
        (b.zipf_rank, a.zipf_rank)
    };
    let u = SeedTree::new(seed)
        .child("assoc")
        .index(r1 as u64)
        .index(r2 as u64)
        .stream()
        .next_f64();
    lo + u * (hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_zipf(v: usize) -> ZipfConfig {
        ZipfConfig {
            alpha: 1.05,
            noise_sigma: 0.0,
            vocab_size: v,
        }
    }

    #[test]
    fn zipf_probability_closed_form() {
        // alpha=1.05, V=3, zero noise: hand-evaluated normalisation.
        let cfg = tiny_zipf(3);
        let p1 = zipf_probability(1, &cfg, 0.0).unwrap();
        let p3 = zipf_probability(3, &cfg, 0.0).unwrap();
        assert!((p1 - 0.5560).abs() < 5e-4, "p1={p1}");
        assert!((p3 - 0.1754).abs() < 5e-4, "p3={p3}");
    }

    #[test]
    fn zipf_probability_single_token() {
        let cfg = ZipfConfig {
            alpha: 1.0,
            ..tiny_zipf(1)
        };
        assert_eq!(zipf_probability(1, &cfg, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn zipf_rank1_rank2_ratio_is_two_to_alpha() {
        let cfg = tiny_zipf(100);
        let p1 = zipf_probability(1, &cfg, 0.0).unwrap();
        let p2 = zipf_probability(2, &cfg, 0.0).unwrap();
        assert!((p1 / p2 - 2f64.powf(1.05)).abs() < 1e-12);
        assert!((p1 / p2 - 2.070).abs() < 1e-3);
    }

    #[test]
    fn zipf_negative_weight_is_domain_error() {
        let cfg = tiny_zipf(4);
        let err = zipf_probability(3, &cfg, -1.0).unwrap_err();
        match err {
            AbsynthError::NonPositiveWeight { rank, .. } => assert_eq!(rank, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn zipf_distribution_sums_to_one() {
        let cfg = ZipfConfig {
            alpha: 1.05,
            noise_sigma: 0.05,
            vocab_size: 500,
        };
        let mut s = SeedTree::new(9).child("n").stream();
        let noise: Vec<f64> = (0..500).map(|_| s.normal() * 0.05).collect();
        let dist = zipf_distribution(&cfg, &noise);
        // Some perturbations may be non-positive for deep ranks; retry with
        // clamped noise to exercise the normalisation contract.
        let dist = match dist {
            Ok(d) => d,
            Err(_) => {
                let clamped: Vec<f64> = noise.iter().map(|e| e.max(-0.5e-3)).collect();
                zipf_distribution(&cfg, &clamped).unwrap()
            }
        };
        let sum: f64 = dist.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn default_counts_total_9000() {
        let counts = default_category_counts();
        assert_eq!(counts.values().sum::<usize>(), 9000);
        assert_eq!(counts[&PosCategory::Noun], 2780);
        assert_eq!(counts[&PosCategory::TransitiveVerb], 694);
        assert_eq!(counts[&PosCategory::Determiner], 111);
    }

    #[test]
    fn build_lexicon_default_counts_and_unigram_norm() {
        let lex = build_lexicon(
            &ZipfConfig::default(),
            &ClusterConfig::default(),
            &default_category_counts(),
            42,
        )
        .unwrap();
        assert_eq!(lex.len(), 9000);
        let counts = lex.category_counts();
        assert_eq!(counts[&PosCategory::Noun], 2780);
        assert_eq!(counts[&PosCategory::TransitiveVerb], 694);
        assert_eq!(counts[&PosCategory::Determiner], 111);
        let sum: f64 = lex.entries.iter().map(|e| e.unigram_prob).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        // Unique names.
        let mut names: Vec<&str> = lex.entries.iter().map(|e| e.token_name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 9000);
    }

    #[test]
    fn build_lexicon_minimal_one_per_category() {
        let counts: BTreeMap<_, _> = ALL_CATEGORIES.iter().map(|c| (*c, 1usize)).collect();
        let zipf = ZipfConfig {
            vocab_size: 13,
            noise_sigma: 0.0,
            alpha: 1.05,
        };
        let lex = build_lexicon(&zipf, &ClusterConfig::default(), &counts, 1).unwrap();
        assert_eq!(lex.len(), 13);
        for e in &lex.entries {
            assert!(e.unigram_prob > 0.0);
        }
    }

    #[test]
    fn build_lexicon_is_deterministic() {
        let a = build_lexicon(
            &ZipfConfig::default(),
            &ClusterConfig::default(),
            &default_category_counts(),
            7,
        )
        .unwrap();
        let b = build_lexicon(
            &ZipfConfig::default(),
            &ClusterConfig::default(),
            &default_category_counts(),
            7,
        )
        .unwrap();
        let ja = serde_json::to_vec(&a).unwrap();
        let jb = serde_json::to_vec(&b).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn build_lexicon_count_mismatch_is_config_error() {
        let mut counts = default_category_counts();
        *counts.get_mut(&PosCategory::Noun).unwrap() += 1;
        let err = build_lexicon(
            &ZipfConfig::default(),
            &ClusterConfig::default(),
            &counts,
            7,
        )
        .unwrap_err();
        assert!(matches!(err, AbsynthError::Config(_)));
    }

    #[test]
    fn association_strength_ranges_and_symmetry() {
        let lex = build_lexicon(
            &ZipfConfig::default(),
            &ClusterConfig::default(),
            &default_category_counts(),
            5,
        )
        .unwrap();
        let cfg = ClusterConfig::default();
        let nouns = lex.category_ids(PosCategory::Noun);
        let mut same_seen = false;
        let mut cross_seen = false;
        for i in 0..40 {
            for j in (i + 1)..40 {
                let a = lex.entry(nouns[i]);
                let b = lex.entry(nouns[j]);
                let s_ab = association_strength(a, b, &cfg, 99);
                let s_ba = association_strength(b, a, &cfg, 99);
                assert_eq!(s_ab, s_ba);
                if a.cluster_id == b.cluster_id {
                    same_seen = true;
                    assert!((0.4..=0.7).contains(&s_ab), "intra {s_ab}");
                } else {
                    cross_seen = true;
                    assert!((0.05..=0.2).contains(&s_ab), "cross {s_ab}");
                }
            }
        }
        assert!(same_seen && cross_seen);
    }

    #[test]
    fn association_strength_degenerate_range() {
        let lex = build_lexicon(
            &ZipfConfig::default(),
            &ClusterConfig::default(),
            &default_category_counts(),
            5,
        )
        .unwrap();
        let cfg = ClusterConfig {
            intra_range: (0.4, 0.4),
            ..ClusterConfig::default()
        };
        let nouns = lex.category_ids(PosCategory::Noun);
        // cluster ids are round-robin, so ids 0 and 20 share cluster 0
        let a = lex.entry(nouns[0]);
        let b = lex.entry(nouns[20]);
        assert_eq!(a.cluster_id, b.cluster_id);
        assert_eq!(association_strength(a, b, &cfg, 1), 0.4);
    }
}
