//! Entropy-calibrated sentence generation.
//!
//! Sampling model, per slot:
//!   * one designated *topic* slot per frame carries the sentence's lexical
//!     identity. Topics are drawn from a per-frame pool of frequent nouns
//!     (Zipf-weighted), with a small exploration rate over the whole noun
//!     category. Topic pools are disjoint across frames, so the topic reveals
//!     the frame and everything downstream stays predictable.
//!   * every other slot follows a collocational *anchor*: a fixed preferred
//!     successor of the previous token within the slot's category, chosen once
//!     per lexicon by a Zipf-and-association weighted draw. A per-tier
//!     exploration rate occasionally replaces the anchor with a fresh
//!     Zipf-weighted token, which keeps the corpus tail Zipfian.
//!
//! The generator also maintains the exact predictive distribution a next-token
//! oracle faces (posterior over frames given the emitted prefix), from which it
//! reports the corpus's achievable token accuracy and perplexity floor.

use std::collections::BTreeMap;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::entropy::EntropyProfile;
use crate::error::{AbsynthError, Result};
use crate::frames::{
    default_inventory, validate_frame, Complexity, FrameSpec, Tier, ALL_COMPLEXITY,
};
use crate::lexicon::{
    build_lexicon, default_category_counts, ClusterConfig, Lexicon, PosCategory, ZipfConfig,
};
use crate::rng::{SeedTree, Stream};

/// Knobs controlling how sharply sampling concentrates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplingTuning {
    /// Exploration rate for low/medium/high-tier slots.
    pub tau_low: f64,
    pub tau_medium: f64,
    pub tau_high: f64,
    /// Exploration rate at the topic slot (over the whole noun category).
    pub topic_explore: f64,
    /// Number of frequent nouns shared out as topic pools.
    pub topic_pool_total: usize,
    /// Weight of association strength in anchor selection.
    pub assoc_sharpness: f64,
    /// Exponent applied to Zipf weight in anchor selection; values below 1
    /// spread preferred successors across the category.
    pub anchor_gamma: f64,
    /// Exponent applied to Zipf weight inside topic pools; below 1 flattens
    /// the topic tail.
    pub pool_zipf_gamma: f64,
    /// Frequent topics get private collocational chains; rarer topics share
    /// coarse log-spaced classes.
    pub private_topics: usize,
    /// Number of coarse classes for the rare-topic tail.
    pub coarse_classes: usize,
}

impl Default for SamplingTuning {
    fn default() -> Self {
        SamplingTuning {
            tau_low: 0.0003,
            tau_medium: 0.0006,
            tau_high: 0.0012,
            topic_explore: 0.002,
            topic_pool_total: 1500,
            assoc_sharpness: 1.0,
            anchor_gamma: 0.0,
            pool_zipf_gamma: 1.0,
            private_topics: 600,
            coarse_classes: 50,
        }
    }
}

impl SamplingTuning {
    fn tau(&self, tier: Tier) -> f64 {
        match tier {
            Tier::Low => self.tau_low,
            Tier::Medium => self.tau_medium,
            Tier::High => self.tau_high,
        }
    }
}

/// Full corpus generation configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_sentences: usize,
    /// Fractions of simple/medium/complex sentences.
    pub complexity_mix: [f64; 3],
    /// Train/val/test fractions.
    pub split_fractions: [f64; 3],
    pub seed: u64,
    pub zipf: ZipfConfig,
    pub clusters: ClusterConfig,
    /// Lexicon sizes per category; defaults to the published vocabulary table.
    pub category_counts: BTreeMap<PosCategory, usize>,
    /// Target tier mix for the entropy feedback loop.
    pub tier_target: [f64; 3],
    pub tuning: SamplingTuning,
    /// Frame inventory override; `None` uses the built-in 12 frames.
    pub frames: Option<Vec<FrameSpec>>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_sentences: 25_000,
            complexity_mix: [0.55, 0.35, 0.10],
            split_fractions: [0.8, 0.1, 0.1],
            seed: 0,
            zipf: ZipfConfig::default(),
            clusters: ClusterConfig::default(),
            category_counts: default_category_counts(),
            tier_target: [0.35, 0.45, 0.20],
            tuning: SamplingTuning::default(),
            frames: None,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sentences < 10 {
            return Err(AbsynthError::Config(format!(
                "n_sentences must be at least 10, got {}",
                self.n_sentences
            )));
        }
        let mix_sum: f64 = self.complexity_mix.iter().sum();
        if (mix_sum - 1.0).abs() > 1e-9 || self.complexity_mix.iter().any(|&m| m < 0.0) {
            return Err(AbsynthError::Config(format!(
                "complexity_mix must sum to 1, got {:?}",
                self.complexity_mix
            )));
        }
        let split_sum: f64 = self.split_fractions.iter().sum();
        if (split_sum - 1.0).abs() > 1e-9 || self.split_fractions.iter().any(|&s| s < 0.0) {
            return Err(AbsynthError::Config(format!(
                "split_fractions must sum to 1, got {:?}",
                self.split_fractions
            )));
        }
        self.zipf.validate()?;
        self.clusters.validate()?;
        Ok(())
    }
}

/// One generated sentence with parallel annotations. Field names match the
/// corpus line format exactly.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SentenceRecord {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub roles: Vec<String>,
    pub tiers: Vec<String>,
    pub complexity: String,
    pub frame: String,
}

impl SentenceRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Oracle predictability of a generated corpus: what a perfect next-token
/// predictor could achieve, measured from the true sampling distributions.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Predictability {
    /// Best achievable argmax accuracy over non-pad targets.
    pub oracle_token_accuracy: f64,
    /// Entropy floor in nats per loss position (includes end-of-sentence).
    pub oracle_nll: f64,
    /// `exp(oracle_nll)`.
    pub oracle_perplexity: f64,
    pub target_positions: u64,
    pub loss_positions: u64,
}

/// A generated corpus with its splits and lexicon.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<SentenceRecord>,
    pub val: Vec<SentenceRecord>,
    pub test: Vec<SentenceRecord>,
    pub lexicon: Lexicon,
    pub config: CorpusConfig,
    pub predictability: Predictability,
}

impl Corpus {
    pub fn all_records(&self) -> impl Iterator<Item = &SentenceRecord> {
        self.train.iter().chain(self.val.iter()).chain(self.test.iter())
    }

    pub fn n_sentences(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

// ---------------------------------------------------------------------------
// Generator internals
// ---------------------------------------------------------------------------

/// Anchor context: sentence positions before and at the topic slot share a
/// global context; positions after it are keyed by the topic's cluster, so a
/// sentence's continuation is a fixed collocational chain of its topic cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum AnchorCtx {
    Start,
    Cluster(u32),
}

/// Per-slot coarseness of the chain key: every fifth slot is frame-global
/// (a fixed collocation shared by all of the frame's sentences), the rest
/// resolve the full topic class. The global slots put tokens at whole-frame
/// frequency tiers, keeping the realised spectrum dense.
fn coarsen(ctx: AnchorCtx, slot: usize) -> AnchorCtx {
    match ctx {
        AnchorCtx::Start => ctx,
        AnchorCtx::Cluster(c) => {
            if slot % 5 == 0 {
                AnchorCtx::Cluster(u32::MAX)
            } else {
                AnchorCtx::Cluster(c)
            }
        }
    }
}

struct CategoryTable {
    ids: Vec<usize>,
    /// Cumulative renormalised unigram probabilities.
    cum: Vec<f64>,
    probs: Vec<f64>,
    argmax_pos: usize,
}

impl CategoryTable {
    fn build(lexicon: &Lexicon, cat: PosCategory) -> Option<Self> {
        let ids: Vec<usize> = lexicon.category_ids(cat).to_vec();
        if ids.is_empty() {
            return None;
        }
        let raw: Vec<f64> = ids.iter().map(|&i| lexicon.entry(i).unigram_prob).collect();
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        let (argmax_pos, _) = probs
            .iter()
            .copied()
            .enumerate()
            .fold((0usize, f64::MIN), |(bi, bp), (i, p)| {
                if p > bp {
                    (i, p)
                } else {
                    (bi, bp)
                }
            });
        Some(CategoryTable {
            ids,
            cum,
            probs,
            argmax_pos,
        })
    }

    fn sample(&self, u: f64) -> usize {
        let pos = self.cum.partition_point(|&c| c < u);
        self.ids[pos.min(self.ids.len() - 1)]
    }

    /// Probability of a specific entry id under the renormalised category
    /// distribution, or 0 if the id is not in this category.
    fn prob_of(&self, lexicon: &Lexicon, id: usize) -> f64 {
        let e = lexicon.entry(id);
        // ids are stored in within-category order; look up via binary search
        // over ranks, which are increasing along `ids`.
        match self
            .ids
            .binary_search_by(|&probe| lexicon.entry(probe).zipf_rank.cmp(&e.zipf_rank))
        {
            Ok(pos) => self.probs[pos],
            Err(_) => 0.0,
        }
    }
}

struct FrameRuntime {
    spec: FrameSpec,
    /// Topic pool entry ids and cumulative in-pool probabilities.
    pool: Vec<usize>,
    pool_cum: Vec<f64>,
    pool_probs: Vec<f64>,
    /// Selection probability within its complexity level (before feedback).
    prob_in_level: f64,
    /// Fraction of slots per tier, for feedback weighting.
    tier_frac: [f64; 3],
}

pub struct Generator {
    lexicon: Lexicon,
    frames: Vec<FrameRuntime>,
    /// Frame indices per complexity level.
    by_level: [Vec<usize>; 3],
    tuning: SamplingTuning,
    complexity_mix: [f64; 3],
    categories: HashMap<PosCategory, CategoryTable>,
    topic_class: HashMap<usize, u32>,
    anchors: HashMap<(usize, AnchorCtx, u8), usize>,
    anchor_root: SeedTree,
    assoc_seed: u64,
}

impl Generator {
    pub fn new(
        lexicon: Lexicon,
        frames: Vec<FrameSpec>,
        tuning: SamplingTuning,
        complexity_mix: [f64; 3],
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(AbsynthError::Config("no frames provided".into()));
        }
        for f in &frames {
            validate_frame(f)?;
        }
        let mut categories = HashMap::new();
        for f in &frames {
            for (i, s) in f.slots.iter().enumerate() {
                if !categories.contains_key(&s.pos) {
                    match CategoryTable::build(&lexicon, s.pos) {
                        Some(t) => {
                            categories.insert(s.pos, t);
                        }
                        None => {
                            return Err(AbsynthError::EmptyCandidateSet {
                                frame: f.frame_name.clone(),
                                slot: i,
                                category: s.pos.label().to_string(),
                            })
                        }
                    }
                }
            }
        }

        let anchor_root = SeedTree::new(lexicon.seed).child("anchor");
        let assoc_seed = lexicon.seed;

        let mut by_level: [Vec<usize>; 3] = Default::default();
        for (i, f) in frames.iter().enumerate() {
            by_level[f.complexity.index()].push(i);
        }

        // Per-level weight normalisation.
        let mut prob_in_level = vec![0.0f64; frames.len()];
        for level in ALL_COMPLEXITY {
            let idxs = &by_level[level.index()];
            let total: f64 = idxs.iter().map(|&i| frames[i].base_weight).sum();
            for &i in idxs {
                prob_in_level[i] = frames[i].base_weight / total;
            }
        }

        // Topic pools: the globally dominant frame gets the rank-1 noun as its
        // sole topic; the rest share the next `topic_pool_total - 1` nouns in
        // proportion to their overall selection mass, interleaved across the
        // rank spectrum so every pool is Zipf-shaped.
        let nouns = categories
            .get(&PosCategory::Noun)
            .map(|t| t.ids.clone())
            .unwrap_or_default();
        let overall_mass: Vec<f64> = frames
            .iter()
            .enumerate()
            .map(|(i, f)| complexity_mix[f.complexity.index()] * prob_in_level[i])
            .collect();
        // Pools partition the most frequent nouns so that each frame's pool
        // carries a Zipf mass proportional to the frame's selection
        // probability. The corpus-level topic marginal then decays like the
        // underlying Zipf law while each frame keeps a disjoint, decodable
        // topic set. The dominant frame keeps the single top noun.
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); frames.len()];
        if !nouns.is_empty() {
            let budget = if tuning.topic_pool_total == 0 {
                nouns.len()
            } else {
                tuning.topic_pool_total.min(nouns.len())
            };
            let hub = (0..frames.len())
                .max_by(|&a, &b| overall_mass[a].partial_cmp(&overall_mass[b]).unwrap())
                .unwrap();
            pools[hub].push(nouns[0]);
            let mass_total: f64 = (0..frames.len())
                .filter(|&i| i != hub)
                .map(|i| overall_mass[i])
                .sum();
            // Zipf weight of each candidate noun position (unnormalised).
            let weight_of = |pos: usize| lexicon.entry(nouns[pos]).unigram_prob;
            let z_total: f64 = (1..budget).map(weight_of).sum();
            let mut deficit: Vec<f64> = (0..frames.len())
                .map(|i| {
                    if i == hub || mass_total == 0.0 {
                        0.0
                    } else {
                        overall_mass[i] / mass_total
                    }
                })
                .collect();
            for pos in 1..budget {
                let share = if z_total > 0.0 {
                    weight_of(pos) / z_total
                } else {
                    1.0 / (budget - 1) as f64
                };
                let mut best = usize::MAX;
                let mut best_deficit = f64::MIN;
                for i in 0..frames.len() {
                    if i == hub {
                        continue;
                    }
                    if let Some(cap) = frames[i].topic_pool_size {
                        if pools[i].len() >= cap {
                            continue;
                        }
                    }
                    let d = if pools[i].is_empty() {
                        deficit[i] + 1e6
                    } else {
                        deficit[i]
                    };
                    if d > best_deficit {
                        best_deficit = d;
                        best = i;
                    }
                }
                if best == usize::MAX {
                    break;
                }
                pools[best].push(nouns[pos]);
                deficit[best] -= share;
            }
            for (i, pool) in pools.iter_mut().enumerate() {
                if pool.is_empty() {
                    // Tiny lexicons: reuse the last noun rather than starve.
                    let _ = i;
                    pool.push(nouns[nouns.len() - 1]);
                }
            }
        }

        // Chain classes: each of the most frequent nouns keys its own
        // collocational chain; the rare tail shares coarse log-spaced classes.
        // Chain token frequencies then mirror the Zipf-graded topic
        // frequencies instead of collapsing onto a few context tiers.
        let mut topic_class: HashMap<usize, u32> = HashMap::new();
        let private = tuning.private_topics;
        let coarse = tuning.coarse_classes.max(1);
        let n_nouns = nouns.len().max(1);
        for (pos, &id) in nouns.iter().enumerate() {
            let class = if pos < private {
                pos as u32
            } else {
                let span = (n_nouns as f64 / (private + 1) as f64).ln().max(1e-9);
                let frac = ((pos + 1) as f64 / (private + 1) as f64).ln() / span;
                private as u32 + ((frac * coarse as f64) as u32).min(coarse as u32 - 1)
            };
            topic_class.insert(id, class);
        }

        let runtimes: Vec<FrameRuntime> = frames
            .into_iter()
            .enumerate()
            .map(|(i, spec)| {
                let pool = pools[i].clone();
                let raw: Vec<f64> = pool
                    .iter()
                    .map(|&id| lexicon.entry(id).unigram_prob.powf(tuning.pool_zipf_gamma))
                    .collect();
                let total: f64 = raw.iter().sum();
                let pool_probs: Vec<f64> = if total > 0.0 {
                    raw.iter().map(|w| w / total).collect()
                } else {
                    vec![]
                };
                let mut pool_cum = Vec::with_capacity(pool_probs.len());
                let mut a = 0.0;
                for p in &pool_probs {
                    a += p;
                    pool_cum.push(a);
                }
                let mut tier_frac = [0.0f64; 3];
                for s in &spec.slots {
                    tier_frac[s.tier.index()] += 1.0 / spec.slots.len() as f64;
                }
                FrameRuntime {
                    spec,
                    pool,
                    pool_cum,
                    pool_probs,
                    prob_in_level: prob_in_level[i],
                    tier_frac,
                }
            })
            .collect();

        Ok(Generator {
            lexicon,
            frames: runtimes,
            by_level,
            tuning,
            complexity_mix,
            categories,
            topic_class,
            anchors: HashMap::new(),
            anchor_root,
            assoc_seed,
        })
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameSpec> {
        self.frames.iter().map(|f| &f.spec)
    }

    fn class_of(&self, noun_id: usize) -> u32 {
        self.topic_class.get(&noun_id).copied().unwrap_or(0)
    }

    /// The fixed preferred successor for a slot in a given context: a
    /// one-time Gumbel-max draw over Zipf weight tilted by cluster
    /// association strength.
    fn anchor(&mut self, frame_idx: usize, ctx: AnchorCtx, cat: PosCategory, slot: u8) -> usize {
        // Sentence-initial positions share one global context: the surface
        // opening is common to all frames until the topic appears.
        let frame_idx = if ctx == AnchorCtx::Start {
            usize::MAX
        } else {
            frame_idx
        };
        if let Some(&id) = self.anchors.get(&(frame_idx, ctx, slot)) {
            return id;
        }
        let table = &self.categories[&cat];
        let key_root = match ctx {
            AnchorCtx::Start => self.anchor_root.child("start").index(slot as u64),
            AnchorCtx::Cluster(c) => self
                .anchor_root
                .index(frame_idx as u64)
                .child("cluster")
                .index(c as u64)
                .index(slot as u64),
        };
        let beta = self.tuning.assoc_sharpness;
        let gamma = self.tuning.anchor_gamma;
        let assoc_root = SeedTree::new(self.assoc_seed).child("assoc-cluster");
        let mut best_id = table.ids[0];
        let mut best_score = f64::MIN;
        for (pos, &id) in table.ids.iter().enumerate() {
            let assoc = match ctx {
                AnchorCtx::Start => 0.0,
                AnchorCtx::Cluster(c) => {
                    let e = self.lexicon.entry(id);
                    let n_clusters = self.lexicon.clusters.n_clusters.max(1);
                    let (lo, hi) = if e.cluster_id == c as usize % n_clusters {
                        self.lexicon.clusters.intra_range
                    } else {
                        self.lexicon.clusters.cross_range
                    };
                    let u = assoc_root
                        .index(c as u64)
                        .index(id as u64)
                        .stream()
                        .next_f64();
                    lo + u * (hi - lo)
                }
            };
            let g = key_root.index(id as u64).stream().gumbel();
            let score = gamma * table.probs[pos].ln() + beta * assoc + g;
            if score > best_score {
                best_score = score;
                best_id = id;
            }
        }
        self.anchors.insert((frame_idx, ctx, slot), best_id);
        best_id
    }

    fn effective_tau(&self, tier: Tier, profile: &EntropyProfile) -> f64 {
        (self.tuning.tau(tier) * profile.multiplier(tier)).clamp(0.0, 0.5)
    }

    fn effective_topic_explore(&self, profile: &EntropyProfile) -> f64 {
        (self.tuning.topic_explore * profile.multiplier(Tier::High)).clamp(0.0, 0.5)
    }

    /// Distribution descriptor of one slot draw, used both for sampling and
    /// for the oracle posterior.
    fn slot_prob(
        &mut self,
        frame_idx: usize,
        slot: usize,
        ctx: AnchorCtx,
        token_id: usize,
        profile: &EntropyProfile,
    ) -> f64 {
        let (pos_cat, tier, is_topic) = {
            let f = &self.frames[frame_idx];
            let s = &f.spec.slots[slot];
            (s.pos, s.tier, slot == f.spec.topic_slot)
        };
        let table = &self.categories[&pos_cat];
        let zipf_p = table.prob_of(&self.lexicon, token_id);
        if is_topic {
            let te = self.effective_topic_explore(profile);
            let f = &self.frames[frame_idx];
            let pool_p = f
                .pool
                .iter()
                .position(|&id| id == token_id)
                .map(|p| f.pool_probs[p])
                .unwrap_or(0.0);
            (1.0 - te) * pool_p + te * zipf_p
        } else {
            let tau = self.effective_tau(tier, profile);
            let anchor = self.anchor(frame_idx, coarsen(ctx, slot), pos_cat, slot as u8);
            let a = if anchor == token_id { 1.0 - tau } else { 0.0 };
            a + tau * zipf_p
        }
    }

    /// The token a perfect predictor would guess for this slot.
    fn slot_argmax(&mut self, frame_idx: usize, slot: usize, ctx: AnchorCtx) -> usize {
        let (pos_cat, is_topic) = {
            let f = &self.frames[frame_idx];
            (f.spec.slots[slot].pos, slot == f.spec.topic_slot)
        };
        if is_topic {
            let f = &self.frames[frame_idx];
            if !f.pool.is_empty() {
                let best = f
                    .pool_probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap();
                return f.pool[best];
            }
            let t = &self.categories[&pos_cat];
            t.ids[t.argmax_pos]
        } else {
            self.anchor(frame_idx, coarsen(ctx, slot), pos_cat, slot as u8)
        }
    }

    /// Draw one token for a slot.
    fn sample_slot(
        &mut self,
        frame_idx: usize,
        slot: usize,
        ctx: AnchorCtx,
        profile: &EntropyProfile,
        stream: &mut Stream,
    ) -> Result<usize> {
        let (pos_cat, tier, is_topic, frame_name) = {
            let f = &self.frames[frame_idx];
            let s = &f.spec.slots[slot];
            (s.pos, s.tier, slot == f.spec.topic_slot, f.spec.frame_name.clone())
        };
        if self.categories.get(&pos_cat).is_none() {
            return Err(AbsynthError::EmptyCandidateSet {
                frame: frame_name,
                slot,
                category: pos_cat.label().to_string(),
            });
        }
        let u = stream.next_f64();
        let id = if is_topic {
            let te = self.effective_topic_explore(profile);
            if u < te || self.frames[frame_idx].pool.is_empty() {
                let v = stream.next_f64();
                self.categories[&pos_cat].sample(v)
            } else {
                let v = stream.next_f64();
                let f = &self.frames[frame_idx];
                let pos = f.pool_cum.partition_point(|&c| c < v);
                f.pool[pos.min(f.pool.len() - 1)]
            }
        } else {
            let tau = self.effective_tau(tier, profile);
            if u < tau {
                let v = stream.next_f64();
                self.categories[&pos_cat].sample(v)
            } else {
                self.anchor(frame_idx, coarsen(ctx, slot), pos_cat, slot as u8)
            }
        };
        Ok(id)
    }

    /// Generate one sentence from a frame. The caller is responsible for
    /// appending the record's tier tags to the entropy profile afterwards.
    pub fn generate_sentence(
        &mut self,
        frame_idx: usize,
        profile: &EntropyProfile,
        seed: SeedTree,
    ) -> Result<SentenceRecord> {
        let n_slots = self.frames[frame_idx].spec.slots.len();
        let topic_slot = self.frames[frame_idx].spec.topic_slot;
        let mut stream = seed.child("tokens").stream();
        let mut ctx = AnchorCtx::Start;
        let mut token_ids = Vec::with_capacity(n_slots);
        let mut kept_slots = Vec::with_capacity(n_slots);
        for slot in 0..n_slots {
            let optional = self.frames[frame_idx].spec.slots[slot].optional;
            if optional && stream.next_f64() < 0.5 {
                continue;
            }
            let id = self.sample_slot(frame_idx, slot, ctx, profile, &mut stream)?;
            token_ids.push(id);
            kept_slots.push(slot);
            if slot == topic_slot {
                ctx = AnchorCtx::Cluster(self.class_of(id));
            }
        }
        let f = &self.frames[frame_idx];
        let mut record = SentenceRecord {
            tokens: Vec::with_capacity(token_ids.len()),
            pos: Vec::with_capacity(token_ids.len()),
            roles: Vec::with_capacity(token_ids.len()),
            tiers: Vec::with_capacity(token_ids.len()),
            complexity: f.spec.complexity.label().to_string(),
            frame: f.spec.frame_name.clone(),
        };
        for (&id, &slot) in token_ids.iter().zip(kept_slots.iter()) {
            let e = self.lexicon.entry(id);
            let s = &f.spec.slots[slot];
            record.tokens.push(e.token_name.clone());
            record.pos.push(e.pos_category.label().to_string());
            record.roles.push(s.role.label().to_string());
            record.tiers.push(s.tier.label().to_string());
        }
        Ok(record)
    }

    /// Frame selection weights for one complexity level under the current
    /// entropy profile.
    fn frame_weights(&self, level: Complexity, profile: &EntropyProfile) -> Vec<(usize, f64)> {
        let mults = profile.multipliers();
        self.by_level[level.index()]
            .iter()
            .map(|&i| {
                let f = &self.frames[i];
                let boost: f64 = f
                    .tier_frac
                    .iter()
                    .zip(mults.iter())
                    .map(|(frac, m)| frac * m)
                    .sum();
                (i, f.prob_in_level * boost)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Oracle posterior over frames, for predictability accounting
// ---------------------------------------------------------------------------

struct OraclePosterior {
    /// Unnormalised weight per frame.
    weights: Vec<f64>,
    /// Anchor context per frame: Start until that frame's topic slot passes.
    ctx: Vec<AnchorCtx>,
}

impl OraclePosterior {
    fn new(gen: &Generator, profile: &EntropyProfile) -> Self {
        let mut weights = vec![0.0f64; gen.frames.len()];
        for level in ALL_COMPLEXITY {
            let level_mass = gen.complexity_mix[level.index()];
            let fw = gen.frame_weights(level, profile);
            let total: f64 = fw.iter().map(|(_, w)| w).sum();
            for (i, w) in fw {
                if total > 0.0 {
                    weights[i] = level_mass * w / total;
                }
            }
        }
        let ctx = vec![AnchorCtx::Start; gen.frames.len()];
        OraclePosterior { weights, ctx }
    }

    /// Predictive probability that the next target is `token_id` (None = pad /
    /// end of sentence), and whether the oracle argmax would equal the target.
    fn step(
        &mut self,
        gen: &mut Generator,
        position: usize,
        target: Option<usize>,
        profile: &EntropyProfile,
    ) -> (f64, bool) {
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return (1e-300, false);
        }
        // Candidate set: each live frame's argmax for this slot, plus PAD.
        let mut candidate_mass: HashMap<Option<usize>, f64> = HashMap::new();
        let mut per_frame_prob: Vec<f64> = vec![0.0; self.weights.len()];
        let n = self.weights.len();
        for i in 0..n {
            if self.weights[i] <= 0.0 {
                continue;
            }
            let len = gen.frames[i].spec.slots.len();
            if position >= len {
                *candidate_mass.entry(None).or_default() += self.weights[i];
            } else {
                let am = gen.slot_argmax(i, position, self.ctx[i]);
                let p_am = gen.slot_prob(i, position, self.ctx[i], am, profile);
                *candidate_mass.entry(Some(am)).or_default() += self.weights[i] * p_am;
            }
        }
        // Probability of the actual target under the mixture.
        let mut target_mass = 0.0;
        for i in 0..n {
            if self.weights[i] <= 0.0 {
                continue;
            }
            let len = gen.frames[i].spec.slots.len();
            let p = match target {
                None => {
                    if position >= len {
                        1.0
                    } else {
                        0.0
                    }
                }
                Some(t) => {
                    if position >= len {
                        0.0
                    } else {
                        gen.slot_prob(i, position, self.ctx[i], t, profile)
                    }
                }
            };
            per_frame_prob[i] = p;
            target_mass += self.weights[i] * p;
        }
        let predictive = target_mass / total;
        let argmax = candidate_mass
            .into_iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(tok, _)| tok);
        let correct = argmax == Some(target);
        // Posterior update, and each frame whose topic slot just passed binds
        // its anchor context to the observed token's cluster.
        for i in 0..n {
            self.weights[i] *= per_frame_prob[i];
            if let Some(t) = target {
                if position == gen.frames[i].spec.topic_slot {
                    self.ctx[i] = AnchorCtx::Cluster(gen.class_of(t));
                }
            }
        }
        (predictive.max(1e-300), correct)
    }
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

/// Generate a full corpus: lexicon, sentences, splits, and oracle
/// predictability. Deterministic given the config (which includes the seed).
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let lexicon = build_lexicon(&cfg.zipf, &cfg.clusters, &cfg.category_counts, cfg.seed)?;
    let frames = cfg.frames.clone().unwrap_or_else(default_inventory);
    let mut gen = Generator::new(lexicon, frames, cfg.tuning.clone(), cfg.complexity_mix)?;
    let mut profile = EntropyProfile::new(cfg.tier_target)?;

    let root = SeedTree::new(cfg.seed).child("corpus");
    let mut records = Vec::with_capacity(cfg.n_sentences);
    let mut nll_sum = 0.0f64;
    let mut loss_positions = 0u64;
    let mut correct = 0u64;
    let mut target_positions = 0u64;

    // Cumulative mix for complexity draws.
    let mut mix_cum = [0.0f64; 3];
    let mut acc = 0.0;
    for (i, m) in cfg.complexity_mix.iter().enumerate() {
        acc += m;
        mix_cum[i] = acc;
    }

    for k in 0..cfg.n_sentences {
        let sseed = root.index(k as u64);
        let mut sel = sseed.child("select").stream();
        let u = sel.next_f64();
        let level = if u < mix_cum[0] {
            Complexity::Simple
        } else if u < mix_cum[1] {
            Complexity::Medium
        } else {
            Complexity::Complex
        };
        let weights = gen.frame_weights(level, &profile);
        let total: f64 = weights.iter().map(|(_, w)| w).sum();
        let mut pick = sel.next_f64() * total;
        let mut frame_idx = weights.last().map(|(i, _)| *i).unwrap_or(0);
        for (i, w) in &weights {
            if pick < *w {
                frame_idx = *i;
                break;
            }
            pick -= *w;
        }

        let record = gen.generate_sentence(frame_idx, &profile, sseed)?;

        // Oracle accounting over this sentence, against the pre-update profile.
        let mut posterior = OraclePosterior::new(&gen, &profile);
        let token_ids: Vec<usize> = record
            .tokens
            .iter()
            .map(|t| gen.lexicon.id_of(t).expect("generated token in lexicon"))
            .collect();
        for (pos, &tid) in token_ids.iter().enumerate() {
            let (p, ok) = posterior.step(&mut gen, pos, Some(tid), &profile);
            nll_sum += -p.ln();
            loss_positions += 1;
            correct += ok as u64;
            target_positions += 1;
        }
        // End-of-sentence prediction (the first pad target), part of the loss
        // domain but not of token accuracy.
        if record.len() < crate::frames::MAX_SENTENCE_LEN {
            let (p, _) = posterior.step(&mut gen, record.len(), None, &profile);
            nll_sum += -p.ln();
            loss_positions += 1;
        }

        profile.record(
            record
                .tiers
                .iter()
                .map(|t| crate::entropy::tier_from_label(t).expect("valid tier label")),
        );
        records.push(record);
    }

    // Split: val/test sizes round to nearest, remainder goes to train.
    let n = records.len();
    let val_n = (n as f64 * cfg.split_fractions[1]).round() as usize;
    let test_n = (n as f64 * cfg.split_fractions[2]).round() as usize;
    let train_n = n - val_n - test_n;
    let mut records = records.into_iter();
    let train: Vec<_> = records.by_ref().take(train_n).collect();
    let val: Vec<_> = records.by_ref().take(val_n).collect();
    let test: Vec<_> = records.collect();

    let nll = nll_sum / loss_positions.max(1) as f64;
    let predictability = Predictability {
        oracle_token_accuracy: correct as f64 / target_positions.max(1) as f64,
        oracle_nll: nll,
        oracle_perplexity: nll.exp(),
        target_positions,
        loss_positions,
    };

    Ok(Corpus {
        train,
        val,
        test,
        lexicon: gen.lexicon.clone(),
        config: cfg.clone(),
        predictability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{Role, Slot};

    fn small_config(n: usize, seed: u64) -> CorpusConfig {
        // Scaled-down lexicon for fast tests.
        let counts: BTreeMap<PosCategory, usize> = [
            (PosCategory::Noun, 300),
            (PosCategory::TransitiveVerb, 80),
            (PosCategory::IntransitiveVerb, 80),
            (PosCategory::CommunicationVerb, 40),
            (PosCategory::MotionVerb, 40),
            (PosCategory::Adjective, 120),
            (PosCategory::Adverb, 60),
            (PosCategory::Location, 80),
            (PosCategory::Temporal, 80),
            (PosCategory::Preposition, 45),
            (PosCategory::Determiner, 15),
            (PosCategory::Conjunction, 30),
            (PosCategory::Result, 30),
        ]
        .into_iter()
        .collect();
        let vocab: usize = counts.values().sum();
        CorpusConfig {
            n_sentences: n,
            seed,
            zipf: ZipfConfig {
                vocab_size: vocab,
                ..ZipfConfig::default()
            },
            category_counts: counts,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn rejects_tiny_corpus() {
        let cfg = CorpusConfig {
            n_sentences: 5,
            ..small_config(5, 0)
        };
        assert!(matches!(
            generate_corpus(&cfg),
            Err(AbsynthError::Config(_))
        ));
    }

    #[test]
    fn degenerate_mix_yields_all_simple() {
        let cfg = CorpusConfig {
            complexity_mix: [1.0, 0.0, 0.0],
            ..small_config(10, 3)
        };
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.n_sentences(), 10);
        for r in corpus.all_records() {
            assert_eq!(r.complexity, "simple");
        }
    }

    #[test]
    fn split_sizes_round_with_remainder_to_train() {
        let cfg = small_config(1000, 1);
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.train.len(), 800);
        assert_eq!(corpus.val.len(), 100);
        assert_eq!(corpus.test.len(), 100);
    }

    #[test]
    fn annotation_soundness() {
        let cfg = small_config(200, 9);
        let corpus = generate_corpus(&cfg).unwrap();
        let lex = &corpus.lexicon;
        for r in corpus.all_records() {
            assert!(r.len() <= crate::frames::MAX_SENTENCE_LEN);
            assert_eq!(r.tokens.len(), r.pos.len());
            assert_eq!(r.tokens.len(), r.roles.len());
            assert_eq!(r.tokens.len(), r.tiers.len());
            for (tok, pos) in r.tokens.iter().zip(r.pos.iter()) {
                let id = lex.id_of(tok).expect("token in lexicon");
                assert_eq!(lex.entry(id).pos_category.label(), pos);
            }
        }
    }

    #[test]
    fn determinism_byte_identical() {
        let a = generate_corpus(&small_config(300, 17)).unwrap();
        let b = generate_corpus(&small_config(300, 17)).unwrap();
        let ja = serde_json::to_vec(&a.train).unwrap();
        let jb = serde_json::to_vec(&b.train).unwrap();
        assert_eq!(ja, jb);
        let sa = serde_json::to_vec(&a.test).unwrap();
        let sb = serde_json::to_vec(&b.test).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_corpus(&small_config(50, 1)).unwrap();
        let b = generate_corpus(&small_config(50, 2)).unwrap();
        assert_ne!(
            serde_json::to_vec(&a.train).unwrap(),
            serde_json::to_vec(&b.train).unwrap()
        );
    }

    #[test]
    fn complexity_mix_within_two_points_at_5000() {
        let cfg = small_config(5000, 23);
        let corpus = generate_corpus(&cfg).unwrap();
        let mut counts = [0usize; 3];
        for r in corpus.all_records() {
            let i = match r.complexity.as_str() {
                "simple" => 0,
                "medium" => 1,
                _ => 2,
            };
            counts[i] += 1;
        }
        let n = corpus.n_sentences() as f64;
        assert!((counts[0] as f64 / n - 0.55).abs() < 0.02, "{counts:?}");
        assert!((counts[1] as f64 / n - 0.35).abs() < 0.02, "{counts:?}");
        assert!((counts[2] as f64 / n - 0.10).abs() < 0.02, "{counts:?}");
    }

    #[test]
    fn transfer_frame_realises_three_tokens() {
        let cfg = small_config(100, 31);
        let lex = build_lexicon(&cfg.zipf, &cfg.clusters, &cfg.category_counts, cfg.seed).unwrap();
        let inv = default_inventory();
        let t_idx = inv.iter().position(|f| f.frame_name == "TRANSFER").unwrap();
        let mut gen =
            Generator::new(lex, inv, cfg.tuning.clone(), cfg.complexity_mix).unwrap();
        let profile = EntropyProfile::new(cfg.tier_target).unwrap();
        let rec = gen
            .generate_sentence(t_idx, &profile, SeedTree::new(5))
            .unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.roles, ["AGENT", "ACTION", "THEME"]);
        assert_eq!(rec.pos, ["NOUN", "TRANSITIVE_VERB", "NOUN"]);
    }

    #[test]
    fn motion_frame_realises_six_tokens() {
        let cfg = small_config(100, 31);
        let lex = build_lexicon(&cfg.zipf, &cfg.clusters, &cfg.category_counts, cfg.seed).unwrap();
        let inv = default_inventory();
        let m_idx = inv.iter().position(|f| f.frame_name == "MOTION").unwrap();
        let mut gen =
            Generator::new(lex, inv, cfg.tuning.clone(), cfg.complexity_mix).unwrap();
        let profile = EntropyProfile::new(cfg.tier_target).unwrap();
        let rec = gen
            .generate_sentence(m_idx, &profile, SeedTree::new(6))
            .unwrap();
        assert_eq!(rec.len(), 6);
    }

    #[test]
    fn single_candidate_forced_choice() {
        // One-slot frame over a one-noun lexicon: the choice is forced.
        let counts: BTreeMap<PosCategory, usize> = [(PosCategory::Noun, 1)].into_iter().collect();
        let zipf = ZipfConfig {
            vocab_size: 1,
            noise_sigma: 0.0,
            alpha: 1.0,
        };
        let lex = build_lexicon(&zipf, &ClusterConfig::default(), &counts, 0).unwrap();
        let frame = FrameSpec {
            frame_name: "ONE".into(),
            complexity: Complexity::Simple,
            topic_slot: 0,
            base_weight: 1.0,
            topic_pool_size: None,
            slots: vec![Slot {
                role: Role::Agent,
                pos: PosCategory::Noun,
                tier: Tier::High,
                optional: false,
            }],
        };
        let mut gen = Generator::new(
            lex,
            vec![frame],
            SamplingTuning::default(),
            [1.0, 0.0, 0.0],
        )
        .unwrap();
        let profile = EntropyProfile::new([0.35, 0.45, 0.20]).unwrap();
        for i in 0..20 {
            let rec = gen
                .generate_sentence(0, &profile, SeedTree::new(i))
                .unwrap();
            assert_eq!(rec.tokens, ["noun1"]);
        }
    }

    #[test]
    fn missing_category_is_generation_error() {
        let counts: BTreeMap<PosCategory, usize> = [(PosCategory::Noun, 4)].into_iter().collect();
        let zipf = ZipfConfig {
            vocab_size: 4,
            noise_sigma: 0.0,
            alpha: 1.0,
        };
        let lex = build_lexicon(&zipf, &ClusterConfig::default(), &counts, 0).unwrap();
        let frame = FrameSpec {
            frame_name: "NEEDS_VERB".into(),
            complexity: Complexity::Simple,
            topic_slot: 0,
            base_weight: 1.0,
            topic_pool_size: None,
            slots: vec![
                Slot {
                    role: Role::Agent,
                    pos: PosCategory::Noun,
                    tier: Tier::High,
                    optional: false,
                },
                Slot {
                    role: Role::Action,
                    pos: PosCategory::TransitiveVerb,
                    tier: Tier::Medium,
                    optional: false,
                },
                Slot {
                    role: Role::Theme,
                    pos: PosCategory::Noun,
                    tier: Tier::Medium,
                    optional: false,
                },
            ],
        };
        let err = match Generator::new(lex, vec![frame], SamplingTuning::default(), [1.0, 0.0, 0.0])
        {
            Err(e) => e,
            Ok(_) => panic!("expected empty-candidate error"),
        };
        match err {
            AbsynthError::EmptyCandidateSet { slot, category, .. } => {
                assert_eq!(slot, 1);
                assert_eq!(category, "TRANSITIVE_VERB");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oracle_predictability_is_populated() {
        let corpus = generate_corpus(&small_config(400, 77)).unwrap();
        let p = &corpus.predictability;
        assert!(p.oracle_token_accuracy > 0.5, "{p:?}");
        assert!(p.oracle_token_accuracy <= 1.0);
        assert!(p.oracle_perplexity >= 1.0);
        assert!(p.target_positions > 0);
    }
}
