//! Global entropy profile and the feedback correction factor.
//!
//! During generation the corpus keeps a running count of emitted tokens per
//! entropy tier. When a tier falls behind its target share, its correction
//! multiplier rises above 1 and the generator upweights frames and exploration
//! that contribute to that tier. The multiplier is bounded so the feedback
//! cannot oscillate.

use serde::{Deserialize, Serialize};

use crate::error::{AbsynthError, Result};
use crate::frames::{Tier, ALL_TIERS};

const OBSERVED_FLOOR: f64 = 1e-3;
const MULTIPLIER_MIN: f64 = 0.5;
const MULTIPLIER_MAX: f64 = 2.0;

/// Running per-tier token counts against a target distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyProfile {
    counts: [u64; 3],
    target: [f64; 3],
}

impl EntropyProfile {
    pub fn new(target: [f64; 3]) -> Result<Self> {
        let sum: f64 = target.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || target.iter().any(|&t| t < 0.0) {
            return Err(AbsynthError::Config(format!(
                "tier target fractions must be non-negative and sum to 1, got {target:?}"
            )));
        }
        Ok(EntropyProfile {
            counts: [0; 3],
            target,
        })
    }

    pub fn target(&self) -> [f64; 3] {
        self.target
    }

    pub fn counts(&self) -> [u64; 3] {
        self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Observed tier fractions; zeros before anything has been recorded.
    pub fn observed(&self) -> [f64; 3] {
        let total = self.total();
        if total == 0 {
            return [0.0; 3];
        }
        let mut out = [0.0; 3];
        for (o, &c) in out.iter_mut().zip(self.counts.iter()) {
            *o = c as f64 / total as f64;
        }
        out
    }

    /// Correction factor for one tier: `clamp(target / max(observed, 1e-3), 0.5, 2.0)`.
    ///
    /// Strictly greater than 1 whenever the tier is underrepresented by any
    /// visible margin, strictly below 1 when overrepresented beyond the clamp.
    pub fn multiplier(&self, tier: Tier) -> f64 {
        let obs = self.observed()[tier.index()].max(OBSERVED_FLOOR);
        (self.target[tier.index()] / obs).clamp(MULTIPLIER_MIN, MULTIPLIER_MAX)
    }

    pub fn multipliers(&self) -> [f64; 3] {
        [
            self.multiplier(Tier::Low),
            self.multiplier(Tier::Medium),
            self.multiplier(Tier::High),
        ]
    }

    /// Append one sentence's tier tags.
    pub fn record<I: IntoIterator<Item = Tier>>(&mut self, tiers: I) {
        for t in tiers {
            self.counts[t.index()] += 1;
        }
    }
}

pub fn tier_from_label(label: &str) -> Option<Tier> {
    ALL_TIERS.iter().copied().find(|t| t.label() == label)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_target() {
        assert!(EntropyProfile::new([0.5, 0.5, 0.5]).is_err());
        assert!(EntropyProfile::new([0.35, 0.45, 0.20]).is_ok());
    }

    #[test]
    fn fractions_sum_to_one() {
        let mut p = EntropyProfile::new([0.35, 0.45, 0.20]).unwrap();
        p.record([Tier::Low, Tier::Low, Tier::Medium, Tier::High]);
        let sum: f64 = p.observed().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn underrepresented_tier_gets_multiplier_above_one() {
        let mut p = EntropyProfile::new([0.35, 0.45, 0.20]).unwrap();
        // 100 tokens, high tier at 10% observed vs 20% target: deficit > 5 pts.
        for _ in 0..40 {
            p.record([Tier::Low]);
        }
        for _ in 0..50 {
            p.record([Tier::Medium]);
        }
        for _ in 0..10 {
            p.record([Tier::High]);
        }
        assert!(p.multiplier(Tier::High) > 1.0);
        // Overrepresented low tier is damped.
        assert!(p.multiplier(Tier::Low) < 1.0);
    }

    #[test]
    fn multiplier_is_clamped() {
        let mut p = EntropyProfile::new([0.35, 0.45, 0.20]).unwrap();
        for _ in 0..1000 {
            p.record([Tier::Low]);
        }
        assert_eq!(p.multiplier(Tier::High), 2.0);
        assert_eq!(p.multiplier(Tier::Low), 0.5);
    }
}
