//! Event frames and frame-to-syntax mappings.
//!
//! A frame is an ordered list of slots, each carrying a semantic role, a POS
//! category, and an expected-entropy tier. Slot order is checked against a
//! deterministic POS-adjacency grammar so every realisation is well-formed.

use serde::{Deserialize, Serialize};

use crate::error::{AbsynthError, Result};
use crate::lexicon::PosCategory;

/// Semantic roles used by frame slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Agent,
    Action,
    Theme,
    Patient,
    Source,
    Goal,
    Purpose,
    Location,
    Relation,
    Connector,
    Result,
    Manner,
    Time,
    Attribute,
    Specifier,
}

impl Role {
    pub fn label(&self) -> &'static str {
        match self {
            Role::Agent => "AGENT",
            Role::Action => "ACTION",
            Role::Theme => "THEME",
            Role::Patient => "PATIENT",
            Role::Source => "SOURCE",
            Role::Goal => "GOAL",
            Role::Purpose => "PURPOSE",
            Role::Location => "LOCATION",
            Role::Relation => "RELATION",
            Role::Connector => "CONNECTOR",
            Role::Result => "RESULT",
            Role::Manner => "MANNER",
            Role::Time => "TIME",
            Role::Attribute => "ATTRIBUTE",
            Role::Specifier => "SPECIFIER",
        }
    }

    /// Collapse the frame-role inventory onto the 8 SRL probe labels.
    pub fn srl_label(&self) -> &'static str {
        match self {
            Role::Agent => "AGENT",
            Role::Action => "ACTION",
            Role::Theme | Role::Patient => "PATIENT",
            Role::Source | Role::Goal | Role::Location => "LOCATION",
            Role::Relation | Role::Purpose => "RELATION",
            Role::Connector => "CONNECTOR",
            Role::Result => "RESULT",
            Role::Manner | Role::Time | Role::Attribute | Role::Specifier => "OTHER",
        }
    }
}

/// Expected contextual-entropy tier of a slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    Low,
    Medium,
    High,
}

pub const ALL_TIERS: [Tier; 3] = [Tier::Low, Tier::Medium, Tier::High];

impl Tier {
    pub fn label(&self) -> &'static str {
        match self {
            Tier::Low => "low",
            Tier::Medium => "medium",
            Tier::High => "high",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Tier::Low => 0,
            Tier::Medium => 1,
            Tier::High => 2,
        }
    }
}

/// Structural complexity level of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Complexity {
    Simple,
    Medium,
    Complex,
}

pub const ALL_COMPLEXITY: [Complexity; 3] = [Complexity::Simple, Complexity::Medium, Complexity::Complex];

impl Complexity {
    pub fn label(&self) -> &'static str {
        match self {
            Complexity::Simple => "simple",
            Complexity::Medium => "medium",
            Complexity::Complex => "complex",
        }
    }

    pub fn index(&self) -> usize {
        match self {
            Complexity::Simple => 0,
            Complexity::Medium => 1,
            Complexity::Complex => 2,
        }
    }
}

/// One slot of a frame.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Slot {
    pub role: Role,
    pub pos: PosCategory,
    pub tier: Tier,
    #[serde(default)]
    pub optional: bool,
}

/// A predicate-argument frame with its surface slot sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrameSpec {
    pub frame_name: String,
    pub complexity: Complexity,
    pub slots: Vec<Slot>,
    /// Slot index of the sentence topic (the lexically open position).
    pub topic_slot: usize,
    /// Relative selection weight within the complexity level.
    pub base_weight: f64,
    /// How many frequent nouns this frame's topic pool takes (None = auto).
    #[serde(default)]
    pub topic_pool_size: Option<usize>,
}

pub const MAX_SENTENCE_LEN: usize = 16;

/// POS adjacency grammar: which categories may follow `from`.
fn may_follow(from: PosCategory, to: PosCategory) -> bool {
    use PosCategory::*;
    let allowed: &[PosCategory] = match from {
        Determiner => &[Adjective, Noun, Location, Result],
        Adjective => &[Noun, Adjective, Location, Result],
        Noun => &[
            TransitiveVerb,
            IntransitiveVerb,
            CommunicationVerb,
            MotionVerb,
            Preposition,
            Conjunction,
            Temporal,
        ],
        TransitiveVerb => &[Determiner, Noun, Adjective],
        IntransitiveVerb => &[Adverb, Preposition, Temporal, Conjunction],
        CommunicationVerb => &[Determiner, Noun, Preposition, Conjunction],
        MotionVerb => &[Preposition, Determiner, Location, Noun, Adverb],
        Preposition => &[Determiner, Noun, Location, Temporal],
        Location => &[Conjunction, Preposition, Temporal],
        Temporal => &[Conjunction, Determiner],
        Conjunction => &[
            Determiner,
            Noun,
            Temporal,
            TransitiveVerb,
            IntransitiveVerb,
            CommunicationVerb,
            MotionVerb,
        ],
        Result => &[Conjunction, Preposition, Temporal],
        Adverb => &[Conjunction, Preposition, Temporal],
    };
    allowed.contains(&to)
}

fn may_start(pos: PosCategory) -> bool {
    use PosCategory::*;
    matches!(pos, Determiner | Noun | Temporal)
}

fn may_end(pos: PosCategory) -> bool {
    use PosCategory::*;
    matches!(
        pos,
        Noun | Location | Temporal | Result | Adverb | IntransitiveVerb | MotionVerb
    )
}

/// Deterministic slot-order validator.
pub fn validate_frame(frame: &FrameSpec) -> Result<()> {
    let fail = |reason: String| {
        Err(AbsynthError::InvalidFrame {
            frame: frame.frame_name.clone(),
            reason,
        })
    };
    if frame.slots.is_empty() {
        return fail("frame has no slots".into());
    }
    if frame.slots.len() > MAX_SENTENCE_LEN {
        return fail(format!(
            "frame has {} slots, exceeding the {MAX_SENTENCE_LEN}-token bound",
            frame.slots.len()
        ));
    }
    if frame.topic_slot >= frame.slots.len() {
        return fail(format!("topic_slot {} out of range", frame.topic_slot));
    }
    if frame.slots[frame.topic_slot].pos != PosCategory::Noun {
        return fail("topic slot must be a NOUN slot".into());
    }
    if !(frame.base_weight > 0.0) {
        return fail("base_weight must be positive".into());
    }
    if !may_start(frame.slots[0].pos) {
        return fail(format!(
            "{} may not start a sentence",
            frame.slots[0].pos.label()
        ));
    }
    for w in frame.slots.windows(2) {
        if !may_follow(w[0].pos, w[1].pos) {
            return fail(format!(
                "{} may not be followed by {}",
                w[0].pos.label(),
                w[1].pos.label()
            ));
        }
    }
    // Optional slots may only form a suffix; dropping them must leave a
    // grammatical ending.
    let mut seen_optional = false;
    for s in &frame.slots {
        if seen_optional && !s.optional {
            return fail("optional slots must form a trailing suffix".into());
        }
        seen_optional |= s.optional;
    }
    let last_required = frame
        .slots
        .iter()
        .rposition(|s| !s.optional)
        .unwrap_or(frame.slots.len() - 1);
    for end in last_required..frame.slots.len() {
        if !may_end(frame.slots[end].pos) {
            return fail(format!(
                "{} may not end a sentence",
                frame.slots[end].pos.label()
            ));
        }
    }
    Ok(())
}

macro_rules! slots {
    ($(($role:ident, $pos:ident, $tier:ident)),* $(,)?) => {
        vec![$(Slot { role: Role::$role, pos: PosCategory::$pos, tier: Tier::$tier, optional: false }),*]
    };
}

/// The built-in 12-frame inventory: 4 frames per complexity level.
///
/// TRANSFER and MOTION reproduce the canonical short realisations; the other
/// frames are longer scenes built from the same role vocabulary.
pub fn default_inventory() -> Vec<FrameSpec> {
    vec![
        FrameSpec {
            frame_name: "TRANSFER_SCENE".into(),
            complexity: Complexity::Simple,
            topic_slot: 1,
            base_weight: 0.88,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, TransitiveVerb, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Relation, Preposition, Medium),
                (Specifier, Determiner, Low),
                (Location, Location, Medium),
                (Time, Temporal, High),
                (Connector, Conjunction, Low),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Action, IntransitiveVerb, Medium),
                (Manner, Adverb, High),
                (Time, Temporal, Medium),
            ],
        },
        FrameSpec {
            frame_name: "CREATION_REPORT".into(),
            complexity: Complexity::Simple,
            topic_slot: 1,
            base_weight: 0.055,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, CommunicationVerb, Medium),
                (Specifier, Determiner, Low),
                (Result, Result, Medium),
                (Relation, Preposition, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Connector, Conjunction, Low),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Action, MotionVerb, Medium),
                (Relation, Preposition, Low),
                (Goal, Location, Medium),
                (Time, Temporal, High),
            ],
        },
        FrameSpec {
            frame_name: "ATTRIBUTE_SCENE".into(),
            complexity: Complexity::Simple,
            topic_slot: 2,
            base_weight: 0.04,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Attribute, Adjective, High),
                (Agent, Noun, High),
                (Action, IntransitiveVerb, Medium),
                (Manner, Adverb, Medium),
                (Connector, Conjunction, Low),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Action, TransitiveVerb, Medium),
                (Specifier, Determiner, Low),
                (Attribute, Adjective, Medium),
                (Result, Result, Medium),
                (Relation, Preposition, Low),
                (Time, Temporal, Medium),
            ],
        },
        // Canonical short TRANSFER: [AGENT=NOUN] [ACTION=VERB] [THEME=NOUN]
        FrameSpec {
            frame_name: "TRANSFER".into(),
            complexity: Complexity::Simple,
            topic_slot: 0,
            base_weight: 0.025,
            topic_pool_size: None,
            slots: slots![
                (Agent, Noun, High),
                (Action, TransitiveVerb, Medium),
                (Theme, Noun, Medium),
            ],
        },
        FrameSpec {
            frame_name: "CREATION_PURPOSE".into(),
            complexity: Complexity::Medium,
            topic_slot: 1,
            base_weight: 0.52,
            topic_pool_size: Some(1),
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, TransitiveVerb, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Purpose, Preposition, Medium),
                (Specifier, Determiner, Low),
                (Result, Result, Medium),
                (Connector, Conjunction, Low),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Action, CommunicationVerb, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Time, Temporal, High),
            ],
        },
        FrameSpec {
            frame_name: "COMMUNICATION_CHAIN".into(),
            complexity: Complexity::Medium,
            topic_slot: 1,
            base_weight: 0.27,
            topic_pool_size: Some(1),
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, CommunicationVerb, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Relation, Preposition, Low),
                (Specifier, Determiner, Low),
                (Location, Location, Medium),
                (Connector, Conjunction, Low),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Action, MotionVerb, Medium),
                (Relation, Preposition, Medium),
                (Specifier, Determiner, Low),
                (Goal, Location, Medium),
                (Time, Temporal, High),
            ],
        },
        FrameSpec {
            frame_name: "MOTION_PATH".into(),
            complexity: Complexity::Medium,
            topic_slot: 1,
            base_weight: 0.14,
            topic_pool_size: Some(1),
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, MotionVerb, Medium),
                (Relation, Preposition, Low),
                (Specifier, Determiner, Low),
                (Source, Location, Medium),
                (Relation, Preposition, Medium),
                (Specifier, Determiner, Low),
                (Goal, Location, Medium),
                (Connector, Conjunction, Low),
                (Time, Temporal, Medium),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Action, IntransitiveVerb, Medium),
                (Manner, Adverb, High),
            ],
        },
        // Canonical medium CREATION: [AGENT] [ACTION] [THEME] [PURPOSE=PREP+NOUN]
        FrameSpec {
            frame_name: "CREATION".into(),
            complexity: Complexity::Medium,
            topic_slot: 0,
            base_weight: 0.07,
            topic_pool_size: None,
            slots: slots![
                (Agent, Noun, High),
                (Action, TransitiveVerb, Medium),
                (Theme, Noun, Medium),
                (Purpose, Preposition, Low),
                (Goal, Noun, Medium),
            ],
        },
        FrameSpec {
            frame_name: "NESTED_RELATIVE".into(),
            complexity: Complexity::Complex,
            topic_slot: 1,
            base_weight: 0.52,
            topic_pool_size: Some(1),
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Connector, Conjunction, Low),
                (Action, TransitiveVerb, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Action, MotionVerb, Medium),
                (Relation, Preposition, Low),
                (Specifier, Determiner, Low),
                (Source, Location, Medium),
                (Connector, Conjunction, Low),
                (Action, MotionVerb, Medium),
                (Specifier, Determiner, Low),
                (Goal, Location, Medium),
                (Relation, Preposition, Medium),
                (Time, Temporal, High),
            ],
        },
        FrameSpec {
            frame_name: "CAUSAL_CHAIN".into(),
            complexity: Complexity::Complex,
            topic_slot: 1,
            base_weight: 0.27,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, TransitiveVerb, Medium),
                (Specifier, Determiner, Low),
                (Patient, Noun, Medium),
                (Connector, Conjunction, Low),
                (Specifier, Determiner, Low),
                (Agent, Noun, Medium),
                (Action, CommunicationVerb, Medium),
                (Specifier, Determiner, Low),
                (Result, Result, Medium),
                (Connector, Conjunction, Low),
                (Action, IntransitiveVerb, Medium),
                (Manner, Adverb, High),
                (Relation, Preposition, Medium),
                (Time, Temporal, High),
            ],
        },
        FrameSpec {
            frame_name: "MOTION_SEQUENCE".into(),
            complexity: Complexity::Complex,
            topic_slot: 1,
            base_weight: 0.14,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, MotionVerb, Medium),
                (Specifier, Determiner, Low),
                (Source, Location, Medium),
                (Connector, Conjunction, Low),
                (Action, MotionVerb, Medium),
                (Specifier, Determiner, Low),
                (Goal, Location, Medium),
                (Relation, Preposition, Medium),
                (Specifier, Determiner, Low),
                (Theme, Noun, Medium),
                (Action, IntransitiveVerb, Medium),
                (Manner, Adverb, High),
                (Time, Temporal, High),
            ],
        },
        // Canonical complex MOTION with an embedded relative:
        // [AGENT=NOUN] [REL] [ACTION=VERB] [SOURCE=NOUN] [ACTION=VERB] [GOAL=NOUN]
        FrameSpec {
            frame_name: "MOTION".into(),
            complexity: Complexity::Complex,
            topic_slot: 0,
            base_weight: 0.07,
            topic_pool_size: None,
            slots: slots![
                (Agent, Noun, High),
                (Connector, Conjunction, Low),
                (Action, MotionVerb, Medium),
                (Source, Noun, Medium),
                (Action, MotionVerb, Medium),
                (Goal, Noun, Medium),
            ],
        },
    ]
}

/// Parse a frame inventory from its TOML representation.
pub fn inventory_from_toml(text: &str) -> Result<Vec<FrameSpec>> {
    #[derive(Deserialize)]
    struct Doc {
        frames: Vec<FrameSpec>,
    }
    let doc: Doc =
        toml::from_str(text).map_err(|e| AbsynthError::Config(format!("frame toml: {e}")))?;
    for f in &doc.frames {
        validate_frame(f)?;
    }
    Ok(doc.frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_inventory_is_valid_and_complete() {
        let inv = default_inventory();
        assert_eq!(inv.len(), 12);
        for level in ALL_COMPLEXITY {
            assert_eq!(
                inv.iter().filter(|f| f.complexity == level).count(),
                4,
                "4 frames per {level:?}"
            );
        }
        for f in &inv {
            validate_frame(f).unwrap_or_else(|e| panic!("{e}"));
            assert!(f.slots.len() <= MAX_SENTENCE_LEN);
        }
    }

    #[test]
    fn transfer_frame_matches_canonical_realisation() {
        let inv = default_inventory();
        let t = inv.iter().find(|f| f.frame_name == "TRANSFER").unwrap();
        assert_eq!(t.slots.len(), 3);
        let roles: Vec<&str> = t.slots.iter().map(|s| s.role.label()).collect();
        assert_eq!(roles, ["AGENT", "ACTION", "THEME"]);
        let pos: Vec<PosCategory> = t.slots.iter().map(|s| s.pos).collect();
        assert_eq!(
            pos,
            [
                PosCategory::Noun,
                PosCategory::TransitiveVerb,
                PosCategory::Noun
            ]
        );
    }

    #[test]
    fn motion_frame_has_six_slots() {
        let inv = default_inventory();
        let m = inv.iter().find(|f| f.frame_name == "MOTION").unwrap();
        assert_eq!(m.slots.len(), 6);
        assert_eq!(m.complexity, Complexity::Complex);
    }

    #[test]
    fn validator_rejects_bad_order() {
        let mut f = FrameSpec {
            frame_name: "BAD".into(),
            complexity: Complexity::Simple,
            topic_slot: 1,
            base_weight: 1.0,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Specifier, Determiner, Low), // NOUN -> DET not allowed
            ],
        };
        assert!(validate_frame(&f).is_err());
        f.slots.pop();
        assert!(validate_frame(&f).is_ok());
    }

    #[test]
    fn validator_rejects_bad_ending_and_overlength() {
        let f = FrameSpec {
            frame_name: "BAD_END".into(),
            complexity: Complexity::Simple,
            topic_slot: 1,
            base_weight: 1.0,
            topic_pool_size: None,
            slots: slots![
                (Specifier, Determiner, Low),
                (Agent, Noun, High),
                (Action, TransitiveVerb, Medium), // verbs may not end
            ],
        };
        assert!(validate_frame(&f).is_err());

        let long = FrameSpec {
            frame_name: "LONG".into(),
            complexity: Complexity::Simple,
            topic_slot: 0,
            base_weight: 1.0,
            topic_pool_size: None,
            slots: (0..17)
                .map(|_| Slot {
                    role: Role::Agent,
                    pos: PosCategory::Noun,
                    tier: Tier::Low,
                    optional: false,
                })
                .collect(),
        };
        assert!(validate_frame(&long).is_err());
    }

    #[test]
    fn role_to_srl_collapse() {
        assert_eq!(Role::Theme.srl_label(), "PATIENT");
        assert_eq!(Role::Goal.srl_label(), "LOCATION");
        assert_eq!(Role::Specifier.srl_label(), "OTHER");
        assert_eq!(Role::Agent.srl_label(), "AGENT");
    }

    #[test]
    fn tier_composition_near_target() {
        // Weighted slot-tier profile of the inventory under the default
        // 55/35/10 complexity mix should sit near the 35/45/20 target.
        let inv = default_inventory();
        let mix = [0.55, 0.35, 0.10];
        let mut mass = [0.0f64; 3];
        for level in ALL_COMPLEXITY {
            let frames: Vec<&FrameSpec> =
                inv.iter().filter(|f| f.complexity == level).collect();
            let wsum: f64 = frames.iter().map(|f| f.base_weight).sum();
            for f in frames {
                let share = mix[level.index()] * f.base_weight / wsum;
                for s in &f.slots {
                    mass[s.tier.index()] += share / f.slots.len() as f64;
                }
            }
        }
        let total: f64 = mass.iter().sum();
        let frac: Vec<f64> = mass.iter().map(|m| m / total).collect();
        assert!((frac[0] - 0.35).abs() < 0.05, "low {frac:?}");
        assert!((frac[1] - 0.45).abs() < 0.05, "medium {frac:?}");
        assert!((frac[2] - 0.20).abs() < 0.05, "high {frac:?}");
    }
}
