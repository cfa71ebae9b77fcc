//! Whitespace tokeniser over the corpus lexicon plus reserved PAD/BOS ids.

use std::collections::HashMap;

use absynth::Lexicon;

use crate::error::{Result, TraceError};
use crate::model::config::{BOS_ID, PAD_ID, RESERVED_TOKENS, SEQ_LEN};

#[derive(Clone, Debug)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        let mut names = Vec::with_capacity(lexicon.len() + RESERVED_TOKENS);
        names.push("<pad>".to_string());
        names.push("<bos>".to_string());
        for e in &lexicon.entries {
            names.push(e.token_name.clone());
        }
        let ids = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i as u32))
            .collect();
        Vocab { names, ids }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn name(&self, id: u32) -> &str {
        &self.names[id as usize]
    }

    /// Whitespace tokenisation, right-padded to the model sequence length.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(SEQ_LEN);
        for word in text.split_whitespace() {
            match self.id(word) {
                Some(id) => out.push(id),
                None => return Err(TraceError::UnknownToken(word.to_string())),
            }
        }
        if out.len() > SEQ_LEN {
            return Err(TraceError::Config(format!(
                "sequence of {} tokens exceeds the {SEQ_LEN}-token bound",
                out.len()
            )));
        }
        out.resize(SEQ_LEN, PAD_ID);
        Ok(out)
    }

    /// Tokenise a pre-split record.
    pub fn encode_tokens(&self, tokens: &[String]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(SEQ_LEN);
        for word in tokens {
            match self.id(word) {
                Some(id) => out.push(id),
                None => return Err(TraceError::UnknownToken(word.clone())),
            }
        }
        out.resize(SEQ_LEN, PAD_ID);
        Ok(out)
    }

    pub const fn pad() -> u32 {
        PAD_ID
    }

    pub const fn bos() -> u32 {
        BOS_ID
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use absynth::{build_lexicon, ClusterConfig, PosCategory, ZipfConfig};
    use std::collections::BTreeMap;

    fn vocab() -> Vocab {
        let counts: BTreeMap<PosCategory, usize> = [
            (PosCategory::Noun, 10),
            (PosCategory::TransitiveVerb, 5),
        ]
        .into_iter()
        .collect();
        let zipf = ZipfConfig {
            vocab_size: 15,
            noise_sigma: 0.0,
            alpha: 1.05,
        };
        let lex = build_lexicon(&zipf, &ClusterConfig::default(), &counts, 0).unwrap();
        Vocab::from_lexicon(&lex)
    }

    #[test]
    fn tokenize_known_words() {
        let v = vocab();
        let ids = v.tokenize("noun2 verb3 noun5").unwrap();
        assert_eq!(ids.len(), SEQ_LEN);
        assert_eq!(ids[0], v.id("noun2").unwrap());
        assert_eq!(ids[1], v.id("verb3").unwrap());
        assert_eq!(ids[2], v.id("noun5").unwrap());
        assert!(ids[3..].iter().all(|&i| i == PAD_ID));
    }

    #[test]
    fn empty_text_is_all_pad() {
        let v = vocab();
        let ids = v.tokenize("").unwrap();
        assert!(ids.iter().all(|&i| i == PAD_ID));
    }

    #[test]
    fn unknown_word_is_an_error_naming_the_word() {
        let v = vocab();
        match v.tokenize("noun1 unknownX") {
            Err(TraceError::UnknownToken(w)) => assert_eq!(w, "unknownX"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
