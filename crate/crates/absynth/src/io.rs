//! Corpus persistence: line-delimited records plus lexicon and stats files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::generator::{Corpus, CorpusConfig, Predictability, SentenceRecord};
use crate::lexicon::Lexicon;
use crate::stats::{corpus_stats, StatsReport};

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    config: CorpusConfig,
    predictability: Predictability,
}

/// Write one split as line-delimited JSON records.
pub fn write_split(path: &Path, records: &[SentenceRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_split(path: &Path) -> Result<Vec<SentenceRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Write a corpus directory: `train.jsonl`, `val.jsonl`, `test.jsonl`,
/// `lexicon.json`, `stats.json`, `meta.json`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<StatsReport> {
    fs::create_dir_all(dir)?;
    write_split(&dir.join("train.jsonl"), &corpus.train)?;
    write_split(&dir.join("val.jsonl"), &corpus.val)?;
    write_split(&dir.join("test.jsonl"), &corpus.test)?;
    fs::write(
        dir.join("lexicon.json"),
        serde_json::to_vec_pretty(&corpus.lexicon)?,
    )?;
    let meta = CorpusMeta {
        config: corpus.config.clone(),
        predictability: corpus.predictability.clone(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    let stats = corpus_stats(corpus)?;
    fs::write(dir.join("stats.json"), serde_json::to_vec_pretty(&stats)?)?;
    Ok(stats)
}

/// Load a corpus directory written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let train = read_split(&dir.join("train.jsonl"))?;
    let val = read_split(&dir.join("val.jsonl"))?;
    let test = read_split(&dir.join("test.jsonl"))?;
    let mut lexicon: Lexicon = serde_json::from_slice(&fs::read(dir.join("lexicon.json"))?)?;
    lexicon.rebuild_indexes();
    let meta: CorpusMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
    Ok(Corpus {
        train,
        val,
        test,
        lexicon,
        config: meta.config,
        predictability: meta.predictability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::generate_corpus;
    use crate::lexicon::PosCategory;
    use std::collections::BTreeMap;

    #[test]
    fn corpus_roundtrip() {
        let counts: BTreeMap<PosCategory, usize> = [
            (PosCategory::Noun, 120),
            (PosCategory::TransitiveVerb, 40),
            (PosCategory::IntransitiveVerb, 40),
            (PosCategory::CommunicationVerb, 20),
            (PosCategory::MotionVerb, 20),
            (PosCategory::Adjective, 40),
            (PosCategory::Adverb, 20),
            (PosCategory::Location, 40),
            (PosCategory::Temporal, 30),
            (PosCategory::Preposition, 20),
            (PosCategory::Determiner, 8),
            (PosCategory::Conjunction, 12),
            (PosCategory::Result, 12),
        ]
        .into_iter()
        .collect();
        let cfg = CorpusConfig {
            n_sentences: 50,
            zipf: crate::lexicon::ZipfConfig {
                vocab_size: counts.values().sum(),
                ..Default::default()
            },
            category_counts: counts,
            seed: 3,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("absynth_io_test_{}", std::process::id()));
        let stats = write_corpus(&dir, &corpus).unwrap();
        assert!(stats.n_sentences == 50);
        let loaded = read_corpus(&dir).unwrap();
        assert_eq!(loaded.train, corpus.train);
        assert_eq!(loaded.test, corpus.test);
        assert_eq!(loaded.lexicon.len(), corpus.lexicon.len());
        // line format sanity: keys are exactly the documented six
        let first_line = std::fs::read_to_string(dir.join("train.jsonl"))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        let v: serde_json::Value = serde_json::from_str(&first_line).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        for k in ["tokens", "pos", "roles", "tiers", "complexity", "frame"] {
            assert!(keys.contains(&k), "missing key {k}");
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}
