//! Add-one smoothed bigram model used as the local token-probability provider.
//!
//! Training appends a single trailing transition from the last corpus word
//! into the unknown marker, so every observed word has exactly as many
//! successors as occurrences and `P(. | h)` sums to one for every history.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TokenProvider, TokenScore};
use crate::error::{CoftError, Result};
use crate::segmentation::{normalize_text, tokenize_words};

pub const UNKNOWN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    vocab: BTreeSet<String>,
    unigrams: HashMap<String, u64>,
    bigrams: HashMap<(String, String), u64>,
}

/// Serialized layout; bigram keys are the two words joined by a tab.
#[derive(Debug, Serialize, Deserialize)]
struct NgramFile {
    order: u32,
    vocab: Vec<String>,
    unigrams: BTreeMap<String, u64>,
    bigrams: BTreeMap<String, u64>,
}

fn words_of(text: &str) -> Vec<String> {
    let text = normalize_text(text);
    tokenize_words(&text)
        .iter()
        .map(|s| s.slice(&text).to_lowercase())
        .collect()
}

impl NgramModel {
    pub fn order(&self) -> u32 {
        2
    }

    pub fn train(corpus: &str) -> Result<Self> {
        let words = words_of(corpus);
        if words.is_empty() {
            return Err(CoftError::EmptyCorpus);
        }
        let mut vocab: BTreeSet<String> = words.iter().cloned().collect();
        vocab.insert(UNKNOWN.to_string());
        let mut unigrams = HashMap::new();
        let mut bigrams = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            *unigrams.entry(w.clone()).or_insert(0) += 1;
            let next = words.get(i + 1).map_or(UNKNOWN, String::as_str);
            *bigrams.entry((w.clone(), next.to_string())).or_insert(0) += 1;
        }
        Ok(NgramModel {
            vocab,
            unigrams,
            bigrams,
        })
    }

    /// Vocabulary size including the unknown marker.
    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str)
    }

    fn map<'a>(&self, word: &'a str) -> &'a str {
        if self.vocab.contains(word) {
            word
        } else {
            UNKNOWN
        }
    }

    pub fn unigram_count(&self, word: &str) -> u64 {
        self.unigrams.get(self.map(word)).copied().unwrap_or(0)
    }

    pub fn bigram_count(&self, history: &str, word: &str) -> u64 {
        let key = (self.map(history).to_string(), self.map(word).to_string());
        self.bigrams.get(&key).copied().unwrap_or(0)
    }

    /// `(c(h, t) + 1) / (c(h) + V)`, with out-of-vocabulary words mapped to the unknown marker.
    pub fn prob(&self, history: &str, word: &str) -> f64 {
        let num = self.bigram_count(history, word) as f64 + 1.0;
        let den = self.unigram_count(history) as f64 + self.vocab_size() as f64;
        num / den
    }

    pub fn to_json(&self) -> Result<String> {
        let file = NgramFile {
            order: 2,
            vocab: self.vocab.iter().cloned().collect(),
            unigrams: self.unigrams.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            bigrams: self
                .bigrams
                .iter()
                .map(|((a, b), v)| (format!("{a}\t{b}"), *v))
                .collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: NgramFile = serde_json::from_str(json)?;
        if file.order != 2 {
            return Err(CoftError::Config(format!("unsupported n-gram order {}", file.order)));
        }
        let mut vocab: BTreeSet<String> = file.vocab.into_iter().collect();
        vocab.insert(UNKNOWN.to_string());
        let mut bigrams = HashMap::with_capacity(file.bigrams.len());
        for (key, count) in file.bigrams {
            let (a, b) = key
                .split_once('\t')
                .ok_or_else(|| CoftError::Config(format!("bigram key without tab: {key:?}")))?;
            bigrams.insert((a.to_string(), b.to_string()), count);
        }
        Ok(NgramModel {
            vocab,
            unigrams: file.unigrams.into_iter().collect(),
            bigrams,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| CoftError::Config(format!("cannot read n-gram model {}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Scores reference words with a bigram model conditioned on the query.
#[derive(Debug, Clone)]
pub struct NgramProvider {
    model: NgramModel,
}

impl NgramProvider {
    pub fn new(model: NgramModel) -> Self {
        NgramProvider { model }
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }
}

impl TokenProvider for NgramProvider {
    fn name(&self) -> &str {
        "ngram"
    }

    fn token_logprobs(&self, query: &str, ref_text: &str) -> Result<Vec<TokenScore>> {
        let mut history = words_of(query).pop().unwrap_or_else(|| UNKNOWN.to_string());
        let scores = tokenize_words(ref_text)
            .into_iter()
            .map(|span| {
                let text = span.slice(ref_text);
                let word = text.to_lowercase();
                let p = self.model.prob(&history, &word);
                history = word;
                TokenScore {
                    text: text.to_string(),
                    span,
                    logprob2: p.log2(),
                }
            })
            .collect();
        Ok(scores)
    }
}
