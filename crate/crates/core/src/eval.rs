//! QA answer metrics, segment-level precision/recall, and noisy-document mixing.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoftError, Result};

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercase, drop ASCII punctuation and articles, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    lowered
        .split_whitespace()
        .filter(|w| !ARTICLES.contains(w))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exact_match(pred: &str, gold: &str) -> u8 {
    u8::from(normalize_answer(pred) == normalize_answer(gold))
}

pub fn token_f1(pred: &str, gold: &str) -> f64 {
    let pred = normalize_answer(pred);
    let gold = normalize_answer(gold);
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *gold_counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &p {
        if let Some(n) = gold_counts.get_mut(t).filter(|n| **n > 0) {
            *n -= 1;
            overlap += 1;
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentJudgment {
    pub id: String,
    pub predicted: bool,
    pub gold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn segment_prf(judgments: &[SegmentJudgment], positive_class: bool) -> Result<Prf> {
    if judgments.is_empty() {
        return Err(CoftError::EmptyBatch);
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for j in judgments {
        match (j.predicted == positive_class, j.gold == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Prf { precision, recall, f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMix {
    pub k: usize,
    pub ratio: f64,
    /// The relevant documents drawn, before shuffling.
    pub relevant: Vec<String>,
    /// The noisy documents drawn, before shuffling.
    pub noisy: Vec<String>,
    pub seed: u64,
    pub order: Vec<String>,
    /// `true` where `order[i]` came from the noisy pool.
    pub noisy_mask: Vec<bool>,
}

/// Number of noisy documents in a mix of `k`: `k * ratio` rounded half to even.
pub fn noisy_count(k: usize, ratio: f64) -> usize {
    (k as f64 * ratio).round_ties_even() as usize
}

pub fn mix_noise(relevant: &[String], noisy: &[String], k: usize, ratio: f64, seed: u64) -> Result<NoiseMix> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CoftError::InvalidArgument(format!(
            "ratio must lie in [0, 1], got {ratio}"
        )));
    }
    let n_noisy = noisy_count(k, ratio);
    let n_relevant = k - n_noisy;
    if noisy.len() < n_noisy {
        return Err(CoftError::InsufficientDocuments {
            kind: "noisy",
            needed: n_noisy,
            available: noisy.len(),
        });
    }
    if relevant.len() < n_relevant {
        return Err(CoftError::InsufficientDocuments {
            kind: "relevant",
            needed: n_relevant,
            available: relevant.len(),
        });
    }
    let mut tagged: Vec<(String, bool)> = relevant[..n_relevant]
        .iter()
        .map(|d| (d.clone(), false))
        .chain(noisy[..n_noisy].iter().map(|d| (d.clone(), true)))
        .collect();
    tagged.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (order, noisy_mask) = tagged.into_iter().unzip();
    Ok(NoiseMix {
        k,
        ratio,
        relevant: relevant[..n_relevant].to_vec(),
        noisy: noisy[..n_noisy].to_vec(),
        seed,
        order,
        noisy_mask,
    })
}
