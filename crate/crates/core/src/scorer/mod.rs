//! Contextual weights: TF-ISF times self-information for each candidate entity.

pub mod ngram;
pub mod remote;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoftError, Result};
use crate::recaller::EntityCandidate;
use crate::segmentation::{Document, Span};

pub use ngram::{NgramModel, NgramProvider};
pub use remote::RemoteProvider;

/// One provider token aligned to the reference text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub text: String,
    pub span: Span,
    /// Base-2 log-probability given the query and all earlier reference tokens.
    pub logprob2: f64,
}

impl TokenScore {
    pub fn self_information(&self) -> f64 {
        -self.logprob2
    }
}

/// Source of per-token log-probabilities for a reference text conditioned on a query.
pub trait TokenProvider: Send + Sync {
    fn name(&self) -> &str;

    fn token_logprobs(&self, query: &str, ref_text: &str) -> Result<Vec<TokenScore>>;

    /// Whether concurrent calls are allowed. Serial providers get one call in flight.
    fn is_concurrent(&self) -> bool {
        true
    }
}

pub fn token_logprobs(provider: &dyn TokenProvider, query: &str, ref_text: &str) -> Result<Vec<TokenScore>> {
    provider.token_logprobs(query, ref_text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRecord {
    pub entity: String,
    pub tf_isf: f64,
    /// Bits.
    pub self_info: f64,
    pub weight: f64,
}

/// Sum of token self-information over every token overlapping `span`.
/// Partially overlapping tokens count in full.
pub fn self_information_of_span(tokens: &[TokenScore], span: Span) -> f64 {
    tokens
        .iter()
        .filter(|t| t.span.overlaps(&span))
        .map(TokenScore::self_information)
        .sum()
}

/// Total self-information of a context, used as its informativeness.
pub fn total_self_information(tokens: &[TokenScore]) -> f64 {
    tokens.iter().map(TokenScore::self_information).sum()
}

fn check_counts(sentence_words: usize, document_words: usize) -> Result<()> {
    if sentence_words == 0 || document_words == 0 {
        return Err(CoftError::DegenerateCounts {
            sentence_words,
            document_words,
        });
    }
    Ok(())
}

/// `(f_s / |s|) * log2(|S| / (f_S + 1))` from raw counts.
fn tf_isf_from_counts(in_sentence: usize, sentence_words: usize, in_doc: usize, doc_words: usize) -> f64 {
    in_sentence as f64 / sentence_words as f64 * (doc_words as f64 / (in_doc as f64 + 1.0)).log2()
}

/// TF-ISF of `entity` in sentence `sentence_index` of `doc`. `|S|` is the
/// document's word count; a multi-word match counts as one occurrence.
pub fn tf_isf(entity: &EntityCandidate, sentence_index: usize, doc: &Document) -> Result<f64> {
    let sentence = doc.sentences.get(sentence_index).ok_or_else(|| {
        CoftError::InvalidArgument(format!(
            "sentence {sentence_index} out of range ({} sentences)",
            doc.sentences.len()
        ))
    })?;
    let sentence_words = doc.sentence_word_counts[sentence_index];
    check_counts(sentence_words, doc.word_count)?;
    let spans: Vec<Span> = entity.spans_in(&doc.id).collect();
    let in_sentence = spans.iter().filter(|s| sentence.contains(s)).count();
    Ok(tf_isf_from_counts(
        in_sentence,
        sentence_words,
        spans.len(),
        doc.word_count,
    ))
}

/// Folds per-occurrence scores into one record per entity.
///
/// TF-ISF is summed over the sentences containing the entity; self-information
/// is the mean over its occurrences.
fn aggregate(entity: &EntityCandidate, doc: &Document, tokens: &[TokenScore]) -> Result<WeightRecord> {
    let spans: Vec<Span> = entity.spans_in(&doc.id).collect();
    let mut per_sentence: BTreeMap<usize, usize> = BTreeMap::new();
    for span in &spans {
        let idx = doc.sentence_containing(span).ok_or_else(|| {
            CoftError::InvalidArgument(format!(
                "occurrence {}..{} of {:?} spans a sentence boundary",
                span.start, span.end, entity.normalized
            ))
        })?;
        *per_sentence.entry(idx).or_default() += 1;
    }
    let mut tf_isf = 0.0;
    for (&idx, &count) in &per_sentence {
        let sentence_words = doc.sentence_word_counts[idx];
        check_counts(sentence_words, doc.word_count)?;
        tf_isf += tf_isf_from_counts(count, sentence_words, spans.len(), doc.word_count);
    }
    let self_info = if spans.is_empty() {
        0.0
    } else {
        spans.iter().map(|s| self_information_of_span(tokens, *s)).sum::<f64>() / spans.len() as f64
    };
    Ok(WeightRecord {
        entity: entity.normalized.clone(),
        tf_isf,
        self_info,
        weight: tf_isf * self_info,
    })
}

/// Contextual weights from precomputed tokens of `doc.text`.
pub fn weights_from_tokens(
    doc: &Document,
    candidates: &[EntityCandidate],
    tokens: &[TokenScore],
) -> Result<Vec<WeightRecord>> {
    candidates.iter().map(|c| aggregate(c, doc, tokens)).collect()
}

/// One weight record per candidate, in candidate order.
pub fn contextual_weights(
    query: &str,
    doc: &Document,
    candidates: &[EntityCandidate],
    provider: &dyn TokenProvider,
) -> Result<Vec<WeightRecord>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let tokens = provider.token_logprobs(query, &doc.text)?;
    weights_from_tokens(doc, candidates, &tokens)
}
