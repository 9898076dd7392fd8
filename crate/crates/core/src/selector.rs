//! Ranking of lexical units by contextual weight, threshold selection, and
//! marker insertion.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoftError, Result};
use crate::recaller::EntityCandidate;
use crate::scorer::WeightRecord;
use crate::segmentation::{Document, Span};

pub const DEFAULT_MARKER: &str = "**";
pub const DEFAULT_JOINER: &str = " … ";
pub const TAU_MIN: f64 = 0.05;
pub const TAU_MAX: f64 = 0.95;

/// Slack for `ceil(tau * n)` so that e.g. `0.3 * 10` counts as exactly 3.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Word,
    Sentence,
    Paragraph,
    /// Word-level selection promoted to sentences and paragraphs.
    Joint,
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::Word => "word",
            Granularity::Sentence => "sentence",
            Granularity::Paragraph => "paragraph",
            Granularity::Joint => "joint",
        })
    }
}

impl FromStr for Granularity {
    type Err = CoftError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(Granularity::Word),
            "sentence" => Ok(Granularity::Sentence),
            "paragraph" => Ok(Granularity::Paragraph),
            "joint" => Ok(Granularity::Joint),
            other => Err(CoftError::InvalidArgument(format!("unknown granularity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScore {
    pub granularity: Granularity,
    pub span: Span,
    /// Sum of entity weights, once per occurrence starting inside the unit.
    pub weight: f64,
    /// Number of entity occurrences attributed to the unit.
    pub entity_hits: usize,
    /// Position after sorting by weight descending, then by start.
    pub rank_index: usize,
}

/// Per-context inputs to the dynamic threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContextStats {
    /// Word count.
    pub length: f64,
    /// Total self-information in bits.
    pub informativeness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub tau: f64,
    pub tau_len: f64,
    pub tau_info: f64,
}

impl Threshold {
    /// Fixed override; the normalized components are reported as `tau`.
    pub fn fixed(tau: f64) -> Self {
        Threshold {
            tau,
            tau_len: tau,
            tau_info: tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightPlan {
    pub granularity: Granularity,
    pub tau: f64,
    pub tau_len: f64,
    pub tau_info: f64,
    pub selected: Vec<Span>,
    pub marker: String,
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.len() < 2 || hi == lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// `tau = 0.5 * (minmax(length) + minmax(informativeness))`, clamped to
/// `[TAU_MIN, TAU_MAX]`. Degenerate min-max terms are 0.5.
pub fn dynamic_threshold(contexts: &[ContextStats]) -> Result<Vec<Threshold>> {
    if contexts.is_empty() {
        return Err(CoftError::EmptyBatch);
    }
    let lens: Vec<f64> = contexts.iter().map(|c| c.length).collect();
    let infos: Vec<f64> = contexts.iter().map(|c| c.informativeness).collect();
    Ok(min_max(&lens)
        .into_iter()
        .zip(min_max(&infos))
        .map(|(tau_len, tau_info)| Threshold {
            tau: (0.5 * (tau_len + tau_info)).clamp(TAU_MIN, TAU_MAX),
            tau_len,
            tau_info,
        })
        .collect())
}

/// Word-level units: each entity occurrence becomes one unit (longest wins
/// where occurrences overlap) and every other word is a unit of its own.
pub fn word_units(doc: &Document, occurrences: &[Span]) -> Vec<Span> {
    let mut occ = occurrences.to_vec();
    occ.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut fused: Vec<Span> = Vec::new();
    for span in occ {
        if fused.last().is_none_or(|last| last.end <= span.start) {
            fused.push(span);
        }
    }
    let mut units = Vec::with_capacity(doc.words.len());
    let mut next = fused.iter().peekable();
    for word in &doc.words {
        while next.peek().is_some_and(|f| f.end <= word.start) {
            units.push(*next.next().unwrap());
        }
        if !next.peek().is_some_and(|f| f.overlaps(word)) {
            units.push(*word);
        }
    }
    units.extend(next.copied());
    units
}

fn unit_spans(doc: &Document, granularity: Granularity, occurrences: &[Span]) -> Vec<Span> {
    match granularity {
        Granularity::Word | Granularity::Joint => word_units(doc, occurrences),
        Granularity::Sentence => doc.sentences.clone(),
        Granularity::Paragraph => doc.paragraphs.clone(),
    }
}

/// Sorts by weight descending then start ascending; returns unit indices.
fn rank_order(units: &[UnitScore]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| {
        units[b]
            .weight
            .total_cmp(&units[a].weight)
            .then(units[a].span.start.cmp(&units[b].span.start))
    });
    order
}

/// One score per lexical unit of `doc`, in document order.
pub fn score_units(
    doc: &Document,
    granularity: Granularity,
    weights: &[WeightRecord],
    candidates: &[EntityCandidate],
) -> Vec<UnitScore> {
    let by_entity: HashMap<&str, f64> = weights.iter().map(|w| (w.entity.as_str(), w.weight)).collect();
    let occurrences: Vec<(Span, f64)> = candidates
        .iter()
        .filter_map(|c| by_entity.get(c.normalized.as_str()).map(|w| (c, *w)))
        .flat_map(|(c, w)| c.spans_in(&doc.id).map(move |s| (s, w)))
        .collect();
    let spans: Vec<Span> = occurrences.iter().map(|(s, _)| *s).collect();

    let mut units: Vec<UnitScore> = unit_spans(doc, granularity, &spans)
        .into_iter()
        .map(|span| UnitScore {
            granularity,
            span,
            weight: 0.0,
            entity_hits: 0,
            rank_index: 0,
        })
        .collect();
    for (occ, weight) in occurrences {
        let idx = units.partition_point(|u| u.span.start <= occ.start);
        if let Some(unit) = idx.checked_sub(1).map(|i| &mut units[i]) {
            if occ.start < unit.span.end {
                unit.weight += weight;
                unit.entity_hits += 1;
            }
        }
    }
    for (rank, idx) in rank_order(&units).into_iter().enumerate() {
        units[idx].rank_index = rank;
    }
    units
}

/// `max(1, ceil(tau * n))`, capped at `n`.
pub fn selection_count(tau: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let k = (tau * n as f64 - CEIL_SLACK).ceil().max(1.0) as usize;
    k.min(n)
}

/// Top `tau * 100%` of units by weight, returned in document order.
/// Units without any entity occurrence and zero weight are never selected;
/// if every unit weighs zero the result is empty.
pub fn select_units(units: &[UnitScore], tau: f64) -> Vec<Span> {
    if units.iter().all(|u| u.weight == 0.0) {
        return Vec::new();
    }
    let k = selection_count(tau, units.len());
    let mut picked: Vec<Span> = rank_order(units)
        .into_iter()
        .take(k)
        .map(|i| &units[i])
        .filter(|u| !(u.weight == 0.0 && u.entity_hits == 0))
        .map(|u| u.span)
        .collect();
    picked.sort();
    picked
}

fn validate_spans(text: &str, spans: &[Span]) -> Result<()> {
    let mut prev_end = 0;
    for (i, span) in spans.iter().enumerate() {
        if span.end > text.len() || span.start > span.end {
            return Err(CoftError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len: text.len(),
            });
        }
        if i > 0 && span.start < prev_end {
            return Err(CoftError::OverlappingSpans {
                first_end: prev_end,
                second_start: span.start,
            });
        }
        if !text.is_char_boundary(span.start) || !text.is_char_boundary(span.end) {
            return Err(CoftError::InvalidArgument(format!(
                "span {}..{} splits a character",
                span.start, span.end
            )));
        }
        prev_end = span.end;
    }
    Ok(())
}

/// Wraps each span as `marker + slice + marker`.
///
/// Spans must be sorted, non-overlapping, non-empty, and free of leading or
/// trailing whitespace; the last rule keeps the markup unambiguous for
/// [`strip_highlights`].
pub fn apply_highlights(text: &str, spans: &[Span], marker: &str) -> Result<String> {
    if marker.is_empty() {
        return Err(CoftError::InvalidArgument("empty marker".into()));
    }
    validate_spans(text, spans)?;
    let mut out = String::with_capacity(text.len() + 2 * marker.len() * spans.len());
    let mut cursor = 0;
    for span in spans {
        let slice = span.slice(text);
        if slice.is_empty() || slice.trim() != slice {
            return Err(CoftError::InvalidArgument(format!(
                "span {}..{} is empty or has surrounding whitespace",
                span.start, span.end
            )));
        }
        out.push_str(&text[cursor..span.start]);
        out.push_str(marker);
        out.push_str(slice);
        out.push_str(marker);
        cursor = span.end;
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Removes marker pairs. An opening marker must be followed by a
/// non-whitespace character and a closing one preceded by one; a marker that
/// can only open while a highlight is already open is reported as nesting.
pub fn strip_highlights(text: &str, marker: &str) -> Result<String> {
    if marker.is_empty() {
        return Err(CoftError::InvalidArgument("empty marker".into()));
    }
    let mut out = String::with_capacity(text.len());
    let mut open: Option<usize> = None;
    let mut cursor = 0;
    for (pos, _) in text.match_indices(marker) {
        if pos < cursor {
            continue;
        }
        let before = text[..pos].chars().next_back();
        let after = text[pos + marker.len()..].chars().next();
        let can_open = after.is_some_and(|c| !c.is_whitespace());
        let can_close = before.is_some_and(|c| !c.is_whitespace());
        match open {
            None if can_open => open = Some(pos),
            None => return Err(CoftError::UnbalancedMarkers(format!("stray marker at offset {pos}"))),
            Some(_) if can_close => open = None,
            Some(at) if can_open => {
                return Err(CoftError::UnbalancedMarkers(format!(
                    "nested marker at offset {pos} inside highlight opened at {at}"
                )))
            }
            Some(_) => return Err(CoftError::UnbalancedMarkers(format!("stray marker at offset {pos}"))),
        }
        out.push_str(&text[cursor..pos]);
        cursor = pos + marker.len();
    }
    if let Some(at) = open {
        return Err(CoftError::UnbalancedMarkers(format!(
            "marker opened at offset {at} is never closed"
        )));
    }
    out.push_str(&text[cursor..]);
    Ok(out)
}

/// Promotes sentences with more than a third of their words selected, then
/// paragraphs with more than a third of their sentences promoted.
pub fn joint_promote(doc: &Document, word_selection: &[Span]) -> Vec<Span> {
    let selected_word: Vec<bool> = doc
        .words
        .iter()
        .map(|w| word_selection.iter().any(|s| s.contains(w)))
        .collect();
    let promoted_sentence: Vec<bool> = doc
        .sentences
        .iter()
        .zip(&doc.sentence_word_counts)
        .map(|(s, &n)| {
            let hits = doc.word_range(s).filter(|&i| selected_word[i]).count();
            n > 0 && 3 * hits > n
        })
        .collect();

    let mut out = Vec::new();
    for para in &doc.paragraphs {
        let sentences = doc.sentence_range(para);
        let promoted = sentences.clone().filter(|&i| promoted_sentence[i]).count();
        if !sentences.is_empty() && 3 * promoted > sentences.len() {
            out.push(*para);
            continue;
        }
        for i in sentences {
            let sentence = doc.sentences[i];
            if promoted_sentence[i] {
                out.push(sentence);
            } else {
                out.extend(word_selection.iter().filter(|s| sentence.contains(s)).copied());
            }
        }
    }
    out.sort();
    out
}

/// Uniform sample of `k` unit spans without replacement, in document order.
pub fn random_selection(units: &[UnitScore], k: usize, seed: u64) -> Result<Vec<Span>> {
    if k > units.len() {
        return Err(CoftError::InvalidArgument(format!(
            "cannot sample {k} of {} units",
            units.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<Span> = rand::seq::index::sample(&mut rng, units.len(), k)
        .into_iter()
        .map(|i| units[i].span)
        .collect();
    picked.sort();
    Ok(picked)
}

/// Selected slices in document order joined by `joiner`.
pub fn highlights_only(text: &str, spans: &[Span], joiner: &str) -> String {
    spans.iter().map(|s| s.slice(text)).collect::<Vec<_>>().join(joiner)
}
