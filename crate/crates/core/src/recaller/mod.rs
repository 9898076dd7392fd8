//! Candidate key-entity recall: query entities, KG neighbor expansion, and
//! retention of candidates that occur in the reference contexts.

pub mod kg;
pub mod stopwords;
pub mod wikidata;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoftError, Result};
use crate::segmentation::{normalize_text, split_sentences, tokenize_words, Document, Span};
pub use kg::{KgFixture, KnowledgeGraph};
use stopwords::is_stopword;

/// Where a candidate came from. Declaration order is dedup precedence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntitySource {
    QueryEntity,
    KgNeighborHop1,
    KgNeighborHop2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    pub doc_id: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub surface: String,
    pub normalized: String,
    pub source: EntitySource,
    pub occurrences: Vec<Occurrence>,
}

impl EntityCandidate {
    pub fn new(surface: &str, source: EntitySource) -> Self {
        EntityCandidate {
            surface: surface.to_string(),
            normalized: normalize_entity(surface),
            source,
            occurrences: Vec::new(),
        }
    }

    /// Occurrence spans inside the document with the given id.
    pub fn spans_in<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = Span> + 'a {
        self.occurrences
            .iter()
            .filter(move |o| o.doc_id == doc_id)
            .map(|o| o.span)
    }
}

/// NFC, lowercase, whitespace collapsed, trimmed to the outermost
/// alphanumeric characters.
pub fn normalize_entity(text: &str) -> String {
    let composed = normalize_text(text).to_lowercase();
    let collapsed = composed.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

/// Keeps the first candidate per normalized form, preferring the earlier source.
fn dedup(candidates: Vec<EntityCandidate>) -> Vec<EntityCandidate> {
    let mut best: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<EntityCandidate> = Vec::with_capacity(candidates.len());
    for cand in candidates {
        if cand.normalized.is_empty() {
            continue;
        }
        match best.get(&cand.normalized) {
            Some(&i) if out[i].source <= cand.source => {}
            Some(&i) => out[i] = cand,
            None => {
                best.insert(cand.normalized.clone(), out.len());
                out.push(cand);
            }
        }
    }
    out
}

/// Set of normalized entity labels matched longest-first against query words.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    labels: HashSet<String>,
    max_words: usize,
}

impl Gazetteer {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut gaz = Gazetteer::default();
        for label in labels {
            gaz.insert(label.as_ref());
        }
        gaz
    }

    pub fn insert(&mut self, label: &str) {
        let normalized = normalize_entity(label);
        let words = tokenize_words(&normalized).len();
        if words > 0 {
            self.max_words = self.max_words.max(words);
            self.labels.insert(normalized);
        }
    }

    /// Adds one label per non-empty line.
    pub fn extend_from_lines(&mut self, text: &str) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            self.insert(line);
        }
    }

    pub fn contains(&self, normalized: &str) -> bool {
        self.labels.contains(normalized)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Greedy left-to-right longest matches as ranges of word indices.
    fn longest_matches(&self, text: &str, words: &[Span]) -> Vec<std::ops::Range<usize>> {
        let mut hits = Vec::new();
        let mut i = 0;
        while i < words.len() {
            let longest = (1..=self.max_words.min(words.len() - i)).rev().find(|&len| {
                let span = Span::new(words[i].start, words[i + len - 1].end);
                self.contains(&normalize_entity(span.slice(text)))
            });
            match longest {
                Some(len) => {
                    hits.push(i..i + len);
                    i += len;
                }
                None => i += 1,
            }
        }
        hits
    }
}

fn only_whitespace_between(text: &str, a: &Span, b: &Span) -> bool {
    text[a.end..b.start].chars().all(char::is_whitespace)
}

/// Query-side entity extraction: gazetteer hits first, then capitalized
/// runs, then remaining content words of three or more characters.
pub fn extract_query_entities(query: &str, gazetteer: &Gazetteer) -> Vec<EntityCandidate> {
    let query = normalize_text(query);
    let words = tokenize_words(&query);
    if words.is_empty() {
        return Vec::new();
    }
    let sentence_starts: HashSet<usize> = split_sentences(&query)
        .iter()
        .filter_map(|s| words.iter().position(|w| w.start >= s.start))
        .collect();

    let mut found: Vec<(usize, EntityCandidate)> = Vec::new();
    let mut covered = vec![false; words.len()];
    let surface = |a: usize, b: usize| Span::new(words[a].start, words[b].end).slice(&query);

    for range in gazetteer.longest_matches(&query, &words) {
        covered[range.clone()].iter_mut().for_each(|c| *c = true);
        found.push((
            range.start,
            EntityCandidate::new(surface(range.start, range.end - 1), EntitySource::QueryEntity),
        ));
    }

    let lower: Vec<String> = words.iter().map(|w| w.slice(&query).to_lowercase()).collect();
    let capitalized = |i: usize| {
        let initial_stop = sentence_starts.contains(&i) && is_stopword(&lower[i]);
        !covered[i] && !initial_stop && words[i].slice(&query).chars().next().is_some_and(char::is_uppercase)
    };
    let mut runs = Vec::new();
    let mut i = 0;
    while i < words.len() {
        if !capitalized(i) {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < words.len() && capitalized(j + 1) && only_whitespace_between(&query, &words[j], &words[j + 1]) {
            j += 1;
        }
        if (i..=j).any(|k| !is_stopword(&lower[k])) {
            runs.push((i, j));
        }
        i = j + 1;
    }
    for (i, j) in runs {
        covered[i..=j].iter_mut().for_each(|c| *c = true);
        found.push((i, EntityCandidate::new(surface(i, j), EntitySource::QueryEntity)));
    }

    for (k, word) in lower.iter().enumerate() {
        if !covered[k] && word.chars().count() >= 3 && !is_stopword(word) {
            found.push((k, EntityCandidate::new(surface(k, k), EntitySource::QueryEntity)));
        }
    }

    found.sort_by_key(|(pos, _)| *pos);
    dedup(found.into_iter().map(|(_, c)| c).collect())
}

/// Unions KG neighbors (one or two hops) into the candidate list.
pub fn expand_neighbors(
    candidates: &[EntityCandidate],
    kg: &dyn KnowledgeGraph,
    hops: u8,
) -> Result<Vec<EntityCandidate>> {
    if !(1..=2).contains(&hops) {
        return Err(CoftError::InvalidArgument(format!("hops must be 1 or 2, got {hops}")));
    }
    let mut out = dedup(candidates.to_vec());
    let mut seen: HashSet<String> = out.iter().map(|c| c.normalized.clone()).collect();
    let mut frontier: Vec<String> = out.iter().map(|c| c.normalized.clone()).collect();
    for hop in 1..=hops {
        let source = if hop == 1 {
            EntitySource::KgNeighborHop1
        } else {
            EntitySource::KgNeighborHop2
        };
        let mut next = Vec::new();
        for label in &frontier {
            let Some(neighbors) = kg.neighbors(label)? else {
                continue;
            };
            for neighbor in neighbors {
                let cand = EntityCandidate::new(&neighbor, source);
                if !cand.normalized.is_empty() && seen.insert(cand.normalized.clone()) {
                    next.push(cand.normalized.clone());
                    out.push(cand);
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// Word-aligned, case-insensitive occurrences of `normalized` in `doc`.
/// Matches never cross a sentence boundary.
pub fn find_occurrences(normalized: &str, doc: &Document) -> Vec<Span> {
    let width = tokenize_words(normalized).len();
    if width == 0 || width > doc.words.len() {
        return Vec::new();
    }
    let first_word = normalized.split(|c: char| c.is_whitespace()).next().unwrap_or_default();
    let mut spans = Vec::new();
    for i in 0..=doc.words.len() - width {
        let head = doc.slice(&doc.words[i]).to_lowercase();
        if !first_word.starts_with(head.as_str()) {
            continue;
        }
        let span = Span::new(doc.words[i].start, doc.words[i + width - 1].end);
        if normalize_entity(doc.slice(&span)) == normalized && doc.sentence_containing(&span).is_some() {
            spans.push(span);
        }
    }
    spans
}

/// Retains candidates occurring in at least one document, filling occurrences.
/// Output is ordered by first occurrence, then by source precedence.
pub fn filter_in_context(candidates: &[EntityCandidate], docs: &[Document]) -> Vec<EntityCandidate> {
    let mut kept: Vec<((usize, usize, EntitySource), EntityCandidate)> = Vec::new();
    for cand in dedup(candidates.to_vec()) {
        let mut occurrences = Vec::new();
        let mut first = None;
        for (d, doc) in docs.iter().enumerate() {
            for span in find_occurrences(&cand.normalized, doc) {
                first.get_or_insert((d, span.start));
                occurrences.push(Occurrence {
                    doc_id: doc.id.clone(),
                    span,
                });
            }
        }
        if let Some((d, start)) = first {
            let key = (d, start, cand.source);
            kept.push((key, EntityCandidate { occurrences, ..cand }));
        }
    }
    kept.sort_by_key(|k| k.0);
    kept.into_iter().map(|(_, c)| c).collect()
}
