//! Rule-based splitting of reference text into paragraphs, sentences and words.
//!
//! All offsets are UTF-8 byte offsets into the NFC-normalized text held by
//! [`Document::text`]. Every span produced here is non-empty, sorted, and
//! carries no leading or trailing whitespace.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Abbreviations whose trailing period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &["Mr.", "Mrs.", "Dr.", "e.g.", "i.e.", "etc.", "vs.", "U.S.", "No."];

/// Half-open byte range `[start, end)` into a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end, "inverted span {start}..{end}");
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn shift(&self, by: usize) -> Span {
        Span::new(self.start + by, self.end + by)
    }
}

/// A reference context segmented at all three granularities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub paragraphs: Vec<Span>,
    pub sentences: Vec<Span>,
    pub words: Vec<Span>,
    /// Total number of words, `|S|` in the TF-ISF formula.
    pub word_count: usize,
    /// Word count per sentence, aligned with `sentences`.
    pub sentence_word_counts: Vec<usize>,
}

impl Document {
    /// Index of the sentence containing `span`, if any single sentence does.
    pub fn sentence_containing(&self, span: &Span) -> Option<usize> {
        containing(&self.sentences, span)
    }

    pub fn paragraph_containing(&self, span: &Span) -> Option<usize> {
        containing(&self.paragraphs, span)
    }

    /// Indices into `words` of the words lying inside `span`.
    pub fn word_range(&self, span: &Span) -> std::ops::Range<usize> {
        let lo = self.words.partition_point(|w| w.start < span.start);
        let hi = self.words.partition_point(|w| w.end <= span.end);
        lo..hi.max(lo)
    }

    /// Indices into `sentences` of the sentences lying inside `span`.
    pub fn sentence_range(&self, span: &Span) -> std::ops::Range<usize> {
        let lo = self.sentences.partition_point(|s| s.start < span.start);
        let hi = self.sentences.partition_point(|s| s.end <= span.end);
        lo..hi.max(lo)
    }

    pub fn slice(&self, span: &Span) -> &str {
        span.slice(&self.text)
    }
}

fn containing(spans: &[Span], target: &Span) -> Option<usize> {
    let idx = spans.partition_point(|s| s.end <= target.start);
    spans.get(idx).filter(|s| s.contains(target)).map(|_| idx)
}

/// Canonical composed (NFC) form used for every offset in this crate.
pub fn normalize_text(text: &str) -> String {
    text.nfc().collect()
}

fn trim_span(text: &str, start: usize, end: usize) -> Option<Span> {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if trimmed.is_empty() {
        None
    } else {
        let s = start + lead;
        Some(Span::new(s, s + trimmed.len()))
    }
}

/// Paragraphs are maximal runs of non-blank lines.
pub fn split_paragraphs(text: &str) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        match (blank, run_start) {
            (true, Some(start)) => {
                spans.extend(trim_span(text, start, offset));
                run_start = None;
            }
            (false, None) => run_start = Some(offset),
            _ => {}
        }
        offset += line.len();
    }
    if let Some(start) = run_start {
        spans.extend(trim_span(text, start, text.len()));
    }
    spans
}

fn is_closing(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '}' | '\u{201D}' | '\u{2019}' | '\u{00BB}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '{' | '\u{201C}' | '\u{2018}' | '\u{00AB}')
}

/// True when the period at byte `dot` closes one of [`ABBREVIATIONS`].
fn ends_abbreviation(text: &str, dot: usize) -> bool {
    let head = &text[..=dot];
    let token_start = head
        .rfind(char::is_whitespace)
        .map(|i| i + head[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let token = head[token_start..].trim_start_matches(is_opening);
    ABBREVIATIONS.contains(&token)
}

/// Splits one paragraph into sentences ending at `.`, `!` or `?`.
pub fn split_sentences(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut seg_start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !matches!(c, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        if c == '.' {
            let digit_follows = chars.get(i + 1).is_some_and(|&(_, n)| n.is_ascii_digit());
            if digit_follows || ends_abbreviation(text, pos) {
                i += 1;
                continue;
            }
        }
        // absorb runs like "?!" and closing quotes/brackets
        let mut j = i + 1;
        while j < chars.len() && (matches!(chars[j].1, '.' | '!' | '?') || is_closing(chars[j].1)) {
            j += 1;
        }
        let at_end = j == chars.len();
        if at_end || chars[j].1.is_whitespace() {
            let end = if at_end { text.len() } else { chars[j].0 };
            spans.extend(trim_span(text, seg_start, end));
            seg_start = end;
        }
        i = j;
    }
    if seg_start < text.len() {
        spans.extend(trim_span(text, seg_start, text.len()));
    }
    spans
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Words are runs of alphanumerics joined by inner apostrophes or hyphens.
pub fn tokenize_words(text: &str) -> Vec<Span> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let in_word = |i: usize| -> bool {
        let c = chars[i].1;
        if c.is_alphanumeric() {
            return true;
        }
        let prev = i.checked_sub(1).map(|p| chars[p].1);
        let next = chars.get(i + 1).map(|&(_, n)| n);
        match (prev, next) {
            (Some(p), Some(n)) if is_apostrophe(c) => p.is_alphabetic() && n.is_alphabetic(),
            (Some(p), Some(n)) if c == '-' => p.is_alphanumeric() && n.is_alphanumeric(),
            _ => false,
        }
    };

    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    for (i, &(pos, _)) in chars.iter().enumerate() {
        match (in_word(i), start) {
            (true, None) => start = Some(pos),
            (false, Some(s)) => {
                spans.push(Span::new(s, pos));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(Span::new(s, text.len()));
    }
    spans
}

/// Normalizes `text` and segments it at every granularity.
pub fn segment_document(id: &str, text: &str) -> Document {
    let text = normalize_text(text);
    let paragraphs = split_paragraphs(&text);
    let mut sentences = Vec::new();
    let mut words = Vec::new();
    let mut sentence_word_counts = Vec::new();
    for para in &paragraphs {
        for sent in split_sentences(para.slice(&text)) {
            let sent = sent.shift(para.start);
            let before = words.len();
            words.extend(
                tokenize_words(sent.slice(&text))
                    .into_iter()
                    .map(|w| w.shift(sent.start)),
            );
            sentence_word_counts.push(words.len() - before);
            sentences.push(sent);
        }
    }
    Document {
        id: id.to_string(),
        word_count: words.len(),
        text,
        paragraphs,
        sentences,
        words,
        sentence_word_counts,
    }
}
