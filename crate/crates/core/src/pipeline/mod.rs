//! Per-record orchestration: segment, recall, score, select, highlight, prompt.

pub mod batch;
pub mod config;
pub mod template;

use std::collections::{BTreeMap, HashSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use batch::{run_batch, BatchSummary, RecordFailure};
pub use config::{KgConfig, PipelineConfig, ProviderConfig, ThresholdMode};
pub use template::PromptTemplate;

use crate::error::{CoftError, Result};
use crate::recaller::kg::{KgFixture, KnowledgeGraph};
use crate::recaller::wikidata::{NeighborCache, WikidataClient};
use crate::recaller::{expand_neighbors, extract_query_entities, filter_in_context, EntityCandidate, Gazetteer};
use crate::scorer::{
    total_self_information, weights_from_tokens, NgramModel, NgramProvider, RemoteProvider, TokenProvider, TokenScore,
};
use crate::segmentation::{segment_document, Document, Span};
use crate::selector::{
    apply_highlights, dynamic_threshold, highlights_only, joint_promote, random_selection, score_units, select_units,
    strip_highlights, ContextStats, Granularity, Threshold,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefInput {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instructions: Option<String>,
    pub refs: Vec<RefInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityWeight {
    pub tf_isf: f64,
    pub self_info: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefOutput {
    pub id: String,
    /// Ref text (NFC) with markers inserted around the selected spans.
    pub highlighted_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub highlights_only: Option<String>,
    pub tau: f64,
    pub tau_len: f64,
    pub tau_info: f64,
    /// Byte spans into the NFC ref text.
    pub selected: Vec<Span>,
    pub weights: BTreeMap<String, EntityWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub id: String,
    /// Normalized entities retained after the in-context filter.
    pub candidates: Vec<String>,
    pub refs: Vec<RefOutput>,
    pub prompt: String,
    /// Entity occurrences covered by a selected span, summed over refs.
    #[serde(skip)]
    pub entities_highlighted: usize,
}

fn record_error(record: &InputRecord, ref_id: &str, err: CoftError) -> CoftError {
    CoftError::Record {
        record_id: record.id.clone(),
        ref_id: ref_id.to_string(),
        source: Box::new(err),
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    kg: Box<dyn KnowledgeGraph>,
    gazetteer: Gazetteer,
    /// `None` trains a bigram model per record on its query and refs.
    provider: Option<Box<dyn TokenProvider>>,
    serial_gate: Mutex<()>,
}

impl Pipeline {
    /// Builds the KG backend, gazetteer and provider named by `config`.
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let kg: Box<dyn KnowledgeGraph> = match &config.kg {
            KgConfig::Fixture { path: Some(path) } => Box::new(KgFixture::load(path)?),
            KgConfig::Fixture { path: None } => Box::new(KgFixture::default()),
            KgConfig::Live { endpoint, cache, rps } => {
                let cache = match cache {
                    Some(path) => NeighborCache::open(path)?,
                    None => NeighborCache::in_memory(),
                };
                Box::new(WikidataClient::new(endpoint.clone(), cache, *rps)?)
            }
        };
        let provider: Option<Box<dyn TokenProvider>> = match &config.provider {
            ProviderConfig::Ngram { model: Some(path) } => Some(Box::new(NgramProvider::new(NgramModel::load(path)?))),
            ProviderConfig::Ngram { model: None } => None,
            ProviderConfig::Remote { url, key, timeout_ms } => {
                Some(Box::new(RemoteProvider::new(url.clone(), key.clone(), *timeout_ms)?))
            }
        };
        let labels = match &config.labels {
            Some(path) => Some(
                std::fs::read_to_string(path)
                    .map_err(|e| CoftError::Config(format!("cannot read labels {}: {e}", path.display())))?,
            ),
            None => None,
        };
        Self::with_parts(config, kg, provider, labels.as_deref())
    }

    /// Assembles a pipeline from ready-made parts; `labels` holds extra
    /// gazetteer entries, one per line.
    pub fn with_parts(
        config: PipelineConfig,
        kg: Box<dyn KnowledgeGraph>,
        provider: Option<Box<dyn TokenProvider>>,
        labels: Option<&str>,
    ) -> Result<Self> {
        config.validate()?;
        let mut gazetteer = Gazetteer::new(kg.known_labels());
        if let Some(text) = labels {
            gazetteer.extend_from_lines(text);
        }
        Ok(Pipeline {
            config,
            kg,
            gazetteer,
            provider,
            serial_gate: Mutex::new(()),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn tokens(&self, provider: &dyn TokenProvider, query: &str, doc: &Document) -> Result<Vec<TokenScore>> {
        if provider.is_concurrent() {
            provider.token_logprobs(query, &doc.text)
        } else {
            let _held = self.serial_gate.lock().unwrap_or_else(|p| p.into_inner());
            provider.token_logprobs(query, &doc.text)
        }
    }

    fn validate_record(&self, record: &InputRecord) -> Result<()> {
        if record.id.is_empty() {
            return Err(CoftError::InvalidArgument("record id is empty".into()));
        }
        if record.refs.is_empty() {
            return Err(record_error(
                record,
                "",
                CoftError::InvalidArgument("record has no refs".into()),
            ));
        }
        let mut seen = HashSet::new();
        for r in &record.refs {
            if !seen.insert(r.id.as_str()) {
                return Err(record_error(
                    record,
                    &r.id,
                    CoftError::InvalidArgument("duplicate ref id".into()),
                ));
            }
            if r.text.contains(&self.config.marker) {
                return Err(record_error(
                    record,
                    &r.id,
                    CoftError::InvalidArgument(format!("ref text already contains marker {:?}", self.config.marker)),
                ));
            }
        }
        Ok(())
    }

    /// Retained candidates after NER, KG expansion and the in-context filter.
    pub fn recall(&self, record: &InputRecord, docs: &[Document]) -> Result<Vec<EntityCandidate>> {
        let from_query = extract_query_entities(&record.query, &self.gazetteer);
        let expanded = expand_neighbors(&from_query, self.kg.as_ref(), self.config.hops)
            .map_err(|e| record_error(record, "", e))?;
        Ok(filter_in_context(&expanded, docs))
    }

    pub fn run_record(&self, record: &InputRecord) -> Result<OutputRecord> {
        self.validate_record(record)?;
        let docs: Vec<Document> = record.refs.iter().map(|r| segment_document(&r.id, &r.text)).collect();
        let candidates = self.recall(record, &docs)?;

        let trained;
        let provider: &dyn TokenProvider = match &self.provider {
            Some(p) => p.as_ref(),
            None => {
                let mut corpus = record.query.clone();
                for r in &record.refs {
                    corpus.push('\n');
                    corpus.push_str(&r.text);
                }
                trained = NgramProvider::new(NgramModel::train(&corpus).map_err(|e| record_error(record, "", e))?);
                &trained
            }
        };

        let tokens: Vec<Vec<TokenScore>> = docs
            .iter()
            .map(|d| {
                self.tokens(provider, &record.query, d)
                    .map_err(|e| record_error(record, &d.id, e))
            })
            .collect::<Result<_>>()?;
        let thresholds: Vec<Threshold> = match self.config.threshold {
            ThresholdMode::Fixed { tau } => vec![Threshold::fixed(tau); docs.len()],
            ThresholdMode::Dynamic => {
                let stats: Vec<ContextStats> = docs
                    .iter()
                    .zip(&tokens)
                    .map(|(d, t)| ContextStats {
                        length: d.word_count as f64,
                        informativeness: total_self_information(t),
                    })
                    .collect();
                dynamic_threshold(&stats).map_err(|e| record_error(record, "", e))?
            }
        };

        let mut refs = Vec::with_capacity(docs.len());
        let mut entities_highlighted = 0;
        for (i, doc) in docs.iter().enumerate() {
            let out = self
                .highlight_ref(i, doc, &tokens[i], thresholds[i], &candidates)
                .map_err(|e| record_error(record, &doc.id, e))?;
            entities_highlighted += candidates
                .iter()
                .flat_map(|c| c.spans_in(&doc.id))
                .filter(|occ| out.selected.iter().any(|s| s.contains(occ)))
                .count();
            refs.push(out);
        }

        let prompt_refs: Vec<String> = refs
            .iter()
            .zip(&docs)
            .map(|(r, d)| match &r.highlights_only {
                Some(extract) if !r.selected.is_empty() => extract.clone(),
                Some(_) => d.text.clone(),
                None => r.highlighted_text.clone(),
            })
            .collect();
        Ok(OutputRecord {
            id: record.id.clone(),
            candidates: candidates.iter().map(|c| c.normalized.clone()).collect(),
            prompt: assemble_prompt(&self.config.template, record, &prompt_refs),
            refs,
            entities_highlighted,
        })
    }

    fn highlight_ref(
        &self,
        index: usize,
        doc: &Document,
        tokens: &[TokenScore],
        threshold: Threshold,
        candidates: &[EntityCandidate],
    ) -> Result<RefOutput> {
        let present: Vec<EntityCandidate> = candidates
            .iter()
            .filter(|c| c.spans_in(&doc.id).next().is_some())
            .cloned()
            .collect();
        let weights = weights_from_tokens(doc, &present, tokens)?;

        let unit_granularity = match self.config.granularity {
            Granularity::Joint => Granularity::Word,
            g => g,
        };
        let units = score_units(doc, unit_granularity, &weights, &present);
        let mut selected = select_units(&units, threshold.tau);
        if let Some(seed) = self.config.random_baseline {
            selected = random_selection(&units, selected.len(), seed.wrapping_add(index as u64))?;
        }
        if self.config.granularity == Granularity::Joint {
            selected = joint_promote(doc, &selected);
        }

        let highlighted_text = apply_highlights(&doc.text, &selected, &self.config.marker)?;
        if strip_highlights(&highlighted_text, &self.config.marker)? != doc.text {
            return Err(CoftError::UnbalancedMarkers(
                "highlight round trip changed the text".into(),
            ));
        }
        Ok(RefOutput {
            id: doc.id.clone(),
            highlights_only: self
                .config
                .highlights_only
                .then(|| highlights_only(&doc.text, &selected, &self.config.joiner)),
            highlighted_text,
            tau: threshold.tau,
            tau_len: threshold.tau_len,
            tau_info: threshold.tau_info,
            selected,
            weights: weights
                .into_iter()
                .map(|w| {
                    (
                        w.entity,
                        EntityWeight {
                            tf_isf: w.tf_isf,
                            self_info: w.self_info,
                            weight: w.weight,
                        },
                    )
                })
                .collect(),
        })
    }
}

/// Fills `tpl` with the record's instructions and query and the given refs.
pub fn assemble_prompt(tpl: &PromptTemplate, record: &InputRecord, highlighted_refs: &[String]) -> String {
    tpl.render(record.instructions.as_deref(), &record.query, highlighted_refs)
}
