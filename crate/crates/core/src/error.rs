use thiserror::Error;

pub type Result<T, E = CoftError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CoftError {
    #[error("empty training corpus")]
    EmptyCorpus,

    #[error("degenerate sentence/document: sentence has {sentence_words} words, document has {document_words}")]
    DegenerateCounts {
        sentence_words: usize,
        document_words: usize,
    },

    /// A provider token could not be located in the reference text.
    #[error("token alignment failed at offset {offset}: expected {token:?}")]
    Alignment { offset: usize, token: String },

    /// Transport or auth failure talking to the language-model endpoint.
    #[error("provider request failed: {0}")]
    Provider(String),

    /// Transport failure talking to the knowledge graph. Retriable.
    #[error("knowledge graph lookup failed for {entity:?}: {message}")]
    KnowledgeGraph { entity: String, message: String },

    #[error("overlapping highlight spans at offsets {first_end} > {second_start}")]
    OverlappingSpans { first_end: usize, second_start: usize },

    #[error("span {start}..{end} lies outside text of length {len}")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },

    #[error("unbalanced highlight markers: {0}")]
    UnbalancedMarkers(String),

    #[error("invalid template: {0}")]
    InvalidTemplate(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("not enough {kind} documents: need {needed}, have {available} (short by {deficit})", deficit = needed - available)]
    InsufficientDocuments {
        kind: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("record {record_id:?}, ref {ref_id:?}: {source}")]
    Record {
        record_id: String,
        ref_id: String,
        #[source]
        source: Box<CoftError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CoftError {
    /// Transport-level failures that may succeed on retry.
    pub fn is_retriable(&self) -> bool {
        match self {
            CoftError::Provider(_) | CoftError::KnowledgeGraph { .. } => true,
            CoftError::Record { source, .. } => source.is_retriable(),
            _ => false,
        }
    }
}
