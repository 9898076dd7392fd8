//! Knowledge-graph access: the lookup trait and the offline fixture backend.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::normalize_entity;
use crate::error::{CoftError, Result};

/// Neighbor lookup over a knowledge graph keyed by entity label.
pub trait KnowledgeGraph: Send + Sync {
    /// Labels of the one-hop neighbors of the entity named `label`
    /// (already normalized). `Ok(None)` means the label does not resolve.
    fn neighbors(&self, label: &str) -> Result<Option<Vec<String>>>;

    /// Labels this graph knows about, used to seed the query gazetteer.
    fn known_labels(&self) -> Vec<String> {
        Vec::new()
    }
}

/// On-disk fixture: `entities` maps label to id, `neighbors` maps id to labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KgFixture {
    pub entities: BTreeMap<String, String>,
    pub neighbors: BTreeMap<String, Vec<String>>,
}

impl KgFixture {
    pub fn from_json(json: &str) -> Result<Self> {
        let raw: KgFixture = serde_json::from_str(json)?;
        raw.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path)
            .map_err(|e| CoftError::Config(format!("cannot read KG fixture {}: {e}", path.display())))?;
        Self::from_json(&json)
    }

    /// Normalizes entity keys and deduplicates neighbor lists.
    fn validated(self) -> Result<Self> {
        let entities = self
            .entities
            .into_iter()
            .map(|(label, id)| (normalize_entity(&label), id))
            .collect();
        let mut neighbors = BTreeMap::new();
        for (id, labels) in self.neighbors {
            let mut seen = HashSet::new();
            let mut kept = Vec::with_capacity(labels.len());
            for label in labels {
                if label.trim().is_empty() {
                    return Err(CoftError::Config(format!(
                        "KG fixture: empty neighbor label under {id}"
                    )));
                }
                if seen.insert(normalize_entity(&label)) {
                    kept.push(label);
                }
            }
            neighbors.insert(id, kept);
        }
        Ok(KgFixture { entities, neighbors })
    }
}

impl KnowledgeGraph for KgFixture {
    fn neighbors(&self, label: &str) -> Result<Option<Vec<String>>> {
        Ok(self
            .entities
            .get(label)
            .map(|id| self.neighbors.get(id).cloned().unwrap_or_default()))
    }

    fn known_labels(&self) -> Vec<String> {
        self.entities.keys().cloned().collect()
    }
}
