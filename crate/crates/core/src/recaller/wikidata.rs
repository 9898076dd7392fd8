//! Live Wikidata neighbor lookup with an append-only on-disk cache.
//!
//! A label resolves through `wbsearchentities` (first hit wins). Its
//! neighbors are the entity-valued objects of every direct statement,
//! fetched with `wbgetentities` and mapped back to English labels.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::kg::KnowledgeGraph;
use crate::error::{CoftError, Result};

pub const DEFAULT_ENDPOINT: &str = "https://www.wikidata.org/w/api.php";
const LABEL_BATCH: usize = 50;

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub id: String,
    /// Normalized label that resolved to `id`, when the fetch came from a search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub neighbors: Vec<String>,
    /// Unix seconds.
    pub fetched_at: u64,
}

/// Append-only JSON-lines cache. Many readers, one writer at a time.
#[derive(Debug)]
pub struct NeighborCache {
    path: Option<PathBuf>,
    by_id: RwLock<HashMap<String, Vec<String>>>,
    by_label: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<File>>,
}

impl NeighborCache {
    pub fn in_memory() -> Self {
        NeighborCache {
            path: None,
            by_id: RwLock::default(),
            by_label: RwLock::default(),
            writer: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) the cache at `path`. Unparseable lines are skipped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut by_id = HashMap::new();
        let mut by_label = HashMap::new();
        if path.exists() {
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) => {
                        if let Some(label) = rec.label {
                            by_label.insert(label, rec.id.clone());
                        }
                        by_id.insert(rec.id, rec.neighbors);
                    }
                    Err(e) => warn!("{}:{}: skipping cache line: {e}", path.display(), n + 1),
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(NeighborCache {
            path: Some(path),
            by_id: RwLock::new(by_id),
            by_label: RwLock::new(by_label),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn id_for_label(&self, label: &str) -> Option<String> {
        self.by_label.read().unwrap().get(label).cloned()
    }

    pub fn neighbors_of(&self, id: &str) -> Option<Vec<String>> {
        self.by_id.read().unwrap().get(id).cloned()
    }

    pub fn insert(&self, record: CacheRecord) -> Result<()> {
        let mut writer = self.writer.lock().unwrap();
        if let Some(file) = writer.as_mut() {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        if let Some(label) = &record.label {
            self.by_label.write().unwrap().insert(label.clone(), record.id.clone());
        }
        self.by_id.write().unwrap().insert(record.id, record.neighbors);
        Ok(())
    }
}

/// Spaces requests at least `1 / rps` seconds apart.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(rps: f64) -> Self {
        let interval = if rps.is_finite() && rps > 0.0 {
            Duration::from_secs_f64(1.0 / rps)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    fn wait(&self) {
        let mut next = self.next.lock().unwrap();
        let now = Instant::now();
        if let Some(at) = *next {
            if at > now {
                std::thread::sleep(at - now);
            }
        }
        *next = Some(Instant::now() + self.interval);
    }
}

pub struct WikidataClient {
    endpoint: String,
    http: reqwest::blocking::Client,
    cache: NeighborCache,
    limiter: RateLimiter,
}

impl WikidataClient {
    pub fn new(endpoint: impl Into<String>, cache: NeighborCache, rps: f64) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .user_agent(concat!("coft/", env!("CARGO_PKG_VERSION")))
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| CoftError::Config(format!("http client: {e}")))?;
        Ok(WikidataClient {
            endpoint: endpoint.into(),
            http,
            cache,
            limiter: RateLimiter::new(rps),
        })
    }

    pub fn cache(&self) -> &NeighborCache {
        &self.cache
    }

    fn get(&self, entity: &str, params: &[(&str, &str)]) -> Result<Value> {
        self.limiter.wait();
        let transport = |message: String| CoftError::KnowledgeGraph {
            entity: entity.to_string(),
            message,
        };
        let resp = self
            .http
            .get(&self.endpoint)
            .query(params)
            .send()
            .map_err(|e| transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(transport(format!("HTTP {status}")));
        }
        resp.json::<Value>().map_err(|e| transport(e.to_string()))
    }

    fn search(&self, label: &str) -> Result<Option<String>> {
        let body = self.get(
            label,
            &[
                ("action", "wbsearchentities"),
                ("search", label),
                ("language", "en"),
                ("limit", "1"),
                ("format", "json"),
            ],
        )?;
        Ok(body["search"][0]["id"].as_str().map(str::to_string))
    }

    /// Entity ids referenced by the direct statements of `id`, in property order.
    fn statement_targets(&self, label: &str, id: &str) -> Result<Vec<String>> {
        let body = self.get(
            label,
            &[
                ("action", "wbgetentities"),
                ("ids", id),
                ("props", "claims"),
                ("format", "json"),
            ],
        )?;
        let mut targets: Vec<String> = Vec::new();
        if let Some(claims) = body["entities"][id]["claims"].as_object() {
            for statements in claims.values() {
                for st in statements.as_array().into_iter().flatten() {
                    let value = &st["mainsnak"]["datavalue"];
                    if value["type"] == "wikibase-entityid" {
                        if let Some(target) = value["value"]["id"].as_str() {
                            if target != id && !targets.iter().any(|t| t == target) {
                                targets.push(target.to_string());
                            }
                        }
                    }
                }
            }
        }
        Ok(targets)
    }

    fn labels(&self, label: &str, ids: &[String]) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(ids.len());
        for chunk in ids.chunks(LABEL_BATCH) {
            let joined = chunk.join("|");
            let body = self.get(
                label,
                &[
                    ("action", "wbgetentities"),
                    ("ids", &joined),
                    ("props", "labels"),
                    ("languages", "en"),
                    ("format", "json"),
                ],
            )?;
            for id in chunk {
                if let Some(text) = body["entities"][id.as_str()]["labels"]["en"]["value"].as_str() {
                    if !text.trim().is_empty() && !out.iter().any(|l| l == text) {
                        out.push(text.to_string());
                    }
                }
            }
        }
        Ok(out)
    }
}

impl KnowledgeGraph for WikidataClient {
    fn neighbors(&self, label: &str) -> Result<Option<Vec<String>>> {
        let id = match self.cache.id_for_label(label) {
            Some(id) => id,
            None => match self.search(label)? {
                Some(id) => id,
                None => return Ok(None),
            },
        };
        if let Some(hit) = self.cache.neighbors_of(&id) {
            if self.cache.id_for_label(label).is_none() {
                self.cache.insert(CacheRecord {
                    id,
                    label: Some(label.to_string()),
                    neighbors: hit.clone(),
                    fetched_at: unix_now(),
                })?;
            }
            return Ok(Some(hit));
        }
        debug!("fetching neighbors of {label:?} ({id})");
        let targets = self.statement_targets(label, &id)?;
        let neighbors = self.labels(label, &targets)?;
        self.cache.insert(CacheRecord {
            id,
            label: Some(label.to_string()),
            neighbors: neighbors.clone(),
            fetched_at: unix_now(),
        })?;
        Ok(Some(neighbors))
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
