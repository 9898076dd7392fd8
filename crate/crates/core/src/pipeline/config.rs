use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::template::PromptTemplate;
use crate::error::{CoftError, Result};
use crate::recaller::wikidata::DEFAULT_ENDPOINT;
use crate::scorer::remote::DEFAULT_TIMEOUT_MS;
use crate::selector::{Granularity, DEFAULT_JOINER, DEFAULT_MARKER};

pub const DEFAULT_KG_RPS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ThresholdMode {
    /// Per-record min-max over the record's refs.
    Dynamic,
    Fixed {
        tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    /// Bigram model from a file, or trained per record on its query and refs.
    Ngram { model: Option<PathBuf> },
    Remote {
        url: String,
        #[serde(skip)]
        key: Option<String>,
        timeout_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum KgConfig {
    /// Offline fixture; no fixture means no neighbors.
    Fixture { path: Option<PathBuf> },
    Live {
        endpoint: String,
        cache: Option<PathBuf>,
        rps: f64,
    },
}

impl KgConfig {
    /// Reads `COFT_KG_MODE`, `COFT_KG_FIXTURE`, `COFT_KG_CACHE`, `COFT_KG_RPS`
    /// and `COFT_KG_URL` through `var`.
    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mode = var("COFT_KG_MODE").unwrap_or_else(|| "fixture".into());
        match mode.as_str() {
            "fixture" => Ok(KgConfig::Fixture {
                path: var("COFT_KG_FIXTURE").map(PathBuf::from),
            }),
            "live" => {
                let rps = match var("COFT_KG_RPS") {
                    None => DEFAULT_KG_RPS,
                    Some(raw) => raw
                        .parse::<f64>()
                        .ok()
                        .filter(|r| r.is_finite() && *r > 0.0)
                        .ok_or_else(|| {
                            CoftError::Config(format!("COFT_KG_RPS must be a positive number, got {raw:?}"))
                        })?,
                };
                Ok(KgConfig::Live {
                    endpoint: var("COFT_KG_URL").unwrap_or_else(|| DEFAULT_ENDPOINT.into()),
                    cache: var("COFT_KG_CACHE").map(PathBuf::from),
                    rps,
                })
            }
            other => Err(CoftError::Config(format!(
                "COFT_KG_MODE must be live or fixture, got {other:?}"
            ))),
        }
    }
}

impl ProviderConfig {
    /// `kind` is `ngram` or `remote`; remote settings come from `COFT_LM_*`.
    pub fn from_vars(kind: &str, model: Option<PathBuf>, var: impl Fn(&str) -> Option<String>) -> Result<Self> {
        match kind {
            "ngram" => Ok(ProviderConfig::Ngram { model }),
            "remote" => {
                let url =
                    var("COFT_LM_URL").ok_or_else(|| CoftError::Config("remote provider needs COFT_LM_URL".into()))?;
                let timeout_ms = match var("COFT_LM_TIMEOUT_MS") {
                    None => DEFAULT_TIMEOUT_MS,
                    Some(raw) => raw.parse().map_err(|_| {
                        CoftError::Config(format!("COFT_LM_TIMEOUT_MS must be an integer, got {raw:?}"))
                    })?,
                };
                Ok(ProviderConfig::Remote {
                    url,
                    key: var("COFT_LM_KEY"),
                    timeout_ms,
                })
            }
            other => Err(CoftError::Config(format!("unknown provider {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub granularity: Granularity,
    pub threshold: ThresholdMode,
    /// 1 or 2.
    pub hops: u8,
    pub marker: String,
    pub highlights_only: bool,
    pub joiner: String,
    /// Seed of the random-selection baseline; `None` runs the weighted selector.
    pub random_baseline: Option<u64>,
    pub provider: ProviderConfig,
    pub kg: KgConfig,
    /// Extra gazetteer labels, one per line.
    pub labels: Option<PathBuf>,
    pub template: PromptTemplate,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            granularity: Granularity::Word,
            threshold: ThresholdMode::Dynamic,
            hops: 1,
            marker: DEFAULT_MARKER.into(),
            highlights_only: false,
            joiner: DEFAULT_JOINER.into(),
            random_baseline: None,
            provider: ProviderConfig::Ngram { model: None },
            kg: KgConfig::Fixture { path: None },
            labels: None,
            template: PromptTemplate::default(),
            workers: default_workers(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.hops) {
            return Err(CoftError::Config(format!("hops must be 1 or 2, got {}", self.hops)));
        }
        if let ThresholdMode::Fixed { tau } = self.threshold {
            if !(0.0..=1.0).contains(&tau) {
                return Err(CoftError::Config(format!("tau must lie in [0, 1], got {tau}")));
            }
        }
        if self.marker.is_empty() || self.marker.chars().any(char::is_whitespace) {
            return Err(CoftError::Config(
                "marker must be non-empty and contain no whitespace".into(),
            ));
        }
        if self.workers == 0 {
            return Err(CoftError::Config("workers must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn vars(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn kg_defaults_to_fixture() {
        assert_eq!(
            KgConfig::from_vars(vars(&[])).unwrap(),
            KgConfig::Fixture { path: None }
        );
    }

    #[test]
    fn kg_live_reads_rps_and_cache() {
        let cfg = KgConfig::from_vars(vars(&[("COFT_KG_MODE", "live"), ("COFT_KG_CACHE", "/tmp/kg.jsonl")])).unwrap();
        assert_eq!(
            cfg,
            KgConfig::Live {
                endpoint: DEFAULT_ENDPOINT.into(),
                cache: Some("/tmp/kg.jsonl".into()),
                rps: 2.0
            }
        );
        assert!(KgConfig::from_vars(vars(&[("COFT_KG_MODE", "live"), ("COFT_KG_RPS", "-1")])).is_err());
        assert!(KgConfig::from_vars(vars(&[("COFT_KG_MODE", "offline")])).is_err());
    }

    #[test]
    fn remote_provider_needs_url() {
        assert!(ProviderConfig::from_vars("remote", None, vars(&[])).is_err());
        let cfg = ProviderConfig::from_vars(
            "remote",
            None,
            vars(&[("COFT_LM_URL", "http://x"), ("COFT_LM_KEY", "k")]),
        )
        .unwrap();
        assert_eq!(
            cfg,
            ProviderConfig::Remote {
                url: "http://x".into(),
                key: Some("k".into()),
                timeout_ms: 30_000
            }
        );
        assert!(ProviderConfig::from_vars("gpt", None, vars(&[])).is_err());
    }

    #[test]
    fn api_key_never_serialized() {
        let cfg = ProviderConfig::Remote {
            url: "http://x".into(),
            key: Some("secret".into()),
            timeout_ms: 5,
        };
        assert!(!serde_json::to_string(&cfg).unwrap().contains("secret"));
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad = PipelineConfig {
            threshold: ThresholdMode::Fixed { tau: 1.5 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineConfig {
            hops: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
