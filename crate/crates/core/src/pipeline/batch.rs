//! Line-delimited batch runs over a worker pool.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{InputRecord, OutputRecord, Pipeline, PipelineConfig};
use crate::error::{CoftError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordFailure {
    /// 1-based input line.
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub processed: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub entities_highlighted: usize,
    pub failures: Vec<RecordFailure>,
    pub config: PipelineConfig,
}

/// Builds the pipeline from `config` and runs every record of `input`.
pub fn run_batch(input: &Path, output: &Path, config: &PipelineConfig) -> Result<BatchSummary> {
    let pipeline = Pipeline::new(config.clone())?;
    run_batch_with(&pipeline, input, output)
}

enum Parsed {
    Record(InputRecord),
    Failed(Option<String>, String),
}

fn parse_lines(text: &str) -> Vec<(usize, Parsed)> {
    let mut seen = HashSet::new();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let parsed = match serde_json::from_str::<InputRecord>(line) {
                Err(e) => Parsed::Failed(None, format!("malformed record: {e}")),
                Ok(r) if !seen.insert(r.id.clone()) => {
                    Parsed::Failed(Some(r.id.clone()), format!("duplicate record id {:?}", r.id))
                }
                Ok(r) => Parsed::Record(r),
            };
            (i + 1, parsed)
        })
        .collect()
}

/// Successful records are written in input order; failures are reported
/// in the summary and leave no output line.
pub fn run_batch_with(pipeline: &Pipeline, input: &Path, output: &Path) -> Result<BatchSummary> {
    let text = std::fs::read_to_string(input)?;
    let parsed = parse_lines(&text);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pipeline.config().workers)
        .build()
        .map_err(|e| CoftError::Config(format!("worker pool: {e}")))?;
    let results: Vec<(usize, std::result::Result<OutputRecord, RecordFailure>)> = pool.install(|| {
        parsed
            .into_par_iter()
            .map(|(line, p)| {
                let result = match p {
                    Parsed::Failed(id, error) => Err(RecordFailure { line, id, error }),
                    Parsed::Record(r) => pipeline.run_record(&r).map_err(|e| {
                        log::warn!("line {line}: {e}");
                        RecordFailure {
                            line,
                            id: Some(r.id.clone()),
                            error: e.to_string(),
                        }
                    }),
                };
                (line, result)
            })
            .collect()
    });

    let mut out = BufWriter::new(File::create(output)?);
    let mut summary = BatchSummary {
        processed: results.len(),
        succeeded: 0,
        failed: 0,
        entities_highlighted: 0,
        failures: Vec::new(),
        config: pipeline.config().clone(),
    };
    for (_, result) in results {
        match result {
            Ok(record) => {
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
                summary.succeeded += 1;
                summary.entities_highlighted += record.entities_highlighted;
            }
            Err(failure) => {
                summary.failed += 1;
                summary.failures.push(failure);
            }
        }
    }
    out.flush()?;
    Ok(summary)
}
