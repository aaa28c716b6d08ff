//! Readers for LETOR ranking files and JSONL embeddings, and run manifests.

use std::hash::Hasher;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingCorpus;
use crate::error::{Error, Result};
use crate::features::RankingDataset;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })
}

/// Parse `<rel> qid:<id> <fid>:<val> ... # comment` lines. Feature ids are
/// 1-based and become 0-based columns; missing ids are 0.0.
pub fn parse_letor_str(text: &str) -> Result<RankingDataset> {
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut qids = Vec::new();
    let mut width = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let mut tokens = body.split_whitespace();
        let rel: u32 = tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| err("relevance must be a nonnegative integer".into()))?;
        let qid = tokens
            .next()
            .and_then(|t| t.strip_prefix("qid:"))
            .filter(|q| !q.is_empty())
            .ok_or_else(|| err("expected qid:<id> after the relevance".into()))?;
        let mut row = Vec::new();
        for t in tokens {
            let (f, v) = t
                .split_once(':')
                .ok_or_else(|| err(format!("bad feature token {t:?}")))?;
            let f: usize = f
                .parse()
                .map_err(|_| err(format!("bad feature id {f:?}")))?;
            if f == 0 {
                return Err(err("feature ids start at 1".into()));
            }
            let v: f64 = v
                .parse()
                .map_err(|_| err(format!("bad feature value {v:?}")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite feature value {v}")));
            }
            width = width.max(f);
            row.push((f - 1, v));
        }
        sparse.push(row);
        labels.push(rel);
        qids.push(qid.to_string());
    }
    if sparse.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let rows = sparse
        .into_iter()
        .map(|row| {
            let mut dense = vec![0.0; width];
            for (c, v) in row {
                dense[c] = v;
            }
            dense
        })
        .collect();
    RankingDataset::new(rows, labels, qids)
}

pub fn parse_letor(path: &Path) -> Result<RankingDataset> {
    parse_letor_str(&read_text(path)?)
}

#[derive(Deserialize)]
struct RecordJson {
    id: String,
    vector: Vec<f64>,
    #[serde(default)]
    label: Option<u8>,
    #[serde(default)]
    relevant_ids: Option<Vec<String>>,
}

fn parse_records(text: &str) -> Result<Vec<(usize, RecordJson)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
        })
        .collect()
}

/// One JSON object per line: `{"id", "vector", "label"?}`. Labels must be
/// present on every record or on none.
pub fn parse_embeddings_str(text: &str) -> Result<EmbeddingCorpus> {
    let records = parse_records(text)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labeled = records[0].1.label.is_some();
    if let Some((line, _)) = records.iter().find(|(_, r)| r.label.is_some() != labeled) {
        return Err(Error::Parse {
            line: *line,
            message: "labels must be given on all records or none".into(),
        });
    }
    if let Some((line, r)) = records.iter().find(|(_, r)| r.label.is_some_and(|l| l > 1)) {
        return Err(Error::Parse {
            line: *line,
            message: format!("label must be 0 or 1, got {}", r.label.unwrap_or(0)),
        });
    }
    let labels = labeled.then(|| records.iter().map(|(_, r)| r.label.unwrap_or(0)).collect());
    let (ids, vectors) = records.into_iter().map(|(_, r)| (r.id, r.vector)).unzip();
    EmbeddingCorpus::new(ids, vectors, labels)
}

pub fn parse_embeddings(path: &Path) -> Result<EmbeddingCorpus> {
    parse_embeddings_str(&read_text(path)?)
}

/// Query embeddings with the ids of their relevant documents.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub relevant_ids: Vec<Vec<String>>,
}

pub fn parse_queries_str(text: &str) -> Result<QuerySet> {
    let records = parse_records(text)?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut q = QuerySet {
        ids: Vec::new(),
        vectors: Vec::new(),
        relevant_ids: Vec::new(),
    };
    let d = records[0].1.vector.len();
    for (line, r) in records {
        if r.vector.len() != d {
            return Err(Error::Shape(format!(
                "line {line}: expected dimension {d}, got {}",
                r.vector.len()
            )));
        }
        q.ids.push(r.id);
        q.vectors.push(r.vector);
        q.relevant_ids.push(r.relevant_ids.unwrap_or_default());
    }
    Ok(q)
}

pub fn parse_queries(path: &Path) -> Result<QuerySet> {
    parse_queries_str(&read_text(path)?)
}

/// 64-bit FNV-1a of `bytes`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub bytes: u64,
    /// Lowercase hex.
    pub fnv1a64: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            bytes: bytes.len() as u64,
            fnv1a64: format!("{:016x}", fnv1a64(&bytes)),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub build_ms: f64,
    pub solve_ms: f64,
    pub eval_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub timings: Timings,
    pub deviations: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        Self {
            tool: "quboml".into(),
            version: VERSION.into(),
            command: command.into(),
            config,
            seed,
            inputs: Vec::new(),
            timings: Timings::default(),
            deviations: Vec::new(),
        }
    }
}
