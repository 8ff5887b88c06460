//! Embedding and label ingestion, the on-disk formats, and the synthetic
//! sphere-mixture generator used in place of real face features.
//!
//! Embeddings are stored as a pair of files: `<name>.meta.json` holding
//! `{"count": n, "dim": d, "payload": "<name>.f32le"}` and the payload itself,
//! `n * d` little-endian `f32` values in row-major order. The payload path is
//! resolved relative to the metadata file.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows closer than this to unit norm are stored verbatim, so that a saved
/// set reloads bit-exactly.
const UNIT_NORM_SLACK: f64 = 4.0 * f32::EPSILON as f64;
const MIN_ROW_NORM: f64 = 1e-12;

/// `n` unit-norm vectors of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingSet {
    /// Builds a set from row-major values, normalizing every row.
    pub fn from_rows(dim: usize, mut data: Vec<f32>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::param(format!("dim must be at least 2, got {dim}")));
        }
        if data.is_empty() {
            return Err(Error::Empty("embedding set"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Inconsistent(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        for (row, chunk) in data.chunks_exact_mut(dim).enumerate() {
            normalize_row(chunk, row)?;
        }
        Ok(Self { dim, data })
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    /// Writes `<stem>.meta.json` and `<stem>.f32le`; returns the metadata path.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<PathBuf> {
        let stem = stem.as_ref();
        let file_name = stem
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::param(format!("bad output stem {}", stem.display())))?;
        let payload_name = format!("{file_name}.f32le");
        let meta_path = stem.with_file_name(format!("{file_name}.meta.json"));
        let payload_path = stem.with_file_name(&payload_name);

        fs::write(&payload_path, encode_payload(&self.data))
            .map_err(|e| Error::io(&payload_path, e))?;
        let meta = EmbeddingMeta {
            count: self.count(),
            dim: self.dim,
            payload: payload_name,
        };
        let mut text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        text.push('\n');
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
        Ok(meta_path)
    }
}

fn normalize_row(row: &mut [f32], index: usize) -> Result<()> {
    let norm = row
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if !norm.is_finite() || norm < MIN_ROW_NORM {
        return Err(Error::ZeroVector { row: index });
    }
    if (norm - 1.0).abs() > UNIT_NORM_SLACK {
        for v in row.iter_mut() {
            *v = (f64::from(*v) / norm) as f32;
        }
    }
    Ok(())
}

/// Contents of `<name>.meta.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingMeta {
    pub count: usize,
    pub dim: usize,
    pub payload: String,
}

pub fn parse_meta(text: &str) -> Result<EmbeddingMeta> {
    let meta: EmbeddingMeta =
        serde_json::from_str(text).map_err(|e| Error::Metadata(e.to_string()))?;
    if meta.count == 0 {
        return Err(Error::Metadata("count must be at least 1".into()));
    }
    if meta.dim < 2 {
        return Err(Error::Metadata("dim must be at least 2".into()));
    }
    if meta.payload.is_empty() {
        return Err(Error::Metadata("payload path is empty".into()));
    }
    Ok(meta)
}

/// Decodes a little-endian `f32` payload of exactly `count * dim` values and
/// normalizes each row.
pub fn decode_payload(bytes: &[u8], count: usize, dim: usize) -> Result<EmbeddingSet> {
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Metadata("count * dim overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::PayloadMismatch {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    EmbeddingSet::from_rows(dim, data)
}

pub fn encode_payload(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn load_embeddings(meta_path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let meta_path = meta_path.as_ref();
    let text = fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta = parse_meta(&text)?;
    let payload_path = match meta_path.parent() {
        Some(dir) => dir.join(&meta.payload),
        None => PathBuf::from(&meta.payload),
    };
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    decode_payload(&bytes, meta.count, meta.dim)
}

/// Identity tokens, one per embedding row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("label set"));
        }
        if let Some(i) = labels.iter().position(|l| l.is_empty()) {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty label".into(),
            });
        }
        Ok(Self { labels })
    }

    pub fn count(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn distinct_count(&self) -> usize {
        self.dense_ids().1
    }

    /// Maps tokens to dense ids in first-occurrence order; returns the ids and
    /// the number of distinct tokens.
    pub fn dense_ids(&self) -> (Vec<usize>, usize) {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let ids = self
            .labels
            .iter()
            .map(|l| {
                let next = index.len();
                *index.entry(l.as_str()).or_insert(next)
            })
            .collect();
        (ids, index.len())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Parses newline-delimited labels. A single trailing newline is allowed;
/// any other empty line is an error naming its 1-based line number.
pub fn parse_labels(text: &str) -> Result<LabelSet> {
    if text.is_empty() {
        return Err(Error::Empty("label file"));
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    let mut labels = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: "empty line".into(),
            });
        }
        labels.push(line.to_owned());
    }
    LabelSet::new(labels)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

/// Parameters of the sphere-mixture generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub identities: usize,
    pub dim: usize,
    pub samples_min: usize,
    pub samples_max: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.identities == 0 {
            return Err(Error::param("identities must be at least 1"));
        }
        if self.dim < 2 {
            return Err(Error::param("dim must be at least 2"));
        }
        if self.samples_min == 0 {
            return Err(Error::param("samples_min must be at least 1"));
        }
        if self.samples_min > self.samples_max {
            return Err(Error::param(format!(
                "samples range {}..{} is empty",
                self.samples_min, self.samples_max
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(
                "noise_sigma must be a nonnegative finite number",
            ));
        }
        Ok(())
    }
}

/// Draws identity centers uniformly on the unit sphere and perturbs each
/// sample with isotropic Gaussian noise before renormalizing.
///
/// The stream comes from ChaCha8 seeded via `seed_from_u64`, which is
/// specified independently of platform and word size.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(EmbeddingSet, LabelSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut center = vec![0.0f64; spec.dim];
    let mut sample = vec![0.0f64; spec.dim];

    for identity in 0..spec.identities {
        loop {
            for c in center.iter_mut() {
                *c = rng.sample(StandardNormal);
            }
            if normalize_f64(&mut center) {
                break;
            }
        }
        let n = rng.random_range(spec.samples_min..=spec.samples_max);
        for _ in 0..n {
            loop {
                for (s, &c) in sample.iter_mut().zip(&center) {
                    let z: f64 = rng.sample(StandardNormal);
                    *s = c + spec.noise_sigma * z;
                }
                if normalize_f64(&mut sample) {
                    break;
                }
            }
            data.extend(sample.iter().map(|&v| v as f32));
            labels.push(identity.to_string());
        }
    }

    Ok((
        EmbeddingSet::from_rows(spec.dim, data)?,
        LabelSet::new(labels)?,
    ))
}

fn normalize_f64(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < MIN_ROW_NORM {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}
