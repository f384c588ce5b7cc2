//! Corpus indexing, index persistence and ranked querying.
//!
//! Every document goes through the same pipeline: clip from the start,
//! extract the melody, optionally normalize tempo and key, then encode.
//! Queries are pushed through the index's own pipeline so that scores are
//! always computed between comparably prepared melodies.
//!
//! # Index file
//!
//! A single JSON object:
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "build_config": { "extractor": "modified_skyline", "criteria": {"kind": "pitch"},
//!                     "process": false, "tempo_source": "estimate", "clip_seconds": 20.0 },
//!   "documents": [ { "id": "...", "source_path": "...", "duration_s": 20.0,
//!                    "meta": { "tempo_bpm": null, "key": null,
//!                              "extractor": "modified_skyline", "processed": false },
//!                    "melody": [ { "pitch": 72, "start": 0.0, "end": 0.5 } ] } ],
//!   "checksum": "<sha256 hex of the compact JSON of [format_version, build_config, documents]>"
//! }
//! ```
//!
//! Processed melodies additionally carry `"units"` on every symbol.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::melody::{Criteria, Extractor};
use crate::midi::{self, NoteSequence, ParseError};
use crate::normalize::{self, Key, Tempo};
use crate::similarity::{
    boolean_similarity, encode_pitch_string, ms_similarity, rsa_note, rsa_time, MsWeights, RsaParams,
    SimilarityError, SimilarityScore, SymbolSequence,
};

/// Current on-disk index format.
pub const FORMAT_VERSION: u32 = 1;

/// Tempo assumed when neither the file nor the estimator provides one.
pub const FALLBACK_BPM: f64 = 120.0;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("melody is empty after extraction")]
    EmptyMelody,
    #[error("no documents could be indexed ({skipped} file(s) skipped)")]
    NoDocuments { skipped: usize },
    #[error("processing mismatch: {0}")]
    ProcessingMismatch(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("index format version {found} is not supported (this build reads up to {supported})")]
    Version { found: u32, supported: u32 },
    #[error("index integrity check failed: {0}")]
    Checksum(String),
    #[error("malformed index: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Where the tempo used for music-unit conversion comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum TempoSource {
    /// Initial tempo of the MIDI file's tempo map.
    File,
    /// Estimated from the melody's inter-onset intervals.
    #[default]
    Estimate,
    Fixed(f64),
}

impl fmt::Display for TempoSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TempoSource::File => write!(f, "file"),
            TempoSource::Estimate => write!(f, "estimate"),
            TempoSource::Fixed(bpm) => write!(f, "fixed:{bpm}"),
        }
    }
}

impl FromStr for TempoSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "file" => Ok(TempoSource::File),
            "estimate" => Ok(TempoSource::Estimate),
            _ => {
                let bpm = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| format!("unknown tempo source `{s}` (expected file, estimate or fixed:<bpm>)"))?;
                Tempo::new(bpm).map_err(|e| e.to_string())?;
                Ok(TempoSource::Fixed(bpm))
            }
        }
    }
}

impl Serialize for TempoSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TempoSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub extractor: Extractor,
    pub criteria: Criteria,
    /// Tempo-normalize durations and transpose to the C reference.
    pub process: bool,
    pub tempo_source: TempoSource,
    /// Documents keep only their first `clip_seconds`.
    pub clip_seconds: f64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            extractor: Extractor::ModifiedSkyline,
            criteria: Criteria::Pitch,
            process: false,
            tempo_source: TempoSource::Estimate,
            clip_seconds: 20.0,
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        if !(self.clip_seconds.is_finite() && self.clip_seconds > 0.0) {
            return Err(RetrievalError::InvalidConfig(format!(
                "clip length must be positive, got {}",
                self.clip_seconds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentMeta {
    pub tempo_bpm: Option<f64>,
    pub key: Option<Key>,
    pub extractor: Extractor,
    pub processed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source_path: String,
    pub duration_s: f64,
    pub meta: DocumentMeta,
    pub melody: SymbolSequence,
}

/// A melody prepared by a build configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedMelody {
    pub melody: SymbolSequence,
    pub tempo_bpm: Option<f64>,
    pub key: Option<Key>,
}

/// Extraction and optional processing of an already clipped note sequence.
pub fn prepare_melody(
    config: &BuildConfig,
    notes: &NoteSequence,
    file_bpm: Option<f64>,
) -> Result<PreparedMelody, RetrievalError> {
    let melody = config.extractor.extract(notes, &config.criteria);
    if melody.is_empty() {
        return Err(RetrievalError::EmptyMelody);
    }
    if !config.process {
        return Ok(PreparedMelody {
            melody: encode_pitch_string(&melody, None)?,
            tempo_bpm: None,
            key: None,
        });
    }
    let bpm = match config.tempo_source {
        TempoSource::File => file_bpm.unwrap_or(FALLBACK_BPM),
        TempoSource::Fixed(bpm) => bpm,
        TempoSource::Estimate => normalize::estimate_tempo(&melody)
            .map(Tempo::bpm)
            .unwrap_or_else(|_| file_bpm.unwrap_or(FALLBACK_BPM)),
    };
    let tempo = Tempo::new(bpm).map_err(|e| RetrievalError::InvalidConfig(e.to_string()))?;
    let key = normalize::detect_key(&melody).map_err(|_| RetrievalError::EmptyMelody)?;
    let transposed = normalize::transpose_to_reference(&melody, key);
    Ok(PreparedMelody {
        melody: encode_pitch_string(&transposed, Some(tempo))?,
        tempo_bpm: Some(bpm),
        key: Some(key),
    })
}

/// A raw source to be indexed.
#[derive(Debug, Clone)]
pub struct SourceSequence {
    pub id: String,
    pub source_path: String,
    pub notes: NoteSequence,
    pub file_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    pub build_config: BuildConfig,
    pub documents: Vec<Document>,
}

/// Reads and parses a MIDI file, returning its notes and initial tempo.
pub fn read_midi(path: &Path) -> Result<(NoteSequence, f64), RetrievalError> {
    let bytes = std::fs::read(path).map_err(|source| RetrievalError::Io {
        path: path.to_owned(),
        source,
    })?;
    let (notes, tempo) = midi::parse_smf(&bytes).map_err(|source| RetrievalError::Parse {
        path: path.to_owned(),
        source,
    })?;
    Ok((notes, tempo.initial_bpm()))
}

fn unique_id(stem: &str, taken: &mut HashSet<String>) -> String {
    let mut id = stem.to_owned();
    let mut n = 2;
    while !taken.insert(id.clone()) {
        id = format!("{stem}-{n}");
        n += 1;
    }
    id
}

/// Parses and indexes MIDI files. Unreadable files and files with an empty
/// melody are reported in the skip list rather than failing the build.
pub fn build_index(paths: &[PathBuf], config: &BuildConfig) -> Result<(Index, Vec<SkippedFile>), RetrievalError> {
    config.validate()?;
    let mut taken = HashSet::new();
    let mut sources = Vec::new();
    let mut skipped = Vec::new();
    for path in paths {
        match read_midi(path) {
            Ok((notes, bpm)) => {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                sources.push(SourceSequence {
                    id: unique_id(&stem, &mut taken),
                    source_path: path.to_string_lossy().into_owned(),
                    notes,
                    file_bpm: Some(bpm),
                });
            }
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push(SkippedFile {
                    path: path.to_string_lossy().into_owned(),
                    reason: e.to_string(),
                });
            }
        }
    }
    let (index, more) = build_index_from_sources(sources, config)?;
    skipped.extend(more);
    if index.documents.is_empty() {
        return Err(RetrievalError::NoDocuments { skipped: skipped.len() });
    }
    Ok((index, skipped))
}

/// Indexes in-memory sequences. Ids must already be unique.
pub fn build_index_from_sources(
    sources: Vec<SourceSequence>,
    config: &BuildConfig,
) -> Result<(Index, Vec<SkippedFile>), RetrievalError> {
    config.validate()?;
    let mut documents = Vec::with_capacity(sources.len());
    let mut skipped = Vec::new();
    for src in sources {
        let clipped = midi::clip(&src.notes, 0.0, config.clip_seconds).expect("clip length validated");
        match prepare_melody(config, &clipped, src.file_bpm) {
            Ok(prepared) => documents.push(Document {
                id: src.id,
                source_path: src.source_path,
                duration_s: clipped.end_time(),
                meta: DocumentMeta {
                    tempo_bpm: prepared.tempo_bpm,
                    key: prepared.key,
                    extractor: config.extractor,
                    processed: config.process,
                },
                melody: prepared.melody,
            }),
            Err(e) => skipped.push(SkippedFile {
                path: src.source_path,
                reason: e.to_string(),
            }),
        }
    }
    if documents.is_empty() {
        return Err(RetrievalError::NoDocuments { skipped: skipped.len() });
    }
    Ok((
        Index {
            build_config: config.clone(),
            documents,
        },
        skipped,
    ))
}

#[derive(Serialize)]
struct ChecksumPayload<'a> {
    format_version: u32,
    build_config: &'a BuildConfig,
    documents: &'a [Document],
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format_version: u32,
    build_config: BuildConfig,
    documents: Vec<Document>,
    checksum: String,
}

fn checksum(format_version: u32, build_config: &BuildConfig, documents: &[Document]) -> String {
    let payload = ChecksumPayload {
        format_version,
        build_config,
        documents,
    };
    let bytes = serde_json::to_vec(&payload).expect("index serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl Index {
    pub fn to_json(&self) -> String {
        let file = IndexFile {
            format_version: FORMAT_VERSION,
            build_config: self.build_config.clone(),
            documents: self.documents.clone(),
            checksum: checksum(FORMAT_VERSION, &self.build_config, &self.documents),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("index serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Index, RetrievalError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| {
            if e.is_eof() {
                RetrievalError::Checksum("file is truncated".into())
            } else {
                RetrievalError::Json(e)
            }
        })?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| RetrievalError::Checksum("missing format_version".into()))?;
        if version != u64::from(FORMAT_VERSION) {
            return Err(RetrievalError::Version {
                found: version.min(u64::from(u32::MAX)) as u32,
                supported: FORMAT_VERSION,
            });
        }
        let file: IndexFile = serde_json::from_value(value)?;
        let expected = checksum(file.format_version, &file.build_config, &file.documents);
        if expected != file.checksum {
            return Err(RetrievalError::Checksum(format!(
                "stored checksum {} does not match content ({expected})",
                file.checksum
            )));
        }
        Ok(Index {
            build_config: file.build_config,
            documents: file.documents,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        std::fs::write(path, self.to_json()).map_err(|source| RetrievalError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Index, RetrievalError> {
        let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
            path: path.to_owned(),
            source,
        })?;
        Index::from_json(&text)
    }

    /// Runs a raw (clipped) note sequence through this index's pipeline and
    /// ranks every document.
    pub fn query(&self, query: &Query, method: &Method, jobs: usize) -> Result<RankedResult, RetrievalError> {
        let started = Instant::now();
        let prepared = prepare_melody(&self.build_config, &query.notes, query.file_bpm)?;
        let mut result = self.rank(&query.id, &prepared.melody, method, jobs)?;
        result.elapsed_s = started.elapsed().as_secs_f64();
        Ok(result)
    }

    /// Ranks every document against an already encoded query melody. The
    /// melody must have been prepared the same way as the index.
    pub fn query_encoded(
        &self,
        query_id: &str,
        melody: &SymbolSequence,
        method: &Method,
        jobs: usize,
    ) -> Result<RankedResult, RetrievalError> {
        let started = Instant::now();
        let mut result = self.rank(query_id, melody, method, jobs)?;
        result.elapsed_s = started.elapsed().as_secs_f64();
        Ok(result)
    }

    fn rank(&self, query_id: &str, melody: &SymbolSequence, method: &Method, jobs: usize) -> Result<RankedResult, RetrievalError> {
        if melody.is_empty() {
            return Err(RetrievalError::EmptyMelody);
        }
        if melody.has_durations() != self.build_config.process {
            return Err(RetrievalError::ProcessingMismatch(if self.build_config.process {
                "index is processed but the query melody carries no music-unit durations".into()
            } else {
                "query melody is processed but the index is not".into()
            }));
        }
        if method.requires_processing() && !self.build_config.process {
            return Err(RetrievalError::ProcessingMismatch(format!(
                "{} needs durations in music units; rebuild the index with processing enabled",
                method.name()
            )));
        }
        method.validate()?;

        let score = |doc: &Document| method.score(melody, &doc.melody).map(|s| (doc.id.clone(), s));
        let scored: Result<Vec<_>, _> = if jobs > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| RetrievalError::InvalidConfig(e.to_string()))?;
            pool.install(|| self.documents.par_iter().map(score).collect())
        } else {
            self.documents.iter().map(score).collect()
        };
        let mut entries: Vec<RankedEntry> = scored?
            .into_iter()
            .map(|(doc_id, score)| RankedEntry { doc_id, score })
            .collect();
        entries.sort_by(|a, b| b.score.value.total_cmp(&a.score.value).then_with(|| a.doc_id.cmp(&b.doc_id)));
        Ok(RankedResult {
            query_id: query_id.to_owned(),
            method: method.to_string(),
            entries,
            elapsed_s: 0.0,
        })
    }
}

/// A query as played: clipped notes plus the tempo of the file it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub notes: NoteSequence,
    pub file_bpm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Boolean,
    RsaTime(RsaParams),
    RsaNote(RsaParams),
    MongeauSankoff { params: RsaParams, weights: MsWeights },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Boolean => "boolean",
            Method::RsaTime(_) => "rsa-time",
            Method::RsaNote(_) => "rsa-note",
            Method::MongeauSankoff { .. } => "mongeau-sankoff",
        }
    }

    /// Builds a method by name with shared window parameters.
    pub fn from_name(name: &str, params: RsaParams, weights: MsWeights) -> Result<Method, String> {
        match name {
            "boolean" => Ok(Method::Boolean),
            "rsa-time" => Ok(Method::RsaTime(params)),
            "rsa-note" => Ok(Method::RsaNote(params)),
            "mongeau-sankoff" => Ok(Method::MongeauSankoff { params, weights }),
            _ => Err(format!(
                "unknown method `{name}` (expected boolean, rsa-time, rsa-note or mongeau-sankoff)"
            )),
        }
    }

    pub fn requires_processing(&self) -> bool {
        matches!(self, Method::MongeauSankoff { .. })
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        match self {
            Method::Boolean => Ok(()),
            Method::RsaTime(p) | Method::RsaNote(p) => p.validate(),
            Method::MongeauSankoff { params, weights } => {
                params.validate()?;
                weights.validate()
            }
        }
    }

    pub fn score(&self, query: &SymbolSequence, doc: &SymbolSequence) -> Result<SimilarityScore, SimilarityError> {
        match self {
            Method::Boolean => Ok(boolean_similarity(query, doc)),
            Method::RsaTime(p) => rsa_time(query, doc, p),
            Method::RsaNote(p) => rsa_note(query, doc, p),
            Method::MongeauSankoff { params, weights } => ms_similarity(query, doc, weights, params),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Boolean => write!(f, "boolean"),
            Method::RsaTime(p) => write!(f, "rsa-time:w={}:s={}", p.window_time, p.stride_time),
            Method::RsaNote(p) => write!(f, "rsa-note:s={}", p.stride_notes),
            Method::MongeauSankoff { params, weights } => {
                write!(f, "mongeau-sankoff:s={}:k={}", params.stride_notes, weights.max_span)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: SimilarityScore,
}

/// Every document, best first; equal scores are ordered by document id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub query_id: String,
    pub method: String,
    pub entries: Vec<RankedEntry>,
    pub elapsed_s: f64,
}

impl RankedResult {
    /// 1-based rank of a document.
    pub fn rank_of(&self, doc_id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.doc_id == doc_id).map(|i| i + 1)
    }

    pub fn score_of(&self, doc_id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.doc_id == doc_id).map(|e| e.score.value)
    }
}
