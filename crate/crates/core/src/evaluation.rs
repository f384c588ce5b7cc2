//! Retrieval benchmarking: seeded query generation with ground truth and the
//! Recall@K, mean reciprocal rank, margin of discrimination and time-per-query
//! metrics.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::{self, Note, NoteSequence};
use crate::retrieval::{read_midi, Index, Method, Query, RankedResult, RetrievalError, SourceSequence};

/// Cut-offs reported for Recall@K.
pub const RECALL_KS: [usize; 4] = [1, 3, 5, 10];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no document is at least {clip_len} s long")]
    NoLongDocuments { clip_len: f64 },
    #[error("clip length must be positive, got {0}")]
    BadClipLength(f64),
    #[error("method grid is empty")]
    EmptyGrid,
    #[error("query set references unknown document `{0}`")]
    UnknownDocument(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write report: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// A corpus document as raw (clipped) notes, the material queries are cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusDoc {
    pub id: String,
    pub notes: NoteSequence,
    pub duration_s: f64,
    pub file_bpm: Option<f64>,
}

/// Clips each source to `clip_seconds` from its start.
pub fn corpus_from_sources(sources: &[SourceSequence], clip_seconds: f64) -> Vec<CorpusDoc> {
    sources
        .iter()
        .map(|s| {
            let notes = midi::clip(&s.notes, 0.0, clip_seconds).expect("positive clip length");
            CorpusDoc {
                id: s.id.clone(),
                duration_s: notes.end_time(),
                notes,
                file_bpm: s.file_bpm,
            }
        })
        .collect()
}

/// Re-reads every indexed document's source file.
pub fn corpus_from_index(index: &Index) -> Result<Vec<CorpusDoc>, RetrievalError> {
    let clip_seconds = index.build_config.clip_seconds;
    index
        .documents
        .iter()
        .map(|doc| {
            let (notes, bpm) = read_midi(Path::new(&doc.source_path))?;
            let notes = midi::clip(&notes, 0.0, clip_seconds).expect("validated clip length");
            Ok(CorpusDoc {
                id: doc.id.clone(),
                duration_s: notes.end_time(),
                notes,
                file_bpm: Some(bpm),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuery {
    pub query: Query,
    /// Ground truth: the document the clip was cut from.
    pub source_doc_id: String,
    pub start_s: f64,
    pub length_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub seed: u64,
    pub queries: Vec<GeneratedQuery>,
}

impl QuerySet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("query set serializes")
    }

    pub fn from_json(text: &str) -> Result<QuerySet, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Draws `n` documents uniformly with replacement (among those at least
/// `clip_len` long) and cuts a clip starting anywhere in `[0, duration - clip_len]`.
pub fn generate_queries(corpus: &[CorpusDoc], n: usize, clip_len: f64, seed: u64) -> Result<QuerySet, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    if !(clip_len.is_finite() && clip_len > 0.0) {
        return Err(EvalError::BadClipLength(clip_len));
    }
    let eligible: Vec<&CorpusDoc> = corpus.iter().filter(|d| d.duration_s + 1e-9 >= clip_len).collect();
    if eligible.is_empty() {
        return Err(EvalError::NoLongDocuments { clip_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(n);
    for i in 0..n {
        let doc = eligible[rng.gen_range(0..eligible.len())];
        let slack = (doc.duration_s - clip_len).max(0.0);
        let start = rng.gen::<f64>() * slack;
        let notes = midi::clip(&doc.notes, start, start + clip_len).expect("positive clip length");
        queries.push(GeneratedQuery {
            query: Query {
                id: format!("q{i:03}"),
                notes,
                file_bpm: doc.file_bpm,
            },
            source_doc_id: doc.id.clone(),
            start_s: start,
            length_s: clip_len,
        });
    }
    Ok(QuerySet { seed, queries })
}

/// Moves each query note one semitone up or down with probability `prob`.
pub fn perturb_queries(set: &QuerySet, prob: f64, seed: u64) -> QuerySet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = set
        .queries
        .iter()
        .map(|q| {
            let notes: Vec<Note> = q
                .query
                .notes
                .notes()
                .iter()
                .map(|n| {
                    let mut n = *n;
                    if rng.gen_bool(prob.clamp(0.0, 1.0)) {
                        n.pitch = if rng.gen_bool(0.5) {
                            (n.pitch + 1).min(127)
                        } else {
                            n.pitch.saturating_sub(1)
                        };
                    }
                    n
                })
                .collect();
            GeneratedQuery {
                query: Query {
                    notes: NoteSequence::new(notes),
                    ..q.query.clone()
                },
                ..q.clone()
            }
        })
        .collect();
    QuerySet { seed: set.seed, queries }
}

/// Fraction of queries whose ground truth is ranked at or above `k`.
/// `None` ranks (truth missing or query failed) count as misses.
pub fn recall_at_k(ranks: &[Option<usize>], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count() as f64 / ranks.len() as f64
}

/// Mean reciprocal rank of the ground truth; misses contribute 0.
pub fn mrr(ranks: &[Option<usize>]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().map(|r| r.map_or(0.0, |r| 1.0 / r as f64)).sum::<f64>() / ranks.len() as f64
}

/// Truth score minus the best score of any other document. Negative when
/// another document outranks the truth. `None` if the truth is absent or
/// there is no other document.
pub fn margin_of_discrimination(result: &RankedResult, truth: &str) -> Option<f64> {
    let truth_score = result.score_of(truth)?;
    let best_other = result
        .entries
        .iter()
        .find(|e| e.doc_id != truth)
        .map(|e| e.score.value)?;
    Some(truth_score - best_other)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryDetail {
    pub method: String,
    pub extractor: String,
    pub processed: bool,
    pub query_id: String,
    pub truth: String,
    pub rank: Option<usize>,
    pub truth_score: Option<f64>,
    pub margin: Option<f64>,
    pub elapsed_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub extractor: String,
    pub processed: bool,
    pub queries: usize,
    pub failures: usize,
    /// Recall at each of [`RECALL_KS`].
    pub recall: [f64; 4],
    pub mrr: f64,
    /// Mean margin of discrimination in percent.
    pub md_mean: f64,
    pub time_per_query_s: Option<f64>,
}

impl EvalRow {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        RECALL_KS.iter().position(|&x| x == k).map(|i| self.recall[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub details: Vec<QueryDetail>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    /// Threads used to score documents within one query. Timing is only
    /// comparable across runs with the same value; 1 by default.
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { jobs: 1 }
    }
}

/// Runs every query against every method, sequentially per query.
pub fn run_benchmark(index: &Index, queries: &QuerySet, methods: &[Method], opts: BenchOptions) -> Result<EvalReport, EvalError> {
    if methods.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    for q in &queries.queries {
        if !index.documents.iter().any(|d| d.id == q.source_doc_id) {
            return Err(EvalError::UnknownDocument(q.source_doc_id.clone()));
        }
    }
    let extractor = index.build_config.extractor.to_string();
    let processed = index.build_config.process;
    let mut report = EvalReport::default();
    for method in methods {
        let mut details = Vec::with_capacity(queries.queries.len());
        for gq in &queries.queries {
            let truth = gq.source_doc_id.as_str();
            let detail = match index.query(&gq.query, method, opts.jobs.max(1)) {
                Ok(result) => QueryDetail {
                    method: method.to_string(),
                    extractor: extractor.clone(),
                    processed,
                    query_id: gq.query.id.clone(),
                    truth: truth.to_owned(),
                    rank: result.rank_of(truth),
                    truth_score: result.score_of(truth),
                    margin: margin_of_discrimination(&result, truth),
                    elapsed_s: Some(result.elapsed_s),
                    error: None,
                },
                Err(e) => QueryDetail {
                    method: method.to_string(),
                    extractor: extractor.clone(),
                    processed,
                    query_id: gq.query.id.clone(),
                    truth: truth.to_owned(),
                    rank: None,
                    truth_score: None,
                    margin: None,
                    elapsed_s: None,
                    error: Some(e.to_string()),
                },
            };
            details.push(detail);
        }
        report.rows.push(aggregate(method.to_string(), extractor.clone(), processed, &details));
        report.details.extend(details);
    }
    Ok(report)
}

fn aggregate(method: String, extractor: String, processed: bool, details: &[QueryDetail]) -> EvalRow {
    let ranks: Vec<Option<usize>> = details.iter().map(|d| d.rank).collect();
    let margins: Vec<f64> = details.iter().filter_map(|d| d.margin).collect();
    let times: Vec<f64> = details.iter().filter_map(|d| d.elapsed_s).collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    EvalRow {
        method,
        extractor,
        processed,
        queries: details.len(),
        failures: details.iter().filter(|d| d.error.is_some()).count(),
        recall: RECALL_KS.map(|k| recall_at_k(&ranks, k)),
        mrr: mrr(&ranks),
        md_mean: 100.0 * mean(&margins),
        time_per_query_s: Some(mean(&times)),
    }
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
        self.details.extend(other.details);
    }

    /// Drops every wall-clock measurement so reports of repeated runs compare
    /// byte for byte.
    pub fn without_timing(&self) -> EvalReport {
        let mut out = self.clone();
        out.rows.iter_mut().for_each(|r| r.time_per_query_s = None);
        out.details.iter_mut().for_each(|d| d.elapsed_s = None);
        out
    }

    /// One line per row: method, extractor, processed, recall@1,3,5,10, mrr,
    /// md_mean (percent), time_per_query_s.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "extractor",
            "processed",
            "recall@1",
            "recall@3",
            "recall@5",
            "recall@10",
            "mrr",
            "md_mean",
            "time_per_query_s",
        ])?;
        for r in &self.rows {
            let mut rec = vec![
                r.method.clone(),
                r.extractor.clone(),
                if r.processed { "processed" } else { "unprocessed" }.to_owned(),
            ];
            rec.extend(r.recall.iter().map(|x| format!("{x:.4}")));
            rec.push(format!("{:.4}", r.mrr));
            rec.push(format!("{:.2}", r.md_mean));
            rec.push(r.time_per_query_s.map(|t| format!("{t:.6}")).unwrap_or_default());
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| EvalError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::RankedEntry;
    use crate::similarity::{SimilarityScore, WindowOffset};

    fn result(scores: &[(&str, f64)]) -> RankedResult {
        RankedResult {
            query_id: "q".into(),
            method: "m".into(),
            entries: scores
                .iter()
                .map(|&(id, v)| RankedEntry {
                    doc_id: id.into(),
                    score: SimilarityScore {
                        value: v,
                        raw_distance: 0.0,
                        best_window_offset: WindowOffset::Notes(0),
                    },
                })
                .collect(),
            elapsed_s: 0.0,
        }
    }

    #[test]
    fn recall_examples() {
        let ranks = [Some(1), Some(2), Some(1)];
        assert!((recall_at_k(&ranks, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(recall_at_k(&ranks, 2), 1.0);
        let all_first = [Some(1); 5];
        for k in RECALL_KS {
            assert_eq!(recall_at_k(&all_first, k), 1.0);
        }
        assert_eq!(recall_at_k(&[None, Some(1)], 10), 0.5);
    }

    #[test]
    fn mrr_examples() {
        assert!((mrr(&[Some(1), Some(2), Some(4)]) - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!(mrr(&[Some(1), Some(1)]), 1.0);
        assert_eq!(mrr(&[None]), 0.0);
    }

    #[test]
    fn margin_examples() {
        let md = margin_of_discrimination(&result(&[("t", 0.9), ("o", 0.7)]), "t").unwrap();
        assert!((md - 0.2).abs() < 1e-12);
        assert_eq!(margin_of_discrimination(&result(&[("o", 0.8), ("t", 0.8)]), "t"), Some(0.0));
        let md = margin_of_discrimination(&result(&[("o", 0.8), ("t", 0.7)]), "t").unwrap();
        assert!((md + 0.1).abs() < 1e-12);
        assert_eq!(margin_of_discrimination(&result(&[("t", 1.0)]), "t"), None);
        assert_eq!(margin_of_discrimination(&result(&[("o", 1.0)]), "t"), None);
    }

    fn doc(id: &str, duration: f64) -> CorpusDoc {
        let notes = NoteSequence::new(
            (0..(duration * 2.0) as usize)
                .map(|i| Note::new(60 + (i % 12) as u8, 80, i as f64 * 0.5, i as f64 * 0.5 + 0.5))
                .collect(),
        );
        CorpusDoc {
            id: id.into(),
            duration_s: notes.end_time(),
            notes,
            file_bpm: None,
        }
    }

    #[test]
    fn query_generation_is_seeded_and_bounded() {
        let corpus = vec![doc("a", 20.0), doc("b", 20.0), doc("c", 20.0)];
        let a = generate_queries(&corpus, 40, 5.0, 7).unwrap();
        let b = generate_queries(&corpus, 40, 5.0, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.queries.len(), 40);
        assert!(a.queries.iter().all(|q| (0.0..=15.0).contains(&q.start_s)));
        assert!(a.queries.iter().all(|q| q.query.notes.end_time() <= 5.0 + 1e-12));
        assert_ne!(a, generate_queries(&corpus, 40, 5.0, 8).unwrap());
    }

    #[test]
    fn full_length_clip_starts_at_zero() {
        let corpus = vec![doc("a", 20.0)];
        let set = generate_queries(&corpus, 5, 20.0, 1).unwrap();
        assert!(set.queries.iter().all(|q| q.start_s == 0.0));
    }

    #[test]
    fn generation_errors() {
        assert!(matches!(generate_queries(&[], 1, 5.0, 0), Err(EvalError::EmptyCorpus)));
        assert!(matches!(
            generate_queries(&[doc("a", 3.0)], 1, 5.0, 0),
            Err(EvalError::NoLongDocuments { .. })
        ));
        // short documents are never sampled
        let set = generate_queries(&[doc("short", 3.0), doc("long", 20.0)], 20, 5.0, 3).unwrap();
        assert!(set.queries.iter().all(|q| q.source_doc_id == "long"));
    }

    #[test]
    fn perturbation_moves_by_one_semitone() {
        let set = generate_queries(&[doc("a", 20.0)], 10, 5.0, 11).unwrap();
        let noisy = perturb_queries(&set, 0.5, 3);
        let mut changed = 0;
        for (a, b) in set.queries.iter().zip(&noisy.queries) {
            let pa: Vec<i32> = a.query.notes.notes().iter().map(|n| i32::from(n.pitch)).collect();
            let mut pb: Vec<i32> = b.query.notes.notes().iter().map(|n| i32::from(n.pitch)).collect();
            // re-sorting by pitch may reorder; compare multisets of differences per time slot
            let mut pa_sorted = pa.clone();
            pa_sorted.sort();
            pb.sort();
            changed += pa_sorted.iter().zip(&pb).filter(|(x, y)| x != y).count();
            assert_eq!(a.query.notes.len(), b.query.notes.len());
        }
        assert!(changed > 0);
        assert_eq!(perturb_queries(&set, 0.0, 3), set);
    }

    #[test]
    fn csv_layout() {
        let report = EvalReport {
            rows: vec![EvalRow {
                method: "rsa-note:s=1".into(),
                extractor: "modified".into(),
                processed: false,
                queries: 3,
                failures: 0,
                recall: [1.0, 1.0, 1.0, 1.0],
                mrr: 1.0,
                md_mean: 28.5,
                time_per_query_s: Some(0.25),
            }],
            details: vec![],
        };
        let csv = report.to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "method,extractor,processed,recall@1,recall@3,recall@5,recall@10,mrr,md_mean,time_per_query_s"
        );
        assert_eq!(
            lines.next().unwrap(),
            "rsa-note:s=1,modified,unprocessed,1.0000,1.0000,1.0000,1.0000,1.0000,28.50,0.250000"
        );
        assert!(report.without_timing().to_csv().unwrap().ends_with("28.50,\n"));
    }
}
