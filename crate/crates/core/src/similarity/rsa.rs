//! Sliding-window retrieval: the document is cut into windows roughly the
//! size of the query and the best (smallest) edit distance over all windows
//! becomes the document's distance.

use serde::{Deserialize, Serialize};

use super::{levenshtein_by, SimilarityError, SimilarityScore, SymbolSequence, WindowOffset};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsaParams {
    /// Window length in seconds for time-based windows.
    pub window_time: f64,
    /// Window step in seconds.
    pub stride_time: f64,
    /// Window step in notes for note-based windows.
    pub stride_notes: usize,
}

impl Default for RsaParams {
    fn default() -> Self {
        RsaParams {
            window_time: 5.0,
            stride_time: 1.0,
            stride_notes: 1,
        }
    }
}

impl RsaParams {
    pub fn validate(&self) -> Result<(), SimilarityError> {
        if !(self.window_time.is_finite() && self.window_time > 0.0) {
            return Err(SimilarityError::InvalidParams(format!(
                "window time must be positive, got {}",
                self.window_time
            )));
        }
        if !(self.stride_time.is_finite() && self.stride_time > 0.0) {
            return Err(SimilarityError::InvalidParams(format!(
                "stride time must be positive, got {}",
                self.stride_time
            )));
        }
        if self.stride_notes == 0 {
            return Err(SimilarityError::InvalidParams("stride notes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Start offsets (seconds) of the time windows over a document of the given
/// extent. Always at least one window.
pub(crate) fn time_window_offsets(extent: f64, params: &RsaParams) -> impl Iterator<Item = f64> {
    let last = (extent - params.window_time).max(0.0);
    let count = ((last + EPS) / params.stride_time).floor() as usize + 1;
    let stride = params.stride_time;
    (0..count).map(move |k| k as f64 * stride)
}

/// Note-index ranges of the note windows. A document shorter than the
/// window is a single window.
pub(crate) fn note_windows(doc_len: usize, window: usize, stride: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    let count = if doc_len <= window { 1 } else { (doc_len - window) / stride + 1 };
    (0..count).map(move |k| {
        let s = k * stride;
        s..(s + window).min(doc_len)
    })
}

/// Time-windowed edit distance. A symbol belongs to the window containing
/// its onset.
pub fn rsa_time(query: &SymbolSequence, doc: &SymbolSequence, params: &RsaParams) -> Result<SimilarityScore, SimilarityError> {
    params.validate()?;
    let q = query.pitches();
    let onsets: Vec<f64> = doc.symbols().iter().map(|s| s.start).collect();
    let pitches = doc.pitches();

    let mut best = (usize::MAX, 0.0);
    for t in time_window_offsets(doc.end_time(), params) {
        let lo = onsets.partition_point(|&s| s < t - EPS);
        let hi = onsets.partition_point(|&s| s < t + params.window_time - EPS);
        let d = levenshtein_by(&q, &pitches[lo..hi.max(lo)]);
        if d < best.0 {
            best = (d, t);
        }
        if d == 0 {
            break;
        }
    }
    Ok(SimilarityScore::from_distance(
        best.0 as f64,
        q.len() as f64,
        WindowOffset::Seconds(best.1),
    ))
}

/// Note-windowed edit distance; the window is as long as the query.
pub fn rsa_note(query: &SymbolSequence, doc: &SymbolSequence, params: &RsaParams) -> Result<SimilarityScore, SimilarityError> {
    params.validate()?;
    let q = query.pitches();
    let pitches = doc.pitches();
    let mut best = (usize::MAX, 0);
    for w in note_windows(pitches.len(), q.len(), params.stride_notes) {
        let start = w.start;
        let d = levenshtein_by(&q, &pitches[w]);
        if d < best.0 {
            best = (d, start);
        }
        if d == 0 {
            break;
        }
    }
    Ok(SimilarityScore::from_distance(
        best.0 as f64,
        q.len() as f64,
        WindowOffset::Notes(best.1),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::Symbol;

    const DOC: [u8; 6] = [69, 71, 72, 71, 67, 72];

    fn p() -> RsaParams {
        RsaParams::default()
    }

    /// Half-second notes starting at 0.
    fn timed(pitches: &[u8]) -> SymbolSequence {
        SymbolSequence::new(
            pitches
                .iter()
                .enumerate()
                .map(|(i, &pitch)| Symbol {
                    pitch,
                    units: None,
                    start: i as f64 * 0.5,
                    end: (i + 1) as f64 * 0.5,
                })
                .collect(),
        )
    }

    #[test]
    fn note_windows_over_example_document() {
        let d = SymbolSequence::from_pitches(&DOC);
        let s = rsa_note(&SymbolSequence::from_pitches(&[72, 71, 67]), &d, &p()).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.best_window_offset, WindowOffset::Notes(2));

        let s = rsa_note(&SymbolSequence::from_pitches(&[69, 72, 71, 67]), &d, &p()).unwrap();
        assert_eq!(s.raw_distance, 1.0);
        assert_eq!(s.value, 0.75);

        assert_eq!(rsa_note(&d, &d, &p()).unwrap().value, 1.0);
    }

    #[test]
    fn short_document_is_one_window() {
        let ranges: Vec<_> = note_windows(2, 5, 1).collect();
        assert_eq!(ranges, vec![0..2]);
        let ranges: Vec<_> = note_windows(7, 3, 2).collect();
        assert_eq!(ranges, vec![0..3, 2..5, 4..7]);
    }

    #[test]
    fn empty_query_scores_zero() {
        let d = SymbolSequence::from_pitches(&DOC);
        assert_eq!(rsa_note(&SymbolSequence::default(), &d, &p()).unwrap().value, 0.0);
        assert_eq!(rsa_time(&SymbolSequence::default(), &d, &p()).unwrap().value, 0.0);
    }

    #[test]
    fn time_self_match() {
        let d = timed(&[60, 62, 64, 65, 67, 69]);
        let params = RsaParams {
            window_time: d.end_time(),
            ..p()
        };
        let s = rsa_time(&d, &d, &params).unwrap();
        assert_eq!((s.value, s.best_window_offset), (1.0, WindowOffset::Seconds(0.0)));
    }

    #[test]
    fn time_recovers_aligned_clip() {
        // 40 half-second notes = 20 s; the clip [5, 10) is notes 10..20.
        let pitches: Vec<u8> = (0..40).map(|i| 50 + ((i * 7) % 23) as u8).collect();
        let doc = timed(&pitches);
        let clip = SymbolSequence::new(
            doc.symbols()[10..20]
                .iter()
                .map(|s| Symbol {
                    start: s.start - 5.0,
                    end: s.end - 5.0,
                    ..*s
                })
                .collect(),
        );
        let s = rsa_time(&clip, &doc, &p()).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.best_window_offset, WindowOffset::Seconds(5.0));
    }

    #[test]
    fn time_offsets_cover_document() {
        let offsets: Vec<f64> = time_window_offsets(20.0, &p()).collect();
        assert_eq!(offsets.len(), 16);
        assert_eq!(offsets.last(), Some(&15.0));
        let wide = RsaParams { stride_time: 50.0, ..p() };
        assert_eq!(time_window_offsets(20.0, &wide).count(), 1);
        assert_eq!(time_window_offsets(3.0, &p()).count(), 1);
    }

    #[test]
    fn rejects_bad_params() {
        let d = SymbolSequence::from_pitches(&DOC);
        let bad = RsaParams { stride_notes: 0, ..p() };
        assert!(rsa_note(&d, &d, &bad).is_err());
        let bad = RsaParams { window_time: -1.0, ..p() };
        assert!(rsa_time(&d, &d, &bad).is_err());
    }
}
