//! Sequence matching over encoded melodies.
//!
//! Melodies are encoded as [`SymbolSequence`]s, one symbol per note. Four
//! matchers are provided: exact substring search ([`boolean_match`]), the
//! time-windowed and note-windowed sliding edit distance ([`rsa_time`],
//! [`rsa_note`]) and a weighted edit distance with consolidation and
//! fragmentation ([`mongeau_sankoff`], windowed by [`ms_similarity`]).

mod levenshtein;
mod mongeau_sankoff;
mod rsa;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::NoteSequence;
use crate::normalize::{duration_to_units, MusicUnits, Tempo};

pub use levenshtein::{levenshtein, levenshtein_by};
pub use mongeau_sankoff::{mongeau_sankoff, ms_similarity, MsWeights};
pub use rsa::{rsa_note, rsa_time, RsaParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("melody is polyphonic; run melody extraction before encoding")]
    Polyphonic,
    #[error("sequence has no music-unit durations; enable processing (tempo normalization) first")]
    MissingDurations,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// One melody note as seen by the matchers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Symbol {
    pub pitch: u8,
    /// Present only for processed melodies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<MusicUnits>,
    pub start: f64,
    pub end: f64,
}

/// A monophonic melody encoded one symbol per note, in time order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SymbolSequence {
    symbols: Vec<Symbol>,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        SymbolSequence { symbols }
    }

    /// Symbols from bare pitches, one second apart, without durations.
    pub fn from_pitches(pitches: &[u8]) -> Self {
        SymbolSequence::new(
            pitches
                .iter()
                .enumerate()
                .map(|(i, &pitch)| Symbol {
                    pitch,
                    units: None,
                    start: i as f64,
                    end: i as f64 + 1.0,
                })
                .collect(),
        )
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn pitches(&self) -> Vec<u8> {
        self.symbols.iter().map(|s| s.pitch).collect()
    }

    /// True when every symbol carries a music-unit duration. Empty sequences
    /// count as processed only vacuously, so callers that care check length too.
    pub fn has_durations(&self) -> bool {
        self.symbols.iter().all(|s| s.units.is_some())
    }

    /// Latest symbol release, or 0 when empty.
    pub fn end_time(&self) -> f64 {
        self.symbols.iter().map(|s| s.end).fold(0.0, f64::max)
    }
}

/// Encodes a monophonic melody. With a tempo, each symbol also carries its
/// duration in music units.
pub fn encode_pitch_string(seq: &NoteSequence, tempo: Option<Tempo>) -> Result<SymbolSequence, SimilarityError> {
    if !seq.is_monophonic() {
        return Err(SimilarityError::Polyphonic);
    }
    Ok(SymbolSequence::new(
        seq.notes()
            .iter()
            .map(|n| Symbol {
                pitch: n.pitch,
                units: tempo.map(|t| duration_to_units(n.duration(), t)),
                start: n.start,
                end: n.end,
            })
            .collect(),
    ))
}

/// Where the best-matching window was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", content = "at", rename_all = "snake_case")]
pub enum WindowOffset {
    Seconds(f64),
    Notes(usize),
}

impl fmt::Display for WindowOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowOffset::Seconds(s) => write!(f, "{s:.2}s"),
            WindowOffset::Notes(n) => write!(f, "note {n}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    /// `1 - raw_distance / normalizer`, clamped to `[0, 1]`.
    pub value: f64,
    pub raw_distance: f64,
    pub best_window_offset: WindowOffset,
}

impl SimilarityScore {
    pub(crate) fn from_distance(distance: f64, normalizer: f64, offset: WindowOffset) -> Self {
        let value = if normalizer > 0.0 {
            (1.0 - distance / normalizer).clamp(0.0, 1.0)
        } else {
            0.0
        };
        SimilarityScore {
            value,
            raw_distance: distance,
            best_window_offset: offset,
        }
    }
}

/// True when the query's pitches occur contiguously in the document.
pub fn boolean_match(query: &SymbolSequence, doc: &SymbolSequence) -> bool {
    let q = query.pitches();
    if q.is_empty() {
        return true;
    }
    let d = doc.pitches();
    d.windows(q.len()).any(|w| w == q.as_slice())
}

/// [`boolean_match`] as a score: 1 on a match, 0 otherwise.
pub fn boolean_similarity(query: &SymbolSequence, doc: &SymbolSequence) -> SimilarityScore {
    let q = query.pitches();
    if q.is_empty() {
        return SimilarityScore::from_distance(0.0, 0.0, WindowOffset::Notes(0));
    }
    let at = doc.pitches().windows(q.len()).position(|w| w == q.as_slice());
    match at {
        Some(i) => SimilarityScore::from_distance(0.0, q.len() as f64, WindowOffset::Notes(i)),
        None => SimilarityScore::from_distance(q.len() as f64, q.len() as f64, WindowOffset::Notes(0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::midi::Note;

    // A B C B G C as MIDI pitches.
    pub(crate) const DOC: [u8; 6] = [69, 71, 72, 71, 67, 72];

    #[test]
    fn encode_examples() {
        assert!(encode_pitch_string(&NoteSequence::empty(), None).unwrap().is_empty());
        let mel = NoteSequence::new(vec![
            Note::new(60, 64, 0.0, 0.5),
            Note::new(64, 64, 0.5, 1.0),
            Note::new(67, 64, 1.0, 1.5),
        ]);
        let enc = encode_pitch_string(&mel, None).unwrap();
        assert_eq!(enc.pitches(), vec![60, 64, 67]);
        assert!(enc.symbols().iter().all(|s| s.units.is_none()));

        let processed = encode_pitch_string(&mel, Some(Tempo::new(120.0).unwrap())).unwrap();
        assert_eq!(processed.symbols()[0].units, Some(MusicUnits(16.0)));
    }

    #[test]
    fn encode_rejects_polyphony() {
        let chord = NoteSequence::new(vec![Note::new(60, 64, 0.0, 1.0), Note::new(64, 64, 0.0, 1.0)]);
        assert_eq!(encode_pitch_string(&chord, None), Err(SimilarityError::Polyphonic));
    }

    #[test]
    fn boolean_examples() {
        let d = SymbolSequence::from_pitches(&DOC);
        assert!(boolean_match(&SymbolSequence::from_pitches(&[72, 71, 67]), &d));
        assert!(!boolean_match(&SymbolSequence::from_pitches(&[69, 72, 71, 67]), &d));
        assert!(boolean_match(&SymbolSequence::default(), &d));
        let s = boolean_similarity(&SymbolSequence::from_pitches(&[72, 71, 67]), &d);
        assert_eq!((s.value, s.best_window_offset), (1.0, WindowOffset::Notes(2)));
    }
}
