//! Monophonic melody extraction from polyphonic note sequences.
//!
//! [`skyline`] keeps the highest note starting at each onset and truncates it
//! at the next onset. [`modified_skyline`] picks an important note per onset
//! with a pluggable [`Criteria`], then re-resolves every onset against all
//! notes still sounding, so a sustained note interrupted by a less important
//! onset carries on instead of being cut.
//!
//! Onsets closer than [`ONSET_TOLERANCE`] are treated as simultaneous; each
//! output note starts at the earliest onset of its group.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::midi::{Note, NoteSequence};

/// Two onsets within this many seconds count as the same onset.
pub const ONSET_TOLERANCE: f64 = 0.001;

/// Default duration below which a melody note counts as a perturbation.
pub const DEFAULT_SHORT_NOTE_THRESHOLD: f64 = 0.05;

/// Importance score used by [`modified_skyline`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criteria {
    #[default]
    Pitch,
    Velocity,
    /// `pitch_weight * pitch + velocity_weight * velocity`
    Weighted {
        pitch_weight: f64,
        velocity_weight: f64,
    },
}

impl Criteria {
    pub fn score(&self, note: &Note) -> f64 {
        match *self {
            Criteria::Pitch => f64::from(note.pitch),
            Criteria::Velocity => f64::from(note.velocity),
            Criteria::Weighted {
                pitch_weight,
                velocity_weight,
            } => pitch_weight * f64::from(note.pitch) + velocity_weight * f64::from(note.velocity),
        }
    }
}

impl fmt::Display for Criteria {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criteria::Pitch => write!(f, "pitch"),
            Criteria::Velocity => write!(f, "velocity"),
            Criteria::Weighted {
                pitch_weight,
                velocity_weight,
            } => write!(f, "weighted:{pitch_weight},{velocity_weight}"),
        }
    }
}

impl FromStr for Criteria {
    type Err = String;

    /// Accepts `pitch`, `velocity` or `weighted:<a>,<b>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pitch" => Ok(Criteria::Pitch),
            "velocity" => Ok(Criteria::Velocity),
            _ => {
                let args = s
                    .strip_prefix("weighted:")
                    .ok_or_else(|| format!("unknown criteria `{s}` (expected pitch, velocity or weighted:<a>,<b>)"))?;
                let (a, b) = args
                    .split_once(',')
                    .ok_or_else(|| format!("weighted criteria needs two weights, got `{args}`"))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| format!("invalid weight `{v}`"))
                };
                Ok(Criteria::Weighted {
                    pitch_weight: parse(a)?,
                    velocity_weight: parse(b)?,
                })
            }
        }
    }
}

/// Which extractor a pipeline runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    Skyline,
    #[default]
    ModifiedSkyline,
}

impl Extractor {
    pub fn extract(&self, seq: &NoteSequence, criteria: &Criteria) -> NoteSequence {
        match self {
            Extractor::Skyline => skyline(seq),
            Extractor::ModifiedSkyline => modified_skyline(seq, criteria),
        }
    }
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Extractor::Skyline => "skyline",
            Extractor::ModifiedSkyline => "modified",
        })
    }
}

impl FromStr for Extractor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "skyline" => Ok(Extractor::Skyline),
            "modified" | "modified-skyline" | "modified_skyline" => Ok(Extractor::ModifiedSkyline),
            _ => Err(format!("unknown extractor `{s}` (expected skyline or modified)")),
        }
    }
}

/// Index ranges of notes whose onsets fall within [`ONSET_TOLERANCE`] of the
/// first onset of the group.
fn onset_groups(notes: &[Note]) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut i = 0;
    while i < notes.len() {
        let anchor = notes[i].start;
        let mut j = i + 1;
        while j < notes.len() && notes[j].start - anchor <= ONSET_TOLERANCE {
            j += 1;
        }
        groups.push(i..j);
        i = j;
    }
    groups
}

/// Argmax by score; ties go to the higher pitch, then the lower index.
fn best_by(notes: &[Note], candidates: impl Iterator<Item = usize>, score: &impl Fn(&Note) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in candidates {
        let s = score(&notes[i]);
        let better = match best {
            None => true,
            Some((b, bs)) => s > bs || (s == bs && (notes[i].pitch > notes[b].pitch || (notes[i].pitch == notes[b].pitch && i < b))),
        };
        if better {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Highest-pitch note per onset, each truncated at the next onset.
pub fn skyline(seq: &NoteSequence) -> NoteSequence {
    let notes = seq.notes();
    let groups = onset_groups(notes);
    let pitch = |n: &Note| f64::from(n.pitch);
    let mut out = Vec::with_capacity(groups.len());
    for (g, range) in groups.iter().enumerate() {
        let onset = notes[range.start].start;
        let best = best_by(notes, range.clone(), &pitch).expect("groups are non-empty");
        let next_onset = groups.get(g + 1).map(|r| notes[r.start].start);
        let end = next_onset.map_or(notes[best].end, |t| notes[best].end.min(t));
        out.push(Note { start: onset, end, ..notes[best] });
    }
    NoteSequence::new(out)
}

/// Modified skyline with one of the built-in criteria.
pub fn modified_skyline(seq: &NoteSequence, criteria: &Criteria) -> NoteSequence {
    modified_skyline_by(seq, |n| criteria.score(n))
}

/// Modified skyline with an arbitrary importance function.
pub fn modified_skyline_by(seq: &NoteSequence, score: impl Fn(&Note) -> f64) -> NoteSequence {
    let notes = seq.notes();
    let groups = onset_groups(notes);

    // Pass 1: the most important note starting at each onset.
    let important: Vec<(f64, usize)> = groups
        .iter()
        .map(|r| {
            let best = best_by(notes, r.clone(), &score).expect("groups are non-empty");
            (notes[r.start].start, best)
        })
        .collect();

    // Pass 2: re-resolve each onset against everything still sounding.
    let mut out: Vec<Note> = Vec::with_capacity(important.len());
    let mut last_source: Option<usize> = None;
    let mut started = 0;
    let mut active: Vec<usize> = Vec::new();
    for (k, &(onset, important_idx)) in important.iter().enumerate() {
        while started < notes.len() && notes[started].start <= onset + ONSET_TOLERANCE {
            active.push(started);
            started += 1;
        }
        active.retain(|&i| notes[i].end > onset + ONSET_TOLERANCE);
        let chosen = best_by(notes, active.iter().copied(), &score).unwrap_or(important_idx);

        let next_onset = important.get(k + 1).map(|&(t, _)| t);
        let end = next_onset.map_or(notes[chosen].end, |t| notes[chosen].end.min(t));

        match out.last_mut() {
            Some(prev) if last_source == Some(chosen) && prev.end == onset => prev.end = end,
            _ => out.push(Note {
                start: onset,
                end,
                ..notes[chosen]
            }),
        }
        last_source = Some(chosen);
    }
    NoteSequence::new(out)
}

/// Duration statistics of a melody: how even its note lengths are and how
/// many very short notes it contains.
///
/// This is one operational reading of melody stability; lower
/// `duration_cv` and fewer short notes mean a steadier melody.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mean_duration: f64,
    /// Population standard deviation of durations over their mean.
    pub duration_cv: f64,
    pub short_note_count: usize,
    pub note_count: usize,
}

pub fn stability(seq: &NoteSequence, short_threshold: f64) -> StabilityReport {
    let durations: Vec<f64> = seq.notes().iter().map(Note::duration).collect();
    if durations.is_empty() {
        return StabilityReport {
            mean_duration: 0.0,
            duration_cv: 0.0,
            short_note_count: 0,
            note_count: 0,
        };
    }
    let n = durations.len() as f64;
    let mean = durations.iter().sum::<f64>() / n;
    let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    StabilityReport {
        mean_duration: mean,
        duration_cv: cv,
        short_note_count: durations.iter().filter(|&&d| d < short_threshold).count(),
        note_count: durations.len(),
    }
}
