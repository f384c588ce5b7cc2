//! Tempo and key normalization of melodies.
//!
//! Durations are converted from seconds to metrical units through the song
//! tempo, and melodies are transposed so that major keys land on C major and
//! minor keys on C minor.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::midi::NoteSequence;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NormalizeError {
    #[error("tempo estimation needs at least two distinct onsets")]
    TooFewOnsets,
    #[error("key detection needs a non-empty sequence")]
    EmptySequence,
    #[error("tempo must be positive and finite, got {0}")]
    InvalidTempo(f64),
}

/// Beats per minute.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tempo(f64);

impl Tempo {
    pub const MIN_BPM: f64 = 20.0;
    pub const MAX_BPM: f64 = 300.0;

    pub fn new(bpm: f64) -> Result<Self, NormalizeError> {
        if bpm.is_finite() && bpm > 0.0 {
            Ok(Tempo(bpm))
        } else {
            Err(NormalizeError::InvalidTempo(bpm))
        }
    }

    pub fn bpm(self) -> f64 {
        self.0
    }
}

/// Metrical duration in basic units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MusicUnits(pub f64);

/// `(4 * bpm / 15) * seconds`.
pub fn duration_to_units(seconds: f64, tempo: Tempo) -> MusicUnits {
    MusicUnits(4.0 * tempo.bpm() / 15.0 * seconds)
}

/// Anything that can guess a single global tempo for a short clip.
pub trait TempoEstimator {
    fn estimate(&self, seq: &NoteSequence) -> Result<Tempo, NormalizeError>;
}

/// Modal inter-onset interval, octave-folded into `[fold_low, fold_high)` BPM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IoiHistogram {
    /// Histogram bin width in seconds.
    pub bin_width: f64,
    /// Intervals shorter than this are ignored.
    pub min_ioi: f64,
    pub fold_low: f64,
    pub fold_high: f64,
}

impl Default for IoiHistogram {
    fn default() -> Self {
        IoiHistogram {
            bin_width: 0.01,
            min_ioi: 0.05,
            fold_low: 60.0,
            fold_high: 200.0,
        }
    }
}

impl TempoEstimator for IoiHistogram {
    fn estimate(&self, seq: &NoteSequence) -> Result<Tempo, NormalizeError> {
        let mut onsets: Vec<f64> = seq.notes().iter().map(|n| n.start).collect();
        onsets.dedup_by(|b, a| (*b - *a).abs() < 1e-9);
        let iois: Vec<f64> = onsets
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&d| d >= self.min_ioi)
            .collect();
        if iois.is_empty() {
            return Err(NormalizeError::TooFewOnsets);
        }

        // bin -> (count, sum)
        let mut bins: std::collections::BTreeMap<i64, (usize, f64)> = Default::default();
        for &d in &iois {
            let entry = bins.entry((d / self.bin_width).round() as i64).or_default();
            entry.0 += 1;
            entry.1 += d;
        }
        // Highest count wins; ties go to the shorter interval.
        let (_, &(count, sum)) = bins
            .iter()
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(a.0)))
            .expect("non-empty histogram");
        let period = sum / count as f64;

        let mut bpm = 60.0 / period;
        while bpm >= self.fold_high {
            bpm /= 2.0;
        }
        while bpm < self.fold_low {
            bpm *= 2.0;
        }
        Tempo::new(bpm.clamp(Tempo::MIN_BPM, Tempo::MAX_BPM))
    }
}

/// Estimates tempo with the default [`IoiHistogram`] estimator.
pub fn estimate_tempo(seq: &NoteSequence) -> Result<Tempo, NormalizeError> {
    IoiHistogram::default().estimate(seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Major,
    Minor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Key {
    /// Pitch class 0-11, 0 = C.
    pub tonic: u8,
    pub mode: Mode,
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; 12] = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"];
        let mode = match self.mode {
            Mode::Major => "maj",
            Mode::Minor => "min",
        };
        write!(f, "{}{}", NAMES[usize::from(self.tonic % 12)], mode)
    }
}

/// Krumhansl-Kessler probe-tone profiles, tonic first.
pub const MAJOR_PROFILE: [f64; 12] = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88];
pub const MINOR_PROFILE: [f64; 12] = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17];

fn pearson(x: &[f64; 12], y: &[f64; 12]) -> f64 {
    let mx = x.iter().sum::<f64>() / 12.0;
    let my = y.iter().sum::<f64>() / 12.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..12 {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let denom = (sxx * syy).sqrt();
    if denom > 0.0 {
        sxy / denom
    } else {
        0.0
    }
}

/// Duration-weighted pitch-class histogram.
pub fn pitch_class_histogram(seq: &NoteSequence) -> [f64; 12] {
    let mut hist = [0.0; 12];
    for n in seq.notes() {
        hist[usize::from(n.pitch % 12)] += n.duration();
    }
    hist
}

/// Krumhansl-Schmuckler key finding over the duration-weighted pitch-class
/// histogram. Ties resolve to the lower tonic, then major.
pub fn detect_key(seq: &NoteSequence) -> Result<Key, NormalizeError> {
    if seq.is_empty() {
        return Err(NormalizeError::EmptySequence);
    }
    let hist = pitch_class_histogram(seq);
    let mut best: Option<(Key, f64)> = None;
    for tonic in 0..12u8 {
        for (mode, profile) in [(Mode::Major, &MAJOR_PROFILE), (Mode::Minor, &MINOR_PROFILE)] {
            let mut rotated = [0.0; 12];
            for (pc, slot) in rotated.iter_mut().enumerate() {
                *slot = profile[(pc + 12 - usize::from(tonic)) % 12];
            }
            let r = pearson(&hist, &rotated);
            if best.is_none_or(|(_, br)| r > br) {
                best = Some((Key { tonic, mode }, r));
            }
        }
    }
    Ok(best.expect("24 candidates").0)
}

/// Semitone shift that moves `key` onto C, chosen within `[-6, 5]`.
pub fn reference_shift(key: Key) -> i32 {
    let t = i32::from(key.tonic % 12);
    if t > 6 {
        12 - t
    } else {
        -t
    }
}

/// Transposes so the tonic becomes C; the mode is kept. Pitches that would
/// leave the MIDI range are moved by octaves back inside it.
pub fn transpose_to_reference(seq: &NoteSequence, key: Key) -> NoteSequence {
    let shift = reference_shift(key);
    seq.map_pitches(|p| {
        let mut q = i32::from(p) + shift;
        while q < 0 {
            q += 12;
        }
        while q > 127 {
            q -= 12;
        }
        q as u8
    })
}
