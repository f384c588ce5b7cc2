//! Seeded piano-like test material: a scale melody in the upper register
//! played slightly ahead of a broken-chord accompaniment and a held bass.
//! The melody lead is what trips up the plain skyline.

use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::midi::{write_smf, Note, NoteSequence, TempoMap, DEFAULT_TICKS_PER_QUARTER};

const MAJOR_STEPS: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];
const MINOR_STEPS: [u8; 7] = [0, 2, 3, 5, 7, 8, 10];
/// Chord roots as scale degrees: I, IV, V, vi.
const PROGRESSION: [usize; 4] = [0, 3, 4, 5];

#[derive(Debug, Clone)]
pub struct SynthPiece {
    pub notes: NoteSequence,
    pub tempo: TempoMap,
    pub bpm: f64,
    pub tonic: u8,
    pub minor: bool,
}

impl SynthPiece {
    pub fn to_smf(&self) -> Vec<u8> {
        write_smf(&self.notes, &self.tempo)
    }
}

struct Scale {
    tonic: u8,
    steps: [u8; 7],
}

impl Scale {
    /// MIDI pitch of a scale degree counted from the tonic in octave 0.
    fn pitch(&self, degree: i32) -> i32 {
        let oct = degree.div_euclid(7);
        i32::from(self.tonic) + 12 * oct + i32::from(self.steps[degree.rem_euclid(7) as usize])
    }

    /// Lowest degree at or above `pitch`.
    fn degree_at_least(&self, pitch: i32) -> i32 {
        let mut d = (pitch - 12) / 12 * 7;
        while self.pitch(d) < pitch {
            d += 1;
        }
        d
    }
}

/// Generates one piece lasting at least `min_duration_s`.
pub fn synth_piece(seed: u64, min_duration_s: f64) -> SynthPiece {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tonic = rng.gen_range(0..12u8);
    let minor = rng.gen_bool(0.35);
    let scale = Scale {
        tonic,
        steps: if minor { MINOR_STEPS } else { MAJOR_STEPS },
    };
    let bpm = f64::from(rng.gen_range(80..=140u32));
    let beat = 60.0 / bpm;
    let origin = 0.05;
    let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-0.004..0.004);

    // Melody register [67, 88], accompaniment [48, 66), bass [36, 48).
    let lo = scale.degree_at_least(67);
    let hi = scale.degree_at_least(89) - 1;
    let mut notes = Vec::new();

    let bars = ((min_duration_s - origin) / (4.0 * beat)).ceil() as usize + 1;
    let total_beats = bars as f64 * 4.0;

    // melody on a grid of half beats
    let mut degree = rng.gen_range(lo..=hi);
    let mut pos = 0.0;
    let mut melody: Vec<(f64, f64, i32, bool)> = Vec::new();
    while pos < total_beats {
        let len = [0.5, 1.0, 1.0, 1.5, 2.0][rng.gen_range(0..5)];
        let len = f64::min(len, total_beats - pos);
        let rest = rng.gen_bool(0.04);
        melody.push((pos, len, degree, rest));
        let step = [-2, -1, -1, 1, 1, 2, 3, -3, 0][rng.gen_range(0..9)];
        degree += step;
        if degree < lo || degree > hi {
            degree -= 2 * step;
        }
        degree = degree.clamp(lo, hi);
        pos += len;
    }
    let mut starts: Vec<f64> = melody
        .iter()
        .map(|&(p, ..)| (origin + p * beat - rng.gen_range(0.010..0.035)).max(0.0))
        .collect();
    starts.push(origin + total_beats * beat);
    for (i, &(_, _, deg, rest)) in melody.iter().enumerate() {
        if rest {
            continue;
        }
        let end = starts[i + 1] - rng.gen_range(0.0..0.008);
        notes.push(Note::new(
            scale.pitch(deg) as u8,
            rng.gen_range(80..=100),
            starts[i],
            end.max(starts[i] + 0.05),
        ));
    }

    for bar in 0..bars {
        let root = PROGRESSION[if bar == 0 { 0 } else { rng.gen_range(0..4) }] as i32;
        let bar_start = origin + bar as f64 * 4.0 * beat;
        let base = scale.degree_at_least(48);
        let chord = [root, root + 4, root + 2, root + 4].map(|d| scale.pitch(base + d));
        for eighth in 0..8 {
            let t = bar_start + eighth as f64 * 0.5 * beat;
            let pitch = chord[eighth % 4].min(65);
            let start = (t + jitter(&mut rng)).max(0.0);
            notes.push(Note::new(
                pitch as u8,
                rng.gen_range(45..=65),
                start,
                t + 0.5 * beat - 0.02,
            ));
        }
        let bass = scale.pitch(scale.degree_at_least(36) + root);
        let bass = if bass >= 48 { bass - 12 } else { bass };
        let start = (bar_start + jitter(&mut rng)).max(0.0);
        notes.push(Note::new(bass as u8, rng.gen_range(50..=70), start, bar_start + 4.0 * beat - 0.03));
    }

    SynthPiece {
        notes: NoteSequence::new(notes),
        tempo: TempoMap::from_bpm(DEFAULT_TICKS_PER_QUARTER, bpm),
        bpm,
        tonic,
        minor,
    }
}

/// Writes `count` pieces as `piece_000.mid`, `piece_001.mid`, ... into `dir`.
/// Piece `i` uses seed `seed + i`.
pub fn write_corpus(dir: &Path, count: usize, seed: u64, min_duration_s: f64) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    (0..count)
        .map(|i| {
            let path = dir.join(format!("piece_{i:03}.mid"));
            std::fs::write(&path, synth_piece(seed.wrapping_add(i as u64), min_duration_s).to_smf())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::melody::{modified_skyline, skyline, stability, Criteria};
    use crate::midi::parse_smf;

    #[test]
    fn deterministic() {
        let a = synth_piece(5, 24.0);
        let b = synth_piece(5, 24.0);
        assert_eq!(a.notes, b.notes);
        assert_ne!(a.notes, synth_piece(6, 24.0).notes);
    }

    #[test]
    fn long_enough_and_valid() {
        for seed in 0..10 {
            let p = synth_piece(seed, 24.0);
            assert!(p.notes.end_time() >= 24.0);
            assert!(p.notes.notes().iter().all(Note::is_valid));
            assert!(!p.notes.is_monophonic());
        }
    }

    #[test]
    fn survives_smf_round_trip() {
        let p = synth_piece(3, 24.0);
        let (back, tempo) = parse_smf(&p.to_smf()).unwrap();
        assert_eq!(back.len(), p.notes.len());
        assert!((tempo.initial_bpm() - p.bpm).abs() < 0.01);
    }

    #[test]
    fn skyline_sees_lead_fragments() {
        let p = synth_piece(9, 24.0);
        let sky = stability(&skyline(&p.notes), 0.05);
        let modi = stability(&modified_skyline(&p.notes, &Criteria::Pitch), 0.05);
        assert!(sky.short_note_count > 0);
        assert!(modi.short_note_count < sky.short_note_count);
    }
}
