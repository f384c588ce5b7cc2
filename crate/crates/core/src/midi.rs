//! Standard MIDI File reading and writing, plus the note model shared by
//! every other module.
//!
//! Formats 0 and 1 are read; output is always format 0. SMPTE time division
//! and format 2 are rejected.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tempo when a file carries no set-tempo event (120 BPM).
pub const DEFAULT_US_PER_QUARTER: u32 = 500_000;

/// Division used by [`TempoMap::default`] and for newly written files.
pub const DEFAULT_TICKS_PER_QUARTER: u16 = 480;

/// One sounded pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    pub velocity: u8,
    /// Onset in seconds.
    pub start: f64,
    /// Release in seconds.
    pub end: f64,
}

impl Note {
    pub fn new(pitch: u8, velocity: u8, start: f64, end: f64) -> Self {
        Note {
            pitch,
            velocity,
            start,
            end,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Checks the pitch, velocity and timing invariants.
    pub fn is_valid(&self) -> bool {
        self.pitch <= 127
            && (1..=127).contains(&self.velocity)
            && self.start.is_finite()
            && self.end.is_finite()
            && self.start >= 0.0
            && self.end > self.start
    }
}

/// Time-ordered notes, sorted by `(start, pitch)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoteSequence {
    notes: Vec<Note>,
    monophonic: bool,
}

impl NoteSequence {
    /// Sorts `notes` and records whether the result is monophonic.
    pub fn new(mut notes: Vec<Note>) -> Self {
        notes.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then(a.pitch.cmp(&b.pitch))
                .then(a.end.total_cmp(&b.end))
                .then(a.velocity.cmp(&b.velocity))
        });
        let monophonic = notes.windows(2).all(|w| w[0].end <= w[1].start);
        NoteSequence { notes, monophonic }
    }

    pub fn empty() -> Self {
        NoteSequence {
            notes: Vec::new(),
            monophonic: true,
        }
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn into_notes(self) -> Vec<Note> {
        self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn is_monophonic(&self) -> bool {
        self.monophonic
    }

    /// Latest note release, or 0 for an empty sequence.
    pub fn end_time(&self) -> f64 {
        self.notes.iter().map(|n| n.end).fold(0.0, f64::max)
    }

    /// Returns a copy with every pitch mapped through `f`.
    pub fn map_pitches(&self, mut f: impl FnMut(u8) -> u8) -> NoteSequence {
        NoteSequence::new(
            self.notes
                .iter()
                .map(|n| Note {
                    pitch: f(n.pitch),
                    ..*n
                })
                .collect(),
        )
    }
}

/// Piecewise-constant tempo in tick space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempoMap {
    pub ticks_per_quarter: u16,
    /// `(tick, microseconds per quarter)`, sorted by tick, first entry at tick 0.
    pub segments: Vec<(u64, u32)>,
}

impl Default for TempoMap {
    fn default() -> Self {
        TempoMap::constant(DEFAULT_TICKS_PER_QUARTER, DEFAULT_US_PER_QUARTER)
    }
}

impl TempoMap {
    pub fn constant(ticks_per_quarter: u16, us_per_quarter: u32) -> Self {
        TempoMap {
            ticks_per_quarter,
            segments: vec![(0, us_per_quarter)],
        }
    }

    pub fn from_bpm(ticks_per_quarter: u16, bpm: f64) -> Self {
        TempoMap::constant(ticks_per_quarter, (60_000_000.0 / bpm).round() as u32)
    }

    /// Builds a map from raw tempo events; later events at the same tick win.
    fn from_events(ticks_per_quarter: u16, mut events: Vec<(u64, u32)>) -> Self {
        events.sort_by_key(|&(tick, _)| tick);
        let mut segments: Vec<(u64, u32)> = vec![(0, DEFAULT_US_PER_QUARTER)];
        for (tick, us) in events {
            match segments.last_mut() {
                Some(last) if last.0 == tick => last.1 = us,
                _ => segments.push((tick, us)),
            }
        }
        TempoMap {
            ticks_per_quarter,
            segments,
        }
    }

    /// Tempo of the first segment in beats per minute.
    pub fn initial_bpm(&self) -> f64 {
        60_000_000.0 / f64::from(self.segments[0].1)
    }

    fn seconds_per_tick(&self, us_per_quarter: u32) -> f64 {
        f64::from(us_per_quarter) / 1e6 / f64::from(self.ticks_per_quarter.max(1))
    }

    pub fn tick_to_seconds(&self, tick: u64) -> f64 {
        let mut seconds = 0.0;
        for (i, &(seg_tick, us)) in self.segments.iter().enumerate() {
            let seg_end = self.segments.get(i + 1).map(|s| s.0).unwrap_or(u64::MAX);
            if tick <= seg_tick {
                break;
            }
            let span = tick.min(seg_end) - seg_tick;
            seconds += span as f64 * f64::from(us) / (1e6 * f64::from(self.ticks_per_quarter.max(1)));
        }
        seconds
    }

    /// Nearest tick for a time in seconds.
    pub fn seconds_to_tick(&self, seconds: f64) -> u64 {
        let mut elapsed = 0.0;
        for (i, &(seg_tick, us)) in self.segments.iter().enumerate() {
            let spt = self.seconds_per_tick(us);
            match self.segments.get(i + 1) {
                Some(&(next_tick, _)) => {
                    let seg_seconds = (next_tick - seg_tick) as f64 * spt;
                    if seconds < elapsed + seg_seconds {
                        return seg_tick + ((seconds - elapsed) / spt).round() as u64;
                    }
                    elapsed += seg_seconds;
                }
                None => return seg_tick + ((seconds - elapsed).max(0.0) / spt).round() as u64,
            }
        }
        unreachable!("tempo map has at least one segment")
    }

    /// Duration of one tick at the given time.
    pub fn tick_seconds_at(&self, seconds: f64) -> f64 {
        let tick = self.seconds_to_tick(seconds);
        let us = self
            .segments
            .iter()
            .rev()
            .find(|s| s.0 <= tick)
            .map(|s| s.1)
            .unwrap_or(DEFAULT_US_PER_QUARTER);
        self.seconds_per_tick(us)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MissingHeader,
    BadHeaderLength(u32),
    UnsupportedFormat(u16),
    SmpteDivision,
    ZeroDivision,
    Truncated,
    MissingTracks { expected: u16, found: u16 },
    VarLenTooLong,
    NoRunningStatus,
    BadDataByte(u8),
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::MissingHeader => write!(f, "missing MThd header"),
            ParseErrorKind::BadHeaderLength(n) => write!(f, "header length {n} is shorter than 6"),
            ParseErrorKind::UnsupportedFormat(n) => write!(f, "unsupported SMF format {n}"),
            ParseErrorKind::SmpteDivision => write!(f, "SMPTE time division is not supported"),
            ParseErrorKind::ZeroDivision => write!(f, "ticks per quarter note is zero"),
            ParseErrorKind::Truncated => write!(f, "unexpected end of data"),
            ParseErrorKind::MissingTracks { expected, found } => {
                write!(f, "header declares {expected} tracks, found {found}")
            }
            ParseErrorKind::VarLenTooLong => write!(f, "variable-length quantity exceeds 4 bytes"),
            ParseErrorKind::NoRunningStatus => write!(f, "data byte with no running status"),
            ParseErrorKind::BadDataByte(b) => write!(f, "status byte 0x{b:02X} where data was expected"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("MIDI parse error at byte {offset}: {kind}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClipError {
    #[error("clip window [{start}, {end}) is empty or inverted")]
    InvertedRange { start: f64, end: f64 },
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: ParseErrorKind) -> ParseError {
        ParseError {
            offset: self.pos,
            kind,
        }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        if self.remaining() < n {
            return Err(self.err(ParseErrorKind::Truncated));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, ParseError> {
        Ok(self.take(1)?[0])
    }

    fn peek(&self) -> Result<u8, ParseError> {
        self.data
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err(ParseErrorKind::Truncated))
    }

    fn u32(&mut self) -> Result<u32, ParseError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varlen(&mut self) -> Result<u32, ParseError> {
        let start = self.pos;
        let mut value: u32 = 0;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | u32::from(b & 0x7F);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(ParseError {
            offset: start,
            kind: ParseErrorKind::VarLenTooLong,
        })
    }

    fn data_byte(&mut self) -> Result<u8, ParseError> {
        let b = self.peek()?;
        if b & 0x80 != 0 {
            return Err(self.err(ParseErrorKind::BadDataByte(b)));
        }
        self.pos += 1;
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy)]
struct TickNote {
    pitch: u8,
    velocity: u8,
    start: u64,
    end: u64,
}

struct TrackEvents {
    notes: Vec<TickNote>,
    tempos: Vec<(u64, u32)>,
}

/// Parses a Standard MIDI File. All tracks are merged into one sequence with
/// times resolved through the file's tempo map.
pub fn parse_smf(bytes: &[u8]) -> Result<(NoteSequence, TempoMap), ParseError> {
    let mut r = Reader { data: bytes, pos: 0 };
    if r.remaining() < 4 || &bytes[..4] != b"MThd" {
        return Err(r.err(ParseErrorKind::MissingHeader));
    }
    r.pos = 4;
    let header_len_at = r.pos;
    let header_len = r.u32()?;
    if header_len < 6 {
        return Err(ParseError {
            offset: header_len_at,
            kind: ParseErrorKind::BadHeaderLength(header_len),
        });
    }
    let header = r.take(header_len as usize)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(ParseError {
            offset: 8,
            kind: ParseErrorKind::UnsupportedFormat(format),
        });
    }
    if division & 0x8000 != 0 {
        return Err(ParseError {
            offset: 12,
            kind: ParseErrorKind::SmpteDivision,
        });
    }
    if division == 0 {
        return Err(ParseError {
            offset: 12,
            kind: ParseErrorKind::ZeroDivision,
        });
    }

    let mut tick_notes = Vec::new();
    let mut tempo_events = Vec::new();
    let mut found: u16 = 0;
    while found < ntracks {
        if r.remaining() == 0 {
            return Err(r.err(ParseErrorKind::MissingTracks {
                expected: ntracks,
                found,
            }));
        }
        let id = r.take(4)?;
        let len = r.u32()? as usize;
        let body_at = r.pos;
        let body = r.take(len)?;
        if id != b"MTrk" {
            // Unknown chunk types are skipped.
            continue;
        }
        let track = parse_track(body, body_at)?;
        tick_notes.extend(track.notes);
        tempo_events.extend(track.tempos);
        found += 1;
    }

    let tempo = TempoMap::from_events(division, tempo_events);
    let notes = tick_notes
        .into_iter()
        .filter(|n| n.end > n.start)
        .map(|n| {
            Note::new(
                n.pitch,
                n.velocity,
                tempo.tick_to_seconds(n.start),
                tempo.tick_to_seconds(n.end),
            )
        })
        .filter(Note::is_valid)
        .collect();
    Ok((NoteSequence::new(notes), tempo))
}

fn parse_track(body: &[u8], base: usize) -> Result<TrackEvents, ParseError> {
    let mut r = Reader { data: body, pos: 0 };
    let rebase = |mut e: ParseError| {
        e.offset += base;
        e
    };
    let mut tick: u64 = 0;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), (u64, u8)> = HashMap::new();
    let mut notes = Vec::new();
    let mut tempos = Vec::new();

    while r.remaining() > 0 {
        tick += u64::from(r.varlen().map_err(rebase)?);
        let first = r.peek().map_err(rebase)?;
        let status = if first & 0x80 != 0 {
            r.pos += 1;
            first
        } else {
            running.ok_or_else(|| rebase(r.err(ParseErrorKind::NoRunningStatus)))?
        };
        match status {
            0xFF => {
                running = None;
                let kind = r.u8().map_err(rebase)?;
                let len = r.varlen().map_err(rebase)? as usize;
                let data = r.take(len).map_err(rebase)?;
                match kind {
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us > 0 {
                            tempos.push((tick, us));
                        }
                    }
                    0x2F => break,
                    _ => {}
                }
            }
            0xF0 | 0xF7 => {
                running = None;
                let len = r.varlen().map_err(rebase)? as usize;
                r.take(len).map_err(rebase)?;
            }
            0xF1..=0xFE => {
                // System common / realtime bytes are not valid in files; skip
                // their data bytes if any.
                running = None;
                let n = match status {
                    0xF2 => 2,
                    0xF1 | 0xF3 => 1,
                    _ => 0,
                };
                for _ in 0..n {
                    r.data_byte().map_err(rebase)?;
                }
            }
            _ => {
                running = Some(status);
                let channel = status & 0x0F;
                match status & 0xF0 {
                    0x80 | 0x90 => {
                        let key = r.data_byte().map_err(rebase)?;
                        let vel = r.data_byte().map_err(rebase)?;
                        let on = status & 0xF0 == 0x90 && vel > 0;
                        if let Some((start, velocity)) = open.remove(&(channel, key)) {
                            notes.push(TickNote {
                                pitch: key,
                                velocity,
                                start,
                                end: tick,
                            });
                        }
                        if on {
                            open.insert((channel, key), (tick, vel));
                        }
                    }
                    0xA0 | 0xB0 | 0xE0 => {
                        r.data_byte().map_err(rebase)?;
                        r.data_byte().map_err(rebase)?;
                    }
                    _ => {
                        r.data_byte().map_err(rebase)?;
                    }
                }
            }
        }
    }

    let mut dangling: Vec<_> = open.into_iter().collect();
    dangling.sort_by_key(|&((ch, key), (start, _))| (start, ch, key));
    for ((_, key), (start, velocity)) in dangling {
        notes.push(TickNote {
            pitch: key,
            velocity,
            start,
            end: tick,
        });
    }
    Ok(TrackEvents { notes, tempos })
}

fn push_varlen(out: &mut Vec<u8>, value: u32) {
    let mut value = value.min(0x0FFF_FFFF);
    let mut buf = [0u8; 4];
    let mut i = 3;
    buf[i] = (value & 0x7F) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = ((value & 0x7F) as u8) | 0x80;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

/// Serializes a sequence as a format-0 file.
///
/// Overlapping notes of the same pitch are spread across channels so that
/// re-parsing pairs each note-on with its own note-off.
pub fn write_smf(seq: &NoteSequence, tempo: &TempoMap) -> Vec<u8> {
    // (tick, order, bytes); order puts tempo first, then note-offs before note-ons.
    let mut events: Vec<(u64, u8, [u8; 3])> = Vec::new();
    let mut busy: Vec<Vec<u64>> = vec![vec![0; 128]; 16];
    for note in seq.notes() {
        let start = tempo.seconds_to_tick(note.start);
        let end = tempo.seconds_to_tick(note.end).max(start + 1);
        let pitch = note.pitch & 0x7F;
        let channel = (0..16)
            .find(|&ch| busy[ch][pitch as usize] <= start)
            .unwrap_or(0);
        busy[channel][pitch as usize] = end;
        let ch = channel as u8;
        events.push((start, 2, [0x90 | ch, pitch, note.velocity.clamp(1, 127)]));
        events.push((end, 1, [0x80 | ch, pitch, 0]));
    }
    events.sort_by_key(|e| (e.0, e.1));

    let mut track = Vec::new();
    let mut tempos = tempo.segments.iter().peekable();
    let mut last_tick = 0u64;
    let emit_tempo = |track: &mut Vec<u8>, last_tick: &mut u64, tick: u64, us: u32| {
        push_varlen(track, (tick - *last_tick) as u32);
        track.extend_from_slice(&[0xFF, 0x51, 0x03]);
        track.extend_from_slice(&us.to_be_bytes()[1..]);
        *last_tick = tick;
    };
    for (tick, _, bytes) in events {
        while let Some(&&(t, us)) = tempos.peek() {
            if t > tick {
                break;
            }
            emit_tempo(&mut track, &mut last_tick, t, us);
            tempos.next();
        }
        push_varlen(&mut track, (tick - last_tick) as u32);
        track.extend_from_slice(&bytes);
        last_tick = tick;
    }
    for &(t, us) in tempos {
        emit_tempo(&mut track, &mut last_tick, t, us);
    }
    track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&tempo.ticks_per_quarter.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

/// Notes intersecting `[start_s, end_s)`, cropped to the window and re-based
/// so the window starts at zero.
pub fn clip(seq: &NoteSequence, start_s: f64, end_s: f64) -> Result<NoteSequence, ClipError> {
    if end_s.is_nan() || start_s.is_nan() || end_s <= start_s {
        return Err(ClipError::InvertedRange {
            start: start_s,
            end: end_s,
        });
    }
    let notes = seq
        .notes()
        .iter()
        .filter(|n| n.start < end_s && n.end > start_s)
        .map(|n| {
            Note::new(
                n.pitch,
                n.velocity,
                n.start.max(start_s) - start_s,
                n.end.min(end_s) - start_s,
            )
        })
        .filter(|n| n.end > n.start)
        .collect();
    Ok(NoteSequence::new(notes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_note_file(tempo_us: Option<u32>) -> Vec<u8> {
        let mut track = Vec::new();
        if let Some(us) = tempo_us {
            track.extend_from_slice(&[0x00, 0xFF, 0x51, 0x03]);
            track.extend_from_slice(&us.to_be_bytes()[1..]);
        }
        track.extend_from_slice(&[0x00, 0x90, 60, 64]);
        // 480 ticks as a varlen: 0x83 0x60
        track.extend_from_slice(&[0x83, 0x60, 0x80, 60, 0]);
        track.extend_from_slice(&[0x00, 0xFF, 0x2F, 0x00]);
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(track.len() as u32).to_be_bytes());
        out.extend_from_slice(&track);
        out
    }

    #[test]
    fn default_tempo_quarter_note_is_half_second() {
        let (seq, tempo) = parse_smf(&single_note_file(None)).unwrap();
        assert_eq!(seq.notes(), &[Note::new(60, 64, 0.0, 0.5)]);
        assert_eq!(tempo.segments, vec![(0, 500_000)]);
    }

    #[test]
    fn set_tempo_event_scales_time() {
        // 480 ticks * 1_000_000 us / 480 = 1.0 s
        let (seq, tempo) = parse_smf(&single_note_file(Some(1_000_000))).unwrap();
        assert_eq!(seq.notes()[0].end, 1.0);
        assert_eq!(tempo.initial_bpm(), 60.0);
    }

    #[test]
    fn rejects_missing_header() {
        let err = parse_smf(b"RIFF0000").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::MissingHeader);
        assert_eq!(err.offset, 0);
    }

    #[test]
    fn rejects_smpte_and_format_two() {
        let mut bytes = single_note_file(None);
        bytes[12] = 0xE7;
        assert_eq!(parse_smf(&bytes).unwrap_err().kind, ParseErrorKind::SmpteDivision);
        let mut bytes = single_note_file(None);
        bytes[9] = 2;
        assert_eq!(
            parse_smf(&bytes).unwrap_err().kind,
            ParseErrorKind::UnsupportedFormat(2)
        );
    }

    #[test]
    fn truncated_chunk_reports_offset() {
        let bytes = single_note_file(None);
        let cut = &bytes[..bytes.len() - 3];
        let err = parse_smf(cut).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::Truncated);
        assert_eq!(err.offset, 22);
    }

    #[test]
    fn running_status_and_zero_velocity_off() {
        // on 60, on 64 (running), off 60 via vel 0 (running), off 64 via vel 0
        let track = [
            0x00, 0x90, 60, 100, 0x00, 64, 90, 0x83, 0x60, 60, 0, 0x00, 64, 0, 0x00, 0xFF, 0x2F,
            0x00,
        ];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0]);
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let (seq, _) = parse_smf(&bytes).unwrap();
        assert_eq!(
            seq.notes(),
            &[Note::new(60, 100, 0.0, 0.5), Note::new(64, 90, 0.0, 0.5)]
        );
    }

    #[test]
    fn retrigger_closes_previous_and_dangling_closed_at_end_of_track() {
        let track = [
            0x00, 0x90, 60, 100, // on
            0x83, 0x60, 0x90, 60, 80, // retrigger at 480
            0x83, 0x60, 0xFF, 0x2F, 0x00, // end of track at 960, note still open
        ];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 0, 0, 1, 0x01, 0xE0]);
        bytes.extend_from_slice(b"MTrk");
        bytes.extend_from_slice(&(track.len() as u32).to_be_bytes());
        bytes.extend_from_slice(&track);
        let (seq, _) = parse_smf(&bytes).unwrap();
        assert_eq!(
            seq.notes(),
            &[Note::new(60, 100, 0.0, 0.5), Note::new(60, 80, 0.5, 1.0)]
        );
    }

    #[test]
    fn format_one_merges_tracks_and_uses_conductor_tempo() {
        let conductor = [0x00, 0xFF, 0x51, 0x03, 0x0F, 0x42, 0x40, 0x00, 0xFF, 0x2F, 0x00];
        let melody = [0x00, 0x91, 72, 50, 0x83, 0x60, 0x81, 72, 0, 0x00, 0xFF, 0x2F, 0x00];
        let mut bytes = b"MThd".to_vec();
        bytes.extend_from_slice(&[0, 0, 0, 6, 0, 1, 0, 2, 0x01, 0xE0]);
        for t in [&conductor[..], &melody[..]] {
            bytes.extend_from_slice(b"MTrk");
            bytes.extend_from_slice(&(t.len() as u32).to_be_bytes());
            bytes.extend_from_slice(t);
        }
        let (seq, _) = parse_smf(&bytes).unwrap();
        assert_eq!(seq.notes(), &[Note::new(72, 50, 0.0, 1.0)]);
    }

    #[test]
    fn missing_track_is_an_error() {
        let mut bytes = single_note_file(None);
        bytes[11] = 2;
        let err = parse_smf(&bytes).unwrap_err();
        assert_eq!(
            err.kind,
            ParseErrorKind::MissingTracks {
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn write_empty_sequence() {
        let bytes = write_smf(&NoteSequence::empty(), &TempoMap::default());
        let (seq, tempo) = parse_smf(&bytes).unwrap();
        assert!(seq.is_empty());
        assert_eq!(tempo, TempoMap::default());
        // Track body: tempo meta + end-of-track.
        assert_eq!(&bytes[bytes.len() - 4..], &[0x00, 0xFF, 0x2F, 0x00]);
    }

    #[test]
    fn single_note_round_trip() {
        let seq = NoteSequence::new(vec![Note::new(60, 64, 0.0, 0.5)]);
        let (back, _) = parse_smf(&write_smf(&seq, &TempoMap::default())).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn three_notes_quantize_within_one_tick() {
        let seq = NoteSequence::new(vec![
            Note::new(60, 64, 0.0113, 0.4071),
            Note::new(64, 70, 0.5002, 0.9),
            Note::new(67, 80, 1.2345, 2.0001),
        ]);
        let tempo = TempoMap::default();
        let (back, _) = parse_smf(&write_smf(&seq, &tempo)).unwrap();
        let tick = 0.5 / 480.0;
        for (a, b) in seq.notes().iter().zip(back.notes()) {
            assert!((a.start - b.start).abs() <= tick);
            assert!((a.end - b.end).abs() <= tick);
        }
    }

    #[test]
    fn overlapping_same_pitch_survives_round_trip() {
        let seq = NoteSequence::new(vec![
            Note::new(60, 64, 0.0, 2.0),
            Note::new(60, 70, 0.5, 1.0),
        ]);
        let (back, _) = parse_smf(&write_smf(&seq, &TempoMap::default())).unwrap();
        assert_eq!(back, seq);
    }

    #[test]
    fn tempo_changes_round_trip() {
        let tempo = TempoMap {
            ticks_per_quarter: 96,
            segments: vec![(0, 400_000), (192, 750_000)],
        };
        assert!((tempo.tick_to_seconds(192) - 0.8).abs() < 1e-12);
        assert!((tempo.tick_to_seconds(288) - 1.55).abs() < 1e-12);
        assert_eq!(tempo.seconds_to_tick(1.55), 288);
        let seq = NoteSequence::new(vec![Note::new(70, 90, 0.7, 1.6)]);
        let (back, back_tempo) = parse_smf(&write_smf(&seq, &tempo)).unwrap();
        assert_eq!(back_tempo, tempo);
        assert!((back.notes()[0].end - 1.6).abs() <= tempo.tick_seconds_at(1.6));
    }

    #[test]
    fn clip_crops_and_rebases() {
        let seq = NoteSequence::new(vec![Note::new(60, 64, 4.5, 6.0)]);
        let c = clip(&seq, 5.0, 10.0).unwrap();
        assert_eq!(c.notes(), &[Note::new(60, 64, 0.0, 1.0)]);
    }

    #[test]
    fn clip_whole_and_beyond() {
        let seq = NoteSequence::new(vec![
            Note::new(60, 64, 0.0, 1.0),
            Note::new(62, 64, 1.0, 2.5),
        ]);
        assert_eq!(clip(&seq, 0.0, seq.end_time()).unwrap(), seq);
        assert!(clip(&seq, 3.0, 4.0).unwrap().is_empty());
        assert!(clip(&seq, 2.0, 2.0).is_err());
        assert!(clip(&seq, 2.0, 1.0).is_err());
    }
}
