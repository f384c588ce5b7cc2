//! Weighted melodic edit distance over pitch + duration symbols.
//!
//! Besides match, substitution, insertion and deletion, the recurrence lets
//! up to `max_span` consecutive notes of one sequence be consolidated into a
//! single note of the other, or one note be fragmented into several:
//!
//! ```text
//! d(i, j) = min {
//!     d(i-1, j-1)                          if a_i == b_j
//!     d(i-1, j-1) + sub(a_i, b_j)
//!     d(i-1, j)   + del
//!     d(i, j-1)   + ins
//!     d(i-k, j-1) + cons(a_{i-k+1..=i}, b_j)     2 <= k <= max_span
//!     d(i-1, j-k) + frag(a_i, b_{j-k+1..=j})     2 <= k <= max_span
//! }
//! ```

use serde::{Deserialize, Serialize};

use super::rsa::note_windows;
use super::{RsaParams, SimilarityError, SimilarityScore, Symbol, SymbolSequence, WindowOffset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsWeights {
    /// Cost of inserting or deleting one note.
    pub insert_delete_base: f64,
    /// Substitution cost per interval class 0..=6 (semitones folded mod 12).
    pub interval_costs: [f64; 7],
    /// Extra cost when two different pitches share a pitch class (octaves).
    pub octave_cost: f64,
    /// Base cost of a consolidation or fragmentation.
    pub fragmentation_base: f64,
    /// Cost per music unit of duration mismatch.
    pub length_coefficient: f64,
    /// Upper bound on the duration-mismatch term.
    pub length_cap: f64,
    /// Maximum number of notes merged or split in one step.
    pub max_span: usize,
}

impl Default for MsWeights {
    fn default() -> Self {
        MsWeights {
            insert_delete_base: 1.0,
            interval_costs: [0.0, 0.9, 0.2, 0.5, 0.35, 0.1, 0.8],
            octave_cost: 0.0,
            fragmentation_base: 0.6,
            length_coefficient: 0.3,
            length_cap: 1.0,
            max_span: 4,
        }
    }
}

impl MsWeights {
    /// Plain edit distance: unit insert/delete, 0/1 substitution, no
    /// duration term, no consolidation or fragmentation.
    pub fn unit() -> Self {
        MsWeights {
            insert_delete_base: 1.0,
            interval_costs: [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
            octave_cost: 1.0,
            fragmentation_base: 1.0,
            length_coefficient: 0.0,
            length_cap: 0.0,
            max_span: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        let costs = self
            .interval_costs
            .iter()
            .chain([
                &self.insert_delete_base,
                &self.octave_cost,
                &self.fragmentation_base,
                &self.length_coefficient,
                &self.length_cap,
            ]);
        if costs.into_iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(SimilarityError::InvalidParams("all weights must be finite and non-negative".into()));
        }
        if self.interval_costs[0] != 0.0 {
            return Err(SimilarityError::InvalidParams("unison substitution must cost 0".into()));
        }
        if self.max_span == 0 {
            return Err(SimilarityError::InvalidParams("max_span must be at least 1".into()));
        }
        Ok(())
    }

    fn interval(&self, a: u8, b: u8) -> f64 {
        if a == b {
            return 0.0;
        }
        let d = (i32::from(a) - i32::from(b)).rem_euclid(12) as usize;
        if d == 0 {
            self.octave_cost
        } else {
            self.interval_costs[d.min(12 - d)]
        }
    }

    fn length(&self, a: f64, b: f64) -> f64 {
        (self.length_coefficient * (a - b).abs()).min(self.length_cap)
    }
}

fn units(s: &Symbol) -> f64 {
    s.units.map_or(0.0, |u| u.0)
}

fn require_durations(seq: &SymbolSequence) -> Result<(), SimilarityError> {
    if seq.has_durations() {
        Ok(())
    } else {
        Err(SimilarityError::MissingDurations)
    }
}

fn distance(a: &[Symbol], b: &[Symbol], w: &MsWeights) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cols = n + 1;
    let mut d = vec![0.0f64; (m + 1) * cols];
    for i in 1..=m {
        d[i * cols] = i as f64 * w.insert_delete_base;
    }
    for j in 1..=n {
        d[j] = j as f64 * w.insert_delete_base;
    }
    for i in 1..=m {
        let ai = &a[i - 1];
        for j in 1..=n {
            let bj = &b[j - 1];
            let diag = d[(i - 1) * cols + j - 1];
            let mut best = if ai.pitch == bj.pitch && units(ai) == units(bj) {
                diag
            } else {
                diag + w.interval(ai.pitch, bj.pitch) + w.length(units(ai), units(bj))
            };
            best = best.min(d[(i - 1) * cols + j] + w.insert_delete_base);
            best = best.min(d[i * cols + j - 1] + w.insert_delete_base);

            // Consolidation: a[i-k..i] -> b[j-1]
            let (mut pitch_cost, mut total) = (w.interval(ai.pitch, bj.pitch), units(ai));
            for k in 2..=w.max_span.min(i) {
                let al = &a[i - k];
                pitch_cost += w.interval(al.pitch, bj.pitch);
                total += units(al);
                let c = d[(i - k) * cols + j - 1] + w.fragmentation_base + pitch_cost + w.length(total, units(bj));
                best = best.min(c);
            }
            // Fragmentation: a[i-1] -> b[j-k..j]
            let (mut pitch_cost, mut total) = (w.interval(ai.pitch, bj.pitch), units(bj));
            for k in 2..=w.max_span.min(j) {
                let bl = &b[j - k];
                pitch_cost += w.interval(ai.pitch, bl.pitch);
                total += units(bl);
                let c = d[(i - 1) * cols + j - k] + w.fragmentation_base + pitch_cost + w.length(units(ai), total);
                best = best.min(c);
            }
            d[i * cols + j] = best;
        }
    }
    d[m * cols + n]
}

/// Minimal total transformation cost from `a` to `b`. Both sequences must
/// carry music-unit durations.
pub fn mongeau_sankoff(a: &SymbolSequence, b: &SymbolSequence, w: &MsWeights) -> Result<f64, SimilarityError> {
    w.validate()?;
    require_durations(a)?;
    require_durations(b)?;
    Ok(distance(a.symbols(), b.symbols(), w))
}

/// [`mongeau_sankoff`] over note windows as long as the query, normalized by
/// the cost of deleting the whole query.
pub fn ms_similarity(
    query: &SymbolSequence,
    doc: &SymbolSequence,
    w: &MsWeights,
    params: &RsaParams,
) -> Result<SimilarityScore, SimilarityError> {
    w.validate()?;
    params.validate()?;
    require_durations(query)?;
    require_durations(doc)?;
    let (q, syms) = (query.symbols(), doc.symbols());
    let mut best = (f64::INFINITY, 0);
    for win in note_windows(syms.len(), q.len(), params.stride_notes) {
        let start = win.start;
        let cost = distance(q, &syms[win], w);
        if cost < best.0 {
            best = (cost, start);
        }
        if cost == 0.0 {
            break;
        }
    }
    Ok(SimilarityScore::from_distance(
        best.0,
        q.len() as f64 * w.insert_delete_base,
        WindowOffset::Notes(best.1),
    ))
}
