//! Melody-based retrieval over symbolic music.
//!
//! The pipeline runs [`midi`] parsing, [`melody`] extraction, optional
//! [`normalize`] processing, [`similarity`] scoring and [`retrieval`]
//! ranking. [`evaluation`] measures it, and [`synth`] makes seeded test
//! material.

pub mod evaluation;
pub mod melody;
pub mod midi;
pub mod normalize;
pub mod retrieval;
pub mod similarity;
pub mod synth;

pub use melody::{Criteria, Extractor, StabilityReport};
pub use midi::{Note, NoteSequence, ParseError, TempoMap};
pub use normalize::{Key, Mode, MusicUnits, Tempo};
pub use retrieval::{BuildConfig, Document, Index, Method, Query, RankedResult, RetrievalError, TempoSource};
pub use similarity::{MsWeights, RsaParams, SimilarityScore, Symbol, SymbolSequence, WindowOffset};
