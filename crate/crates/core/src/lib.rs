//! Symbolic music codecs, a desk-scale variational autoencoder, and
//! latent-space metrics for key geometry.
//!
//! The crate is organized in four layers:
//!
//! - [`score`]: parsing (Standard MIDI Files, a canonical JSON score format),
//!   quantization onto a timestep grid, chordification, transposition, and
//!   segmentation.
//! - [`encodings`]: the four symbolic codecs (piano roll, MIDI-like tokens,
//!   ABC tokens, Tonnetz planes) mapping segments to tensors and back.
//! - [`spectral`]: DFT utilities and the two spectral codecs (pitch-class DFT
//!   and pitch DFT) with phase-rotation transposition.
//! - [`vae`] and [`latent`]: a dense VAE trained with hand-derived gradients,
//!   plus PCA and the cluster/circular-order metrics used to score latent
//!   spaces against the circle of fifths.

pub mod encodings;
pub mod latent;
pub mod score;
pub mod spectral;
pub mod vae;

pub use encodings::{ElementKind, EncodedTensor, EncodingId, Vocabulary};
pub use score::{Beats, KeyLabel, Mode, Score, Segment, TimestepGrid, TimestepSlice};

/// A non-fatal condition recorded while processing musical data.
///
/// Operations that can recover from odd input (dangling note-ons, pitches
/// transposed out of range, stray events in a token stream) keep going and
/// report what happened through one of these instead of failing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// A NOTE_ON without a matching NOTE_OFF; the note was closed at track end.
    UnmatchedNoteOn { track: usize, pitch: u8 },
    /// No key annotation was present; C major was assumed.
    MissingKey,
    /// A transposition pushed a pitch outside 0..=127; it was folded back by
    /// octaves.
    OctaveFold { pitch: i32, folded: u8 },
    /// A NOTE_OFF (or equivalent) for a pitch that was not sounding.
    StrayNoteOff { index: usize, pitch: u8 },
    /// A token that carries no event semantics (PAD/UNK or out-of-vocabulary
    /// id) was skipped during decoding.
    IgnoredToken { index: usize, id: u32 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::UnmatchedNoteOn { track, pitch } => {
                write!(f, "track {track}: NOTE_ON pitch {pitch} never released; closed at track end")
            }
            Warning::MissingKey => write!(f, "no key annotation; defaulted to C major"),
            Warning::OctaveFold { pitch, folded } => {
                write!(f, "transposed pitch {pitch} out of range; folded to {folded}")
            }
            Warning::StrayNoteOff { index, pitch } => {
                write!(f, "event {index}: NOTE_OFF for silent pitch {pitch}; ignored")
            }
            Warning::IgnoredToken { index, id } => {
                write!(f, "token {index}: id {id} has no event semantics; skipped")
            }
        }
    }
}
