//! Score parsing and grid preparation.
//!
//! A [`Score`] is voice-structured symbolic music with rational-beat timing.
//! [`quantize`] flattens it onto a fixed-resolution [`TimestepGrid`] of
//! attack/continuation pitch sets, [`chordify`] merges the vertical sonorities
//! and splits ties under moving voices, [`transpose_grid`] shifts everything
//! by semitones, and [`segment`] cuts fixed-length windows for the codecs.

mod json;
mod ops;
mod smf;

pub use json::{parse_score_json, serialize_score, SchemaError};
pub use ops::{chordify, quantize, segment, transpose_grid};
pub(crate) use ops::fold_pitch;
pub use smf::{parse_smf, SmfError};

use std::collections::BTreeSet;

use num_rational::Ratio;

/// Musical time in beats (quarter notes), kept exact.
pub type Beats = Ratio<i64>;

/// Convenience constructor for a `Beats` value.
pub fn beats(num: i64, den: i64) -> Beats {
    Ratio::new(num, den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    Major,
    Minor,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Major => "major",
            Mode::Minor => "minor",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Tonic pitch classes in ascending-fifths order starting from B, which is
/// how the Camelot wheel numbers keys 1 through 12.
pub(crate) const CAMELOT_TONICS: [u8; 12] = [11, 6, 1, 8, 3, 10, 5, 0, 7, 2, 9, 4];

const PC_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

/// A key: tonic pitch class (C = 0) plus mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KeyLabel {
    pub tonic_pc: u8,
    pub mode: Mode,
}

impl KeyLabel {
    /// Panics if `tonic_pc` is not in 0..12.
    pub fn new(tonic_pc: u8, mode: Mode) -> Self {
        assert!(tonic_pc < 12, "tonic pitch class {tonic_pc} out of range");
        KeyLabel { tonic_pc, mode }
    }

    pub fn major(tonic_pc: u8) -> Self {
        KeyLabel::new(tonic_pc, Mode::Major)
    }

    pub fn minor(tonic_pc: u8) -> Self {
        KeyLabel::new(tonic_pc, Mode::Minor)
    }

    /// Camelot wheel position: number 1-12 along the fifths cycle from B,
    /// letter B for major and A for minor.
    pub fn camelot(&self) -> (u8, char) {
        let number = CAMELOT_TONICS
            .iter()
            .position(|&pc| pc == self.tonic_pc)
            .expect("tonic_pc < 12") as u8
            + 1;
        let letter = match self.mode {
            Mode::Major => 'B',
            Mode::Minor => 'A',
        };
        (number, letter)
    }

    /// Camelot label such as "8B".
    pub fn camelot_label(&self) -> String {
        let (n, l) = self.camelot();
        format!("{n}{l}")
    }

    /// Key shifted by `semitones`; mode is preserved.
    pub fn transposed(&self, semitones: i32) -> KeyLabel {
        let pc = (self.tonic_pc as i32 + semitones).rem_euclid(12) as u8;
        KeyLabel::new(pc, self.mode)
    }

    /// Sharps-only spelling such as "F# minor".
    pub fn name(&self) -> String {
        format!("{} {}", PC_NAMES[self.tonic_pc as usize], self.mode)
    }
}

impl std::fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

/// One note in a voice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Note {
    pub onset: Beats,
    pub duration: Beats,
    pub pitch: u8,
    pub velocity: u8,
}

/// A monophonic-or-not sequence of notes sorted by onset.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Voice {
    pub notes: Vec<Note>,
}

/// Parsed symbolic music: voices plus key and grid-resolution annotations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Score {
    pub title: String,
    pub key: KeyLabel,
    /// Default grid step for quantization, in beats.
    pub resolution: Beats,
    pub voices: Vec<Voice>,
}

impl Score {
    /// Checks the structural invariants: onsets >= 0, durations > 0,
    /// per-voice onset ordering. Pitch and velocity are range-safe by type.
    pub fn validate(&self) -> Result<(), String> {
        if self.resolution <= Beats::from_integer(0) {
            return Err("resolution must be positive".into());
        }
        for (vi, voice) in self.voices.iter().enumerate() {
            let mut prev = Beats::from_integer(-1);
            for (ni, note) in voice.notes.iter().enumerate() {
                if note.onset < Beats::from_integer(0) {
                    return Err(format!("voices[{vi}][{ni}]: negative onset"));
                }
                if note.duration <= Beats::from_integer(0) {
                    return Err(format!("voices[{vi}][{ni}]: non-positive duration"));
                }
                if note.onset < prev {
                    return Err(format!("voices[{vi}][{ni}]: onsets out of order"));
                }
                prev = note.onset;
            }
        }
        Ok(())
    }
}

/// Attack and continuation pitch sets for one grid step. The sets are
/// disjoint: a re-attacked pitch counts as an attack only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimestepSlice {
    pub attacks: BTreeSet<u8>,
    pub continuations: BTreeSet<u8>,
}

impl TimestepSlice {
    pub fn is_empty(&self) -> bool {
        self.attacks.is_empty() && self.continuations.is_empty()
    }

    /// All pitches sounding at this step.
    pub fn sounding(&self) -> BTreeSet<u8> {
        self.attacks.union(&self.continuations).copied().collect()
    }
}

/// A score flattened onto a fixed-resolution grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestepGrid {
    pub resolution: Beats,
    pub key: KeyLabel,
    pub steps: Vec<TimestepSlice>,
}

/// Identity of a segment independent of its slice content. Decoders take one
/// of these so a round trip can reproduce the original segment exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentMeta {
    pub piece_id: String,
    pub start_step: usize,
    pub key: KeyLabel,
    pub padded: bool,
}

/// A fixed-length window of grid slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub piece_id: String,
    pub start_step: usize,
    pub key: KeyLabel,
    pub slices: Vec<TimestepSlice>,
    /// True when the source grid ended mid-window and the tail was filled
    /// with empty slices.
    pub padded: bool,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn meta(&self) -> SegmentMeta {
        SegmentMeta {
            piece_id: self.piece_id.clone(),
            start_step: self.start_step,
            key: self.key,
            padded: self.padded,
        }
    }

    pub fn from_parts(meta: &SegmentMeta, slices: Vec<TimestepSlice>) -> Segment {
        Segment {
            piece_id: meta.piece_id.clone(),
            start_step: meta.start_step,
            key: meta.key,
            slices,
            padded: meta.padded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn camelot_numbers_follow_fifths_from_b() {
        assert_eq!(KeyLabel::major(11).camelot(), (1, 'B'));
        assert_eq!(KeyLabel::major(0).camelot(), (8, 'B'));
        assert_eq!(KeyLabel::minor(11).camelot(), (1, 'A'));
        assert_eq!(KeyLabel::minor(9).camelot(), (11, 'A'));
        assert_eq!(KeyLabel::major(4).camelot(), (12, 'B'));
        for w in CAMELOT_TONICS.windows(2) {
            assert_eq!((w[0] + 7) % 12, w[1]);
        }
    }

    #[test]
    fn camelot_letter_tracks_mode() {
        for pc in 0..12 {
            assert_eq!(KeyLabel::major(pc).camelot().1, 'B');
            assert_eq!(KeyLabel::minor(pc).camelot().1, 'A');
        }
    }

    #[test]
    fn transposed_wraps_tonic() {
        let g = KeyLabel::major(0).transposed(7);
        assert_eq!(g, KeyLabel::major(7));
        assert_eq!(KeyLabel::minor(2).transposed(-5), KeyLabel::minor(9));
        assert_eq!(KeyLabel::major(1).transposed(23), KeyLabel::major(0));
    }

    #[test]
    fn validate_rejects_bad_notes() {
        let mut s = Score {
            title: String::new(),
            key: KeyLabel::major(0),
            resolution: beats(1, 4),
            voices: vec![Voice {
                notes: vec![Note {
                    onset: beats(0, 1),
                    duration: beats(0, 1),
                    pitch: 60,
                    velocity: 64,
                }],
            }],
        };
        assert!(s.validate().is_err());
        s.voices[0].notes[0].duration = beats(1, 1);
        assert!(s.validate().is_ok());
    }
}
