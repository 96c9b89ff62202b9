//! The four symbolic codecs: piano roll, MIDI-like tokens, ABC tokens, and
//! Tonnetz planes. Each maps [`Segment`](crate::score::Segment) to an
//! [`EncodedTensor`] and back; the two pitch-shiftable ones also carry a
//! direct tensor-space transposition.

mod abc;
mod midi_like;
mod piano_roll;
mod tonnetz;

pub use abc::{abc_vocabulary, decode_abc, encode_abc};
pub use midi_like::{augment_midi_like, decode_midi_like, encode_midi_like, midi_like_vocabulary};
pub use piano_roll::{augment_piano_roll, decode_piano_roll, encode_piano_roll};
pub use tonnetz::{
    decode_tonnetz, encode_tonnetz, tonnetz_positions, tonnetz_table, TonnetzDecodeRule,
    TONNETZ_COLS, TONNETZ_MAX_PITCH, TONNETZ_MIN_PITCH, TONNETZ_ROWS,
};

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EncodingId {
    PianoRoll,
    MidiLike,
    Abc,
    Tonnetz,
    PcDft,
    PitchDft,
}

impl EncodingId {
    pub const ALL: [EncodingId; 6] = [
        EncodingId::PianoRoll,
        EncodingId::MidiLike,
        EncodingId::Abc,
        EncodingId::Tonnetz,
        EncodingId::PcDft,
        EncodingId::PitchDft,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingId::PianoRoll => "piano_roll",
            EncodingId::MidiLike => "midi_like",
            EncodingId::Abc => "abc",
            EncodingId::Tonnetz => "tonnetz",
            EncodingId::PcDft => "pc_dft",
            EncodingId::PitchDft => "pitch_dft",
        }
    }

    /// Stable one-byte tag used in binary file headers.
    pub fn code(self) -> u8 {
        EncodingId::ALL.iter().position(|&e| e == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<EncodingId> {
        EncodingId::ALL.get(code as usize).copied()
    }
}

impl std::fmt::Display for EncodingId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EncodingId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EncodingId::ALL
            .iter()
            .find(|e| e.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown encoding {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Binary,
    Token,
    Float,
}

impl ElementKind {
    /// One-byte tag for binary file headers.
    pub fn code(self) -> u8 {
        match self {
            ElementKind::Binary => 0,
            ElementKind::Token => 1,
            ElementKind::Float => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<ElementKind> {
        match code {
            0 => Some(ElementKind::Binary),
            1 => Some(ElementKind::Token),
            2 => Some(ElementKind::Float),
            _ => None,
        }
    }
}

/// One encoded segment (or a stack of them): a row-major numeric array with
/// its encoding identity, shape, and element kind. Token ids are stored as
/// exact small floats.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTensor {
    pub encoding_id: EncodingId,
    /// (rows, width): timesteps x features, or token-count x 1.
    pub shape: (usize, usize),
    pub kind: ElementKind,
    pub values: Vec<f64>,
}

impl EncodedTensor {
    pub fn zeros(encoding_id: EncodingId, kind: ElementKind, rows: usize, width: usize) -> Self {
        EncodedTensor {
            encoding_id,
            shape: (rows, width),
            kind,
            values: vec![0.0; rows * width],
        }
    }

    pub fn from_token_ids(encoding_id: EncodingId, ids: &[u32]) -> Self {
        EncodedTensor {
            encoding_id,
            shape: (ids.len(), 1),
            kind: ElementKind::Token,
            values: ids.iter().map(|&id| id as f64).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape.0
    }

    pub fn width(&self) -> usize {
        self.shape.1
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.shape.1 + col]
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        &mut self.values[row * self.shape.1 + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.shape.1..(row + 1) * self.shape.1]
    }

    /// Token ids, valid only for `Token` kind tensors.
    pub fn token_ids(&self) -> Vec<u32> {
        debug_assert_eq!(self.kind, ElementKind::Token);
        self.values.iter().map(|&v| v as u32).collect()
    }

    /// Checks the element-kind invariants: 0/1 for binary, integral ids
    /// below `vocab_size` for tokens, shape/length agreement always.
    pub fn validate(&self, vocab_size: Option<usize>) -> Result<(), CodecError> {
        if self.shape.0 * self.shape.1 != self.values.len() {
            return Err(CodecError::ShapeError {
                encoding: self.encoding_id,
                expected: self.shape.0 * self.shape.1,
                got: self.values.len(),
            });
        }
        match self.kind {
            ElementKind::Binary => {
                if let Some(&v) = self.values.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(CodecError::InvalidValue {
                        encoding: self.encoding_id,
                        value: v,
                        reason: "binary tensors may contain only 0 and 1",
                    });
                }
            }
            ElementKind::Token => {
                let limit = vocab_size.unwrap_or(usize::MAX) as f64;
                if let Some(&v) = self
                    .values
                    .iter()
                    .find(|&&v| v < 0.0 || v.fract() != 0.0 || v >= limit)
                {
                    return Err(CodecError::InvalidValue {
                        encoding: self.encoding_id,
                        value: v,
                        reason: "token ids must be integers below the vocabulary size",
                    });
                }
            }
            ElementKind::Float => {
                if let Some(&v) = self.values.iter().find(|v| !v.is_finite()) {
                    return Err(CodecError::InvalidValue {
                        encoding: self.encoding_id,
                        value: v,
                        reason: "float tensors must be finite",
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CodecError {
    #[error("{encoding}: expected {expected} values, got {got}")]
    ShapeError {
        encoding: EncodingId,
        expected: usize,
        got: usize,
    },
    #[error("{encoding}: width {got}, expected {expected}")]
    WidthError {
        encoding: EncodingId,
        expected: usize,
        got: usize,
    },
    #[error("{encoding}: bad value {value}: {reason}")]
    InvalidValue {
        encoding: EncodingId,
        value: f64,
        reason: &'static str,
    },
    #[error("pitch {pitch} has no cell in the pitch network table")]
    OutOfRange { pitch: u8 },
    #[error("token stream: {0}")]
    ParseError(String),
    #[error("vocabulary: {0}")]
    VocabError(String),
}

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// An immutable token table. Id 0 is always PAD and id 1 UNK; ids equal line
/// numbers in the committed vocabulary files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    pub encoding_id: EncodingId,
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    pub fn new(encoding_id: EncodingId, tokens: Vec<String>) -> Result<Self, CodecError> {
        if tokens.len() < 2 || tokens[0] != PAD_TOKEN || tokens[1] != UNK_TOKEN {
            return Err(CodecError::VocabError(format!(
                "first tokens must be {PAD_TOKEN:?} and {UNK_TOKEN:?}"
            )));
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(CodecError::VocabError(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary {
            encoding_id,
            tokens,
            index,
        })
    }

    /// Number of tokens; at least 2 because PAD and UNK are always present.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false; kept for the `len`/`is_empty` convention.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// One token per line; the inverse of [`Vocabulary::from_file_string`].
    pub fn to_file_string(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_file_string(encoding_id: EncodingId, text: &str) -> Result<Self, CodecError> {
        Vocabulary::new(encoding_id, text.lines().map(str::to_string).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_codes_round_trip() {
        for e in EncodingId::ALL {
            assert_eq!(EncodingId::from_code(e.code()), Some(e));
            assert_eq!(e.as_str().parse::<EncodingId>().unwrap(), e);
        }
        assert!(EncodingId::from_code(6).is_none());
        assert!("roll".parse::<EncodingId>().is_err());
    }

    #[test]
    fn tensor_validation_catches_bad_values() {
        let mut t = EncodedTensor::zeros(EncodingId::PianoRoll, ElementKind::Binary, 2, 3);
        assert!(t.validate(None).is_ok());
        t.values[4] = 0.5;
        assert!(t.validate(None).is_err());

        let t = EncodedTensor::from_token_ids(EncodingId::MidiLike, &[0, 1, 5]);
        assert!(t.validate(Some(6)).is_ok());
        assert!(t.validate(Some(5)).is_err());

        let mut t = EncodedTensor::zeros(EncodingId::PcDft, ElementKind::Float, 1, 4);
        t.values[0] = f64::NAN;
        assert!(t.validate(None).is_err());
    }

    #[test]
    fn vocabulary_is_bijective_and_reserved() {
        let v = Vocabulary::new(
            EncodingId::Abc,
            vec!["<pad>".into(), "<unk>".into(), "z".into(), "C".into()],
        )
        .unwrap();
        assert_eq!(v.id("z"), Some(2));
        assert_eq!(v.token(3), Some("C"));
        assert_eq!(v.id_or_unk("missing"), UNK_ID);
        let text = v.to_file_string();
        assert_eq!(Vocabulary::from_file_string(EncodingId::Abc, &text).unwrap(), v);

        assert!(Vocabulary::new(EncodingId::Abc, vec!["<pad>".into()]).is_err());
        assert!(Vocabulary::new(
            EncodingId::Abc,
            vec!["<pad>".into(), "<unk>".into(), "C".into(), "C".into()]
        )
        .is_err());
    }
}
