//! Tokenized ABC for chordified segments. A segment is a sequence of runs,
//! each a maximal span of steps with one pitch content and no re-attack:
//!
//! ```text
//! run  := ["-"] body dur
//! body := "z" | pitch | "[" pitch+ "]"
//! ```
//!
//! `dur` counts steps (1..=L). Every lexical unit is its own token, so the
//! chord C-E-G over two steps is `[ C E G ] 2`, six tokens. The tie prefix
//! `-` marks a run that continues sound attacked before the run (carried in
//! from an earlier window or held through a partial release), decoded as
//! continuations with no attack. Pitch spelling is sharps-only ABC: `C` is
//! middle C (MIDI 60), `c` an octave up, with `,`/`'` octave marks.
//!
//! There is no fast-path augmentation; transposed segments are re-encoded.

use std::collections::BTreeSet;

use super::{CodecError, EncodedTensor, EncodingId, Vocabulary, PAD_ID, PAD_TOKEN, UNK_TOKEN};
use crate::score::{Segment, SegmentMeta, TimestepSlice};

const REST_ID: u32 = 2;
const TIE_ID: u32 = 3;
const OPEN_ID: u32 = 4;
const CLOSE_ID: u32 = 5;
const PITCH_BASE: u32 = 6;
const DUR_BASE: u32 = 134;

fn pitch_id(p: u8) -> u32 {
    PITCH_BASE + p as u32
}

fn dur_id(steps: usize) -> u32 {
    DUR_BASE + steps as u32 - 1
}

/// Sharps-only ABC spelling with octave marks, for the vocabulary file and
/// debugging; the codec itself works on token ids.
pub fn abc_pitch_name(pitch: u8) -> String {
    const LETTERS: [&str; 12] = [
        "C", "^C", "D", "^D", "E", "F", "^F", "G", "^G", "A", "^A", "B",
    ];
    let letter = LETTERS[(pitch % 12) as usize];
    let octave = (pitch / 12) as i32; // 5 holds middle C
    if octave >= 6 {
        format!(
            "{}{}",
            letter.to_ascii_lowercase(),
            "'".repeat((octave - 6) as usize)
        )
    } else {
        format!("{}{}", letter, ",".repeat((5 - octave) as usize))
    }
}

/// The token table for segments of length `l`. Ids match the arithmetic
/// layout the codec uses internally.
pub fn abc_vocabulary(l: usize) -> Vocabulary {
    let mut tokens = vec![
        PAD_TOKEN.to_string(),
        UNK_TOKEN.to_string(),
        "z".to_string(),
        "-".to_string(),
        "[".to_string(),
        "]".to_string(),
    ];
    tokens.extend((0u8..=127).map(abc_pitch_name));
    tokens.extend((1..=l).map(|d| d.to_string()));
    Vocabulary::new(EncodingId::Abc, tokens).expect("layout is well-formed")
}

/// Expects chordified input: slices are all-attack, all-continuation, or
/// empty. A slice with both is treated as one chord.
pub fn encode_abc(seg: &Segment) -> EncodedTensor {
    let mut out: Vec<u32> = Vec::new();
    let mut i = 0;
    while i < seg.len() {
        let slice = &seg.slices[i];
        let content = slice.sounding();
        let tied = slice.attacks.is_empty() && !content.is_empty();
        let mut j = i + 1;
        // A rest run extends over empty slices, a sounding run over pure
        // continuations of the same set; any attack breaks the run.
        while j < seg.len()
            && seg.slices[j].attacks.is_empty()
            && seg.slices[j].continuations == content
        {
            j += 1;
        }
        if tied {
            out.push(TIE_ID);
        }
        match content.len() {
            0 => out.push(REST_ID),
            1 => out.push(pitch_id(*content.iter().next().unwrap())),
            _ => {
                out.push(OPEN_ID);
                out.extend(content.iter().map(|&p| pitch_id(p)));
                out.push(CLOSE_ID);
            }
        }
        out.push(dur_id(j - i));
        i = j;
    }
    EncodedTensor::from_token_ids(EncodingId::Abc, &out)
}

fn parse_error(msg: impl Into<String>) -> CodecError {
    CodecError::ParseError(msg.into())
}

/// Strict parser: the grammar above, PAD as end of stream, durations summing
/// to at most `l`. Steps never written stay empty.
pub fn decode_abc(
    t: &EncodedTensor,
    l: usize,
    meta: &SegmentMeta,
) -> Result<Segment, CodecError> {
    let ids = t.token_ids();
    let max_dur = DUR_BASE + l as u32 - 1;
    let mut slices = vec![TimestepSlice::default(); l];
    let mut cursor = 0usize;
    let mut pos = 0usize;

    let next = |pos: &mut usize| -> Option<u32> {
        let id = *ids.get(*pos)?;
        if id == PAD_ID {
            return None;
        }
        *pos += 1;
        Some(id)
    };

    while let Some(first) = next(&mut pos) {
        let (tied, body) = if first == TIE_ID {
            let b = next(&mut pos).ok_or_else(|| parse_error("tie at end of stream"))?;
            (true, b)
        } else {
            (false, first)
        };

        let mut content: BTreeSet<u8> = BTreeSet::new();
        match body {
            REST_ID => {
                if tied {
                    return Err(parse_error("tie before rest"));
                }
            }
            OPEN_ID => loop {
                let id = next(&mut pos).ok_or_else(|| parse_error("unterminated chord"))?;
                if id == CLOSE_ID {
                    if content.is_empty() {
                        return Err(parse_error("empty chord"));
                    }
                    break;
                }
                if !(PITCH_BASE..DUR_BASE).contains(&id) {
                    return Err(parse_error(format!("token {id} inside chord")));
                }
                content.insert((id - PITCH_BASE) as u8);
            },
            _ if (PITCH_BASE..DUR_BASE).contains(&body) => {
                content.insert((body - PITCH_BASE) as u8);
            }
            _ => return Err(parse_error(format!("token {body} cannot start a run"))),
        }

        let dur_token = next(&mut pos).ok_or_else(|| parse_error("missing duration"))?;
        if !(DUR_BASE..=max_dur).contains(&dur_token) {
            return Err(parse_error(format!("token {dur_token} is not a duration")));
        }
        let dur = (dur_token - DUR_BASE) as usize + 1;
        if cursor + dur > l {
            return Err(parse_error("durations exceed segment length"));
        }

        for (step, slice) in slices.iter_mut().enumerate().take(cursor + dur).skip(cursor) {
            if step == cursor && !tied {
                slice.attacks.extend(content.iter().copied());
            } else {
                slice.continuations.extend(content.iter().copied());
            }
        }
        cursor += dur;
    }

    Ok(Segment::from_parts(meta, slices))
}
