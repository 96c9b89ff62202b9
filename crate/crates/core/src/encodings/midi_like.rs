//! MIDI-like token streams over the vocabulary NOTE_ON_p / NOTE_OFF_p
//! (p in 0..=127), SET_VELOCITY_v (32 bins of width 4), TIME_SHIFT_k
//! (k in 1..=L steps).
//!
//! Per step the encoder emits: NOTE_OFFs for pitches ending (ascending),
//! SET_VELOCITY when the bin changes, NOTE_ONs for attacks (ascending), then
//! a TIME_SHIFT; consecutive shifts merge. Shifts across a whole segment
//! always sum to L.
//!
//! Sound carried into the segment (a continuation in step 0 whose attack
//! lies before the window) is written as a NOTE_OFF whose pitch has had no
//! prior event: the matching NOTE_ON happened before the window, so the
//! pitch is replayed as a continuation from step 0 up to the off. Pitches
//! carried through the whole segment get that off after the final shift.
//! A NOTE_OFF for a pitch that has already been closed inside the stream is
//! genuinely stray: it is skipped with a warning.

// Band dispatch reads as ordered comparisons against the layout table above.
#![allow(clippy::manual_range_contains)]

use std::collections::{BTreeMap, BTreeSet};

use super::{EncodedTensor, EncodingId, Vocabulary, PAD_TOKEN, UNK_TOKEN};
use crate::score::fold_pitch;
use crate::score::{Segment, SegmentMeta, TimestepSlice};
use crate::Warning;

/// Slices carry no dynamics, so every note-on is preceded by one velocity
/// event at MIDI 64, bin 16.
pub const DEFAULT_VELOCITY_BIN: u8 = 16;

const ON_BASE: u32 = 2;
const OFF_BASE: u32 = 130;
const VEL_BASE: u32 = 258;
const SHIFT_BASE: u32 = 290;

fn on_id(p: u8) -> u32 {
    ON_BASE + p as u32
}

fn off_id(p: u8) -> u32 {
    OFF_BASE + p as u32
}

fn vel_id(bin: u8) -> u32 {
    VEL_BASE + bin as u32
}

fn shift_id(steps: usize) -> u32 {
    SHIFT_BASE + steps as u32 - 1
}

/// The token table for segments of length `l`. Ids match the arithmetic
/// layout the codec uses internally.
pub fn midi_like_vocabulary(l: usize) -> Vocabulary {
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend((0..128).map(|p| format!("NOTE_ON_{p}")));
    tokens.extend((0..128).map(|p| format!("NOTE_OFF_{p}")));
    tokens.extend((0..32).map(|v| format!("SET_VELOCITY_{v}")));
    tokens.extend((1..=l).map(|k| format!("TIME_SHIFT_{k}")));
    Vocabulary::new(EncodingId::MidiLike, tokens).expect("layout is well-formed")
}

pub fn encode_midi_like(seg: &Segment) -> EncodedTensor {
    let mut out: Vec<u32> = Vec::new();
    let mut pending_shift = 0usize;
    let flush = |out: &mut Vec<u32>, pending: &mut usize| {
        if *pending > 0 {
            out.push(shift_id(*pending));
            *pending = 0;
        }
    };

    let carried: BTreeSet<u8> = seg
        .slices
        .first()
        .map(|s| s.continuations.clone())
        .unwrap_or_default();
    let mut carried_open = carried.clone();
    let mut prev = carried;
    let mut bin: Option<u8> = None;

    for slice in &seg.slices {
        let offs: Vec<u8> = prev
            .iter()
            .filter(|p| !slice.continuations.contains(p))
            .copied()
            .collect();
        if !(offs.is_empty() && slice.attacks.is_empty()) {
            flush(&mut out, &mut pending_shift);
        }
        for p in offs {
            out.push(off_id(p));
            carried_open.remove(&p);
        }
        if !slice.attacks.is_empty() && bin != Some(DEFAULT_VELOCITY_BIN) {
            out.push(vel_id(DEFAULT_VELOCITY_BIN));
            bin = Some(DEFAULT_VELOCITY_BIN);
        }
        for &p in &slice.attacks {
            out.push(on_id(p));
            carried_open.remove(&p);
        }
        pending_shift += 1;
        prev = slice.sounding();
    }
    flush(&mut out, &mut pending_shift);
    for p in carried_open {
        out.push(off_id(p));
    }

    EncodedTensor::from_token_ids(EncodingId::MidiLike, &out)
}

enum Event {
    On(u8),
    Off(u8),
    Velocity,
    Shift(usize),
    Other,
}

fn classify(id: u32, l: usize) -> Event {
    match id {
        _ if id >= ON_BASE && id < OFF_BASE => Event::On((id - ON_BASE) as u8),
        _ if id >= OFF_BASE && id < VEL_BASE => Event::Off((id - OFF_BASE) as u8),
        _ if id >= VEL_BASE && id < SHIFT_BASE => Event::Velocity,
        _ if id >= SHIFT_BASE && id < SHIFT_BASE + l as u32 => {
            Event::Shift((id - SHIFT_BASE) as usize + 1)
        }
        _ => Event::Other, // PAD, UNK, or out of vocabulary
    }
}

/// Replays a token stream into `l` slices. Total on arbitrary streams:
/// tokens without event semantics are skipped with warnings, a dangling
/// NOTE_ON continues to segment end, and steps beyond `l` are dropped.
pub fn decode_midi_like(
    t: &EncodedTensor,
    l: usize,
    meta: &SegmentMeta,
) -> (Segment, Vec<Warning>) {
    let mut warnings = Vec::new();
    // (pitch, onset, end): onset -1 means carried from before the window.
    let mut closed: Vec<(u8, i64, usize)> = Vec::new();
    let mut active: BTreeMap<u8, i64> = BTreeMap::new();
    let mut touched = [false; 128];
    let mut cursor = 0usize;

    for (index, id) in t.token_ids().into_iter().enumerate() {
        match classify(id, l) {
            Event::On(p) => {
                if let Some(start) = active.insert(p, cursor as i64) {
                    closed.push((p, start, cursor));
                }
                touched[p as usize] = true;
            }
            Event::Off(p) => {
                if let Some(start) = active.remove(&p) {
                    closed.push((p, start, cursor));
                } else if !touched[p as usize] {
                    closed.push((p, -1, cursor));
                } else {
                    warnings.push(Warning::StrayNoteOff { index, pitch: p });
                }
                touched[p as usize] = true;
            }
            Event::Velocity => {}
            Event::Shift(k) => cursor += k,
            Event::Other => warnings.push(Warning::IgnoredToken { index, id }),
        }
    }
    for (p, start) in active {
        closed.push((p, start, l));
    }

    let mut slices = vec![TimestepSlice::default(); l];
    for (p, start, end) in closed {
        let first = start.max(0) as usize;
        for (step, slice) in slices.iter_mut().enumerate().take(end.min(l)).skip(first) {
            if step as i64 == start {
                slice.attacks.insert(p);
            } else {
                slice.continuations.insert(p);
            }
        }
    }

    (Segment::from_parts(meta, slices), warnings)
}

/// Shifts NOTE_ON/NOTE_OFF pitches by `semitones`, folding by octaves at the
/// range edges; velocity and time tokens pass through. Equals re-encoding a
/// transposed segment whenever nothing folds.
pub fn augment_midi_like(
    t: &EncodedTensor,
    semitones: i32,
) -> (EncodedTensor, Vec<Warning>) {
    let mut warnings = Vec::new();
    let ids: Vec<u32> = t
        .token_ids()
        .into_iter()
        .map(|id| {
            if id >= ON_BASE && id < OFF_BASE {
                on_id(fold_pitch((id - ON_BASE) as i32 + semitones, &mut warnings))
            } else if id >= OFF_BASE && id < VEL_BASE {
                off_id(fold_pitch((id - OFF_BASE) as i32 + semitones, &mut warnings))
            } else {
                id
            }
        })
        .collect();
    (
        EncodedTensor::from_token_ids(EncodingId::MidiLike, &ids),
        warnings,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{beats, chordify, quantize, segment, transpose_grid};
    use crate::score::{KeyLabel, Note, Score, TimestepGrid, Voice};
    use proptest::prelude::*;

    const L: usize = 10;

    fn seg_with(slices: Vec<TimestepSlice>) -> Segment {
        let mut slices = slices;
        slices.resize(L, TimestepSlice::default());
        Segment {
            piece_id: "t".into(),
            start_step: 0,
            key: KeyLabel::major(0),
            slices,
            padded: false,
        }
    }

    fn att(pitches: &[u8]) -> TimestepSlice {
        TimestepSlice {
            attacks: pitches.iter().copied().collect(),
            continuations: BTreeSet::new(),
        }
    }

    fn cont(pitches: &[u8]) -> TimestepSlice {
        TimestepSlice {
            attacks: BTreeSet::new(),
            continuations: pitches.iter().copied().collect(),
        }
    }

    #[test]
    fn vocabulary_layout_matches_id_arithmetic() {
        let v = midi_like_vocabulary(L);
        assert_eq!(v.len(), 290 + L);
        assert_eq!(v.id("NOTE_ON_0"), Some(on_id(0)));
        assert_eq!(v.id("NOTE_ON_127"), Some(on_id(127)));
        assert_eq!(v.id("NOTE_OFF_64"), Some(off_id(64)));
        assert_eq!(v.id("SET_VELOCITY_31"), Some(vel_id(31)));
        assert_eq!(v.id("TIME_SHIFT_1"), Some(shift_id(1)));
        assert_eq!(v.id(&format!("TIME_SHIFT_{L}")), Some(shift_id(L)));
    }

    #[test]
    fn two_step_note_then_silence() {
        let seg = seg_with(vec![att(&[60]), cont(&[60])]);
        let ids = encode_midi_like(&seg).token_ids();
        assert_eq!(
            ids,
            vec![
                vel_id(DEFAULT_VELOCITY_BIN),
                on_id(60),
                shift_id(2),
                off_id(60),
                shift_id(8),
            ]
        );
    }

    #[test]
    fn empty_segment_is_one_big_shift() {
        let seg = seg_with(vec![]);
        assert_eq!(encode_midi_like(&seg).token_ids(), vec![shift_id(L)]);
    }

    #[test]
    fn simultaneous_attacks_ascend() {
        let seg = seg_with(vec![att(&[64, 60])]);
        let ids = encode_midi_like(&seg).token_ids();
        assert_eq!(ids[..3], [vel_id(16), on_id(60), on_id(64)]);
    }

    #[test]
    fn carried_sound_round_trips() {
        // A pitch sounding since before the window, released mid-segment,
        // handing over to an attacked note held through the rest.
        let mut slices = vec![cont(&[55]), cont(&[55]), att(&[60])];
        slices.resize(L, cont(&[60]));
        let seg = seg_with(slices);
        let ids = encode_midi_like(&seg).token_ids();
        assert_eq!(
            ids,
            vec![
                shift_id(2),
                off_id(55),
                vel_id(16),
                on_id(60),
                shift_id(8),
            ]
        );
        let (dec, warnings) = decode_midi_like(&encode_midi_like(&seg), L, &seg.meta());
        assert!(warnings.is_empty());
        assert_eq!(dec, seg);

        // Carried through the whole window: the off trails the final shift.
        let held = seg_with(vec![cont(&[55]); L]);
        assert_eq!(
            encode_midi_like(&held).token_ids(),
            vec![shift_id(L), off_id(55)]
        );
        let (dec, warnings) = decode_midi_like(&encode_midi_like(&held), L, &held.meta());
        assert!(warnings.is_empty());
        assert_eq!(dec, held);
    }

    #[test]
    fn shift_only_stream_is_silence() {
        let t = EncodedTensor::from_token_ids(EncodingId::MidiLike, &[shift_id(3), shift_id(7)]);
        let meta = seg_with(vec![]).meta();
        let (dec, warnings) = decode_midi_like(&t, L, &meta);
        assert!(warnings.is_empty());
        assert!(dec.slices.iter().all(TimestepSlice::is_empty));
    }

    #[test]
    fn dangling_note_on_continues_to_end() {
        let t = EncodedTensor::from_token_ids(
            EncodingId::MidiLike,
            &[shift_id(4), vel_id(16), on_id(72)],
        );
        let meta = seg_with(vec![]).meta();
        let (dec, _) = decode_midi_like(&t, L, &meta);
        assert!(dec.slices[4].attacks.contains(&72));
        for step in 5..L {
            assert!(dec.slices[step].continuations.contains(&72));
        }
    }

    #[test]
    fn stray_and_junk_tokens_warn_but_never_panic() {
        let t = EncodedTensor::from_token_ids(
            EncodingId::MidiLike,
            &[0, 1, on_id(60), off_id(60), off_id(60), 9999, shift_id(1)],
        );
        let meta = seg_with(vec![]).meta();
        let (_, warnings) = decode_midi_like(&t, L, &meta);
        assert_eq!(
            warnings
                .iter()
                .filter(|w| matches!(w, Warning::IgnoredToken { .. }))
                .count(),
            3
        );
        assert_eq!(
            warnings
                .iter()
                .filter(|w| matches!(w, Warning::StrayNoteOff { .. }))
                .count(),
            1
        );
    }

    #[test]
    fn augment_shifts_only_note_tokens() {
        let seg = seg_with(vec![att(&[60]), cont(&[60])]);
        let (up, warnings) = augment_midi_like(&encode_midi_like(&seg), 5);
        assert!(warnings.is_empty());
        assert_eq!(
            up.token_ids(),
            vec![
                vel_id(DEFAULT_VELOCITY_BIN),
                on_id(65),
                shift_id(2),
                off_id(65),
                shift_id(8),
            ]
        );
        let (same, _) = augment_midi_like(&encode_midi_like(&seg), 0);
        assert_eq!(same.token_ids(), encode_midi_like(&seg).token_ids());
    }

    #[test]
    fn augment_folds_at_range_edges() {
        let seg = seg_with(vec![att(&[127])]);
        let (up, warnings) = augment_midi_like(&encode_midi_like(&seg), 2);
        // The NOTE_ON and its NOTE_OFF each fold, one warning apiece.
        assert_eq!(warnings.len(), 2);
        assert!(up.token_ids().contains(&on_id(117)));
        assert!(up.token_ids().contains(&off_id(117)));
    }

    fn arb_grid() -> impl Strategy<Value = TimestepGrid> {
        prop::collection::vec((0i64..40, 1i64..10, 36u8..84), 1..20).prop_map(|notes| {
            let score = Score {
                title: String::new(),
                key: KeyLabel::major(2),
                resolution: beats(1, 4),
                voices: vec![Voice {
                    notes: {
                        let mut v: Vec<Note> = notes
                            .iter()
                            .map(|&(o, d, p)| Note {
                                onset: beats(o, 4),
                                duration: beats(d, 4),
                                pitch: p,
                                velocity: 64,
                            })
                            .collect();
                        v.sort_by_key(|n| n.onset);
                        v
                    },
                }],
            };
            chordify(&quantize(&score, beats(1, 4)))
        })
    }

    proptest! {
        #[test]
        fn round_trip_on_all_windows(grid in arb_grid()) {
            // Later windows start mid-note, exercising the carried-sound path.
            for seg in segment(&grid, L, "prop") {
                let (dec, warnings) = decode_midi_like(&encode_midi_like(&seg), L, &seg.meta());
                prop_assert!(warnings.is_empty());
                prop_assert_eq!(dec, seg);
            }
        }

        #[test]
        fn augment_commutes_without_folds(grid in arb_grid(), t in -5i32..=6) {
            let (shifted, warnings) = transpose_grid(&grid, t);
            prop_assert!(warnings.is_empty());
            let original = segment(&grid, L, "prop");
            let moved = segment(&shifted, L, "prop");
            for (a, b) in original.iter().zip(&moved) {
                let (fast, w) = augment_midi_like(&encode_midi_like(a), t);
                prop_assert!(w.is_empty());
                prop_assert_eq!(fast.token_ids(), encode_midi_like(b).token_ids());
            }
        }
    }
}
