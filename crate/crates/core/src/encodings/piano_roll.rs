//! Piano roll: (L, 256) binary planes, attacks in columns 0-127 and
//! continuations in columns 128-255. Transposition is an independent
//! rotation of each half's columns.

use std::collections::BTreeSet;

use super::{CodecError, ElementKind, EncodedTensor, EncodingId};
use crate::score::{Segment, SegmentMeta, TimestepSlice};

pub const WIDTH: usize = 256;

pub fn encode_piano_roll(seg: &Segment) -> EncodedTensor {
    let mut t = EncodedTensor::zeros(EncodingId::PianoRoll, ElementKind::Binary, seg.len(), WIDTH);
    for (i, slice) in seg.slices.iter().enumerate() {
        for &p in &slice.attacks {
            *t.at_mut(i, p as usize) = 1.0;
        }
        for &p in &slice.continuations {
            *t.at_mut(i, 128 + p as usize) = 1.0;
        }
    }
    t
}

/// Thresholds each cell at `threshold` (inclusive) and rebuilds the slices.
/// Binary input decodes back exactly; float model output decodes by the same
/// rule. A pitch both attacked and continued in one step counts as an attack.
pub fn decode_piano_roll(
    t: &EncodedTensor,
    threshold: f64,
    meta: &SegmentMeta,
) -> Result<Segment, CodecError> {
    if t.width() != WIDTH {
        return Err(CodecError::WidthError {
            encoding: EncodingId::PianoRoll,
            expected: WIDTH,
            got: t.width(),
        });
    }
    let slices = (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            let attacks: BTreeSet<u8> = (0..128u8)
                .filter(|&p| row[p as usize] >= threshold)
                .collect();
            let continuations = (0..128u8)
                .filter(|&p| row[128 + p as usize] >= threshold && !attacks.contains(&p))
                .collect();
            TimestepSlice {
                attacks,
                continuations,
            }
        })
        .collect();
    Ok(Segment::from_parts(meta, slices))
}

/// Rotates columns 0-127 and 128-255 by `semitones` each, wrapping at the
/// half boundaries. Matches grid transposition whenever no pitch would fold.
pub fn augment_piano_roll(t: &EncodedTensor, semitones: i32) -> Result<EncodedTensor, CodecError> {
    if t.width() != WIDTH {
        return Err(CodecError::WidthError {
            encoding: EncodingId::PianoRoll,
            expected: WIDTH,
            got: t.width(),
        });
    }
    let mut out = t.clone();
    for row in 0..t.rows() {
        for half in [0usize, 128] {
            for col in 0..128usize {
                let dst = (col as i32 + semitones).rem_euclid(128) as usize;
                *out.at_mut(row, half + dst) = t.at(row, half + col);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{chordify, quantize, segment, transpose_grid, KeyLabel};
    use crate::score::{beats, Note, Score, Voice};
    use proptest::prelude::*;

    fn seg_with(slices: Vec<TimestepSlice>) -> Segment {
        Segment {
            piece_id: "t".into(),
            start_step: 0,
            key: KeyLabel::major(0),
            slices,
            padded: false,
        }
    }

    #[test]
    fn attack_and_continuation_columns() {
        let seg = seg_with(vec![
            TimestepSlice {
                attacks: [60].into(),
                continuations: BTreeSet::new(),
            },
            TimestepSlice {
                attacks: BTreeSet::new(),
                continuations: [60].into(),
            },
            TimestepSlice::default(),
        ]);
        let t = encode_piano_roll(&seg);
        assert_eq!(t.shape, (3, 256));
        assert_eq!(t.at(0, 60), 1.0);
        assert_eq!(t.row(0).iter().sum::<f64>(), 1.0);
        assert_eq!(t.at(1, 188), 1.0);
        assert_eq!(t.row(2).iter().sum::<f64>(), 0.0);
    }

    #[test]
    fn column_sums_count_set_sizes() {
        let seg = seg_with(vec![TimestepSlice {
            attacks: [60, 64, 67].into(),
            continuations: [48, 52].into(),
        }]);
        let t = encode_piano_roll(&seg);
        assert_eq!(t.row(0).iter().sum::<f64>(), 5.0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let seg = seg_with(vec![TimestepSlice::default()]);
        let mut t = encode_piano_roll(&seg);
        t.kind = ElementKind::Float;
        t.values[40] = 0.49;
        let dec = decode_piano_roll(&t, 0.5, &seg.meta()).unwrap();
        assert!(dec.slices[0].is_empty());
        t.values[40] = 0.5;
        let dec = decode_piano_roll(&t, 0.5, &seg.meta()).unwrap();
        assert_eq!(dec.slices[0].attacks, [40].into());
    }

    #[test]
    fn wrap_at_column_127() {
        let seg = seg_with(vec![TimestepSlice {
            attacks: [127].into(),
            continuations: BTreeSet::new(),
        }]);
        let shifted = augment_piano_roll(&encode_piano_roll(&seg), 1).unwrap();
        assert_eq!(shifted.at(0, 0), 1.0);
        assert_eq!(shifted.row(0).iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn exhaustive_single_pitch_rotation() {
        for p in 0u8..=127 {
            for t in [-5i32, -1, 0, 6] {
                let seg = seg_with(vec![TimestepSlice {
                    attacks: [p].into(),
                    continuations: BTreeSet::new(),
                }]);
                let rotated = augment_piano_roll(&encode_piano_roll(&seg), t).unwrap();
                let expect = (p as i32 + t).rem_euclid(128) as usize;
                assert_eq!(rotated.at(0, expect), 1.0);
            }
        }
    }

    fn arb_segment() -> impl Strategy<Value = Segment> {
        prop::collection::vec((0i64..32, 1i64..8, 36u8..84), 1..16).prop_map(|notes| {
            let score = Score {
                title: String::new(),
                key: KeyLabel::major(0),
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
            let grid = chordify(&quantize(&score, beats(1, 4)));
            segment(&grid, 10, "prop").into_iter().next().unwrap()
        })
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(seg in arb_segment()) {
            let dec = decode_piano_roll(&encode_piano_roll(&seg), 0.5, &seg.meta()).unwrap();
            prop_assert_eq!(dec, seg);
        }

        #[test]
        fn augment_commutes_with_transposition(seg in arb_segment(), t in -5i32..=6) {
            // Pitches 36..84 shifted by at most 6 never fold.
            let grid = crate::score::TimestepGrid {
                resolution: beats(1, 4),
                key: seg.key,
                steps: seg.slices.clone(),
            };
            let (shifted, warnings) = transpose_grid(&grid, t);
            prop_assert!(warnings.is_empty());
            let mut moved = seg.clone();
            moved.slices = shifted.steps;
            moved.key = shifted.key;
            prop_assert_eq!(
                augment_piano_roll(&encode_piano_roll(&seg), t).unwrap().values,
                encode_piano_roll(&moved).values
            );
        }
    }
}
