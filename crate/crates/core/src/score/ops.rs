//! Grid operations: quantization, chordification, transposition, windowing.

use std::collections::BTreeSet;

use num_rational::Ratio;

use super::{Beats, Score, Segment, TimestepGrid, TimestepSlice};
use crate::Warning;

/// Step index for a beat position: round-half-up of `pos / resolution`.
fn step_of(pos: Beats, resolution: Beats) -> i64 {
    (pos / resolution + Ratio::new(1, 2)).floor().to_integer()
}

/// Flattens a score onto a grid of attack/continuation pitch sets.
///
/// A note covers steps `round(onset/res)` through `round(end/res) - 1`; the
/// first covered step is an attack and the rest are continuations. A note
/// that rounds to zero steps still occupies its attack step. Where voices
/// collide on a pitch, the attack wins.
pub fn quantize(score: &Score, resolution: Beats) -> TimestepGrid {
    assert!(
        resolution > Beats::from_integer(0),
        "resolution must be positive"
    );
    let mut attacks: Vec<BTreeSet<u8>> = Vec::new();
    let mut continuations: Vec<BTreeSet<u8>> = Vec::new();

    let ensure = |len: usize, a: &mut Vec<BTreeSet<u8>>, c: &mut Vec<BTreeSet<u8>>| {
        while a.len() < len {
            a.push(BTreeSet::new());
            c.push(BTreeSet::new());
        }
    };

    for voice in &score.voices {
        for note in &voice.notes {
            let start = step_of(note.onset, resolution).max(0) as usize;
            let end = step_of(note.onset + note.duration, resolution).max(0) as usize;
            let end = end.max(start + 1);
            ensure(end, &mut attacks, &mut continuations);
            attacks[start].insert(note.pitch);
            for held in &mut continuations[start + 1..end] {
                held.insert(note.pitch);
            }
        }
    }

    let steps = attacks
        .into_iter()
        .zip(continuations)
        .map(|(a, mut c)| {
            c = c.difference(&a).copied().collect();
            TimestepSlice {
                attacks: a,
                continuations: c,
            }
        })
        .collect();

    TimestepGrid {
        resolution,
        key: score.key,
        steps,
    }
}

/// Merges vertical sonorities: in any slice where at least one pitch
/// attacks, held pitches are re-attacked too, so ties under a moving voice
/// are split into separate sonorities.
pub fn chordify(grid: &TimestepGrid) -> TimestepGrid {
    let steps = grid
        .steps
        .iter()
        .map(|slice| {
            if slice.attacks.is_empty() {
                slice.clone()
            } else {
                TimestepSlice {
                    attacks: slice.sounding(),
                    continuations: BTreeSet::new(),
                }
            }
        })
        .collect();
    TimestepGrid {
        resolution: grid.resolution,
        key: grid.key,
        steps,
    }
}

/// Folds a shifted pitch back into 0..=127 by octaves.
pub(crate) fn fold_pitch(shifted: i32, warnings: &mut Vec<Warning>) -> u8 {
    if (0..=127).contains(&shifted) {
        return shifted as u8;
    }
    let mut p = shifted;
    while p < 0 {
        p += 12;
    }
    while p > 127 {
        p -= 12;
    }
    warnings.push(Warning::OctaveFold {
        pitch: shifted,
        folded: p as u8,
    });
    p as u8
}

/// Shifts every pitch by `semitones` and moves the key tonic accordingly.
/// Pitches pushed outside 0..=127 fold back by octaves, with a warning each.
pub fn transpose_grid(grid: &TimestepGrid, semitones: i32) -> (TimestepGrid, Vec<Warning>) {
    let mut warnings = Vec::new();
    let shift_set = |set: &BTreeSet<u8>, warnings: &mut Vec<Warning>| -> BTreeSet<u8> {
        set.iter()
            .map(|&p| fold_pitch(p as i32 + semitones, warnings))
            .collect()
    };
    let steps = grid
        .steps
        .iter()
        .map(|slice| {
            let attacks = shift_set(&slice.attacks, &mut warnings);
            let continuations: BTreeSet<u8> = shift_set(&slice.continuations, &mut warnings)
                .difference(&attacks)
                .copied()
                .collect();
            TimestepSlice {
                attacks,
                continuations,
            }
        })
        .collect();
    (
        TimestepGrid {
            resolution: grid.resolution,
            key: grid.key.transposed(semitones),
            steps,
        },
        warnings,
    )
}

/// Cuts the grid into consecutive windows of `l` slices. A trailing short
/// window is right-padded with empty slices and marked `padded`.
pub fn segment(grid: &TimestepGrid, l: usize, piece_id: &str) -> Vec<Segment> {
    assert!(l >= 1, "segment length must be at least 1");
    let mut out = Vec::new();
    let mut start = 0;
    while start < grid.steps.len() {
        let end = (start + l).min(grid.steps.len());
        let mut slices: Vec<TimestepSlice> = grid.steps[start..end].to_vec();
        let padded = slices.len() < l;
        slices.resize(l, TimestepSlice::default());
        out.push(Segment {
            piece_id: piece_id.to_string(),
            start_step: start,
            key: grid.key,
            slices,
            padded,
        });
        start += l;
    }
    out
}
