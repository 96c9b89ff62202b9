//! Tonnetz planes. Each step is a 24x24 binary matrix: the left 24x12 half
//! holds attacks, the right half continuations, both over the same fixed
//! cell-to-pitch table. Within a row, pitches rise by perfect fifths toward
//! the right, anchored at column 6; row pairs sit a minor third apart so the
//! triangles spanned by neighboring cells are major and minor triads. The
//! table covers C0..C#8 (MIDI 12..=113), every occurrence of a pitch is
//! activated, and the committed fixture is the source of truth.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use super::{CodecError, EncodedTensor, EncodingId};
use crate::score::{Segment, SegmentMeta, TimestepSlice};

pub const TONNETZ_ROWS: usize = 24;
pub const TONNETZ_COLS: usize = 12;
pub const TONNETZ_MIN_PITCH: u8 = 12;
pub const TONNETZ_MAX_PITCH: u8 = 113;

/// Step width: the 24x12 table twice, attacks then continuations per row.
const WIDTH: usize = TONNETZ_ROWS * TONNETZ_COLS * 2;

const TABLE_FIXTURE: &str = include_str!("../../fixtures/tonnetz_table.txt");

/// Row anchors (the column-6 pitch), in row order. Kept next to the fixture
/// so drift between the two fails the table tests.
#[cfg(test)]
const ANCHORS: [u8; TONNETZ_ROWS] = [
    54, 57, 55, 58, 56, 59, 60, 63, 61, 64, 62, 65, //
    67, 70, 68, 71, 69, 72, 73, 76, 74, 77, 75, 78,
];

#[cfg(test)]
fn build_table() -> [[u8; TONNETZ_COLS]; TONNETZ_ROWS] {
    let mut table = [[0u8; TONNETZ_COLS]; TONNETZ_ROWS];
    for (r, row) in table.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = (ANCHORS[r] as i32 + 7 * (c as i32 - 6)) as u8;
        }
    }
    table
}

/// The cell→pitch table, parsed from the committed fixture.
pub fn tonnetz_table() -> &'static [[u8; TONNETZ_COLS]; TONNETZ_ROWS] {
    static TABLE: OnceLock<[[u8; TONNETZ_COLS]; TONNETZ_ROWS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0u8; TONNETZ_COLS]; TONNETZ_ROWS];
        let mut rows = 0;
        for line in TABLE_FIXTURE.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<u8> = line
                .split_whitespace()
                .map(|t| t.parse().expect("fixture cell is a pitch"))
                .collect();
            assert_eq!(row.len(), TONNETZ_COLS, "fixture row width");
            table[rows].copy_from_slice(&row);
            rows += 1;
        }
        assert_eq!(rows, TONNETZ_ROWS, "fixture row count");
        table
    })
}

fn positions_index() -> &'static [BTreeSet<(u8, u8)>; 128] {
    static INDEX: OnceLock<[BTreeSet<(u8, u8)>; 128]> = OnceLock::new();
    INDEX.get_or_init(|| {
        let mut index: [BTreeSet<(u8, u8)>; 128] = std::array::from_fn(|_| BTreeSet::new());
        for (r, row) in tonnetz_table().iter().enumerate() {
            for (c, &pitch) in row.iter().enumerate() {
                index[pitch as usize].insert((r as u8, c as u8));
            }
        }
        index
    })
}

/// All `(row, col)` cells assigned to `pitch`; between one and four cells
/// for pitches inside C0..C#8, `OutOfRange` otherwise.
pub fn tonnetz_positions(pitch: u8) -> Result<&'static BTreeSet<(u8, u8)>, CodecError> {
    let cells = &positions_index()[pitch as usize];
    if cells.is_empty() {
        return Err(CodecError::OutOfRange { pitch });
    }
    Ok(cells)
}

/// How decoding treats the duplicated cells of one pitch in model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TonnetzDecodeRule {
    /// A pitch is present only when every one of its cells is active.
    AllCells,
    /// A pitch is present when a strict majority of its cells is active.
    Majority,
}

pub fn encode_tonnetz(seg: &Segment) -> Result<EncodedTensor, CodecError> {
    let mut t = EncodedTensor::zeros(
        EncodingId::Tonnetz,
        super::ElementKind::Binary,
        seg.len(),
        WIDTH,
    );
    for (step, slice) in seg.slices.iter().enumerate() {
        for (&pitch, half) in slice
            .attacks
            .iter()
            .map(|p| (p, 0))
            .chain(slice.continuations.iter().map(|p| (p, 1)))
        {
            for &(r, c) in tonnetz_positions(pitch)? {
                *t.at_mut(
                    step,
                    r as usize * TONNETZ_COLS * 2 + half * TONNETZ_COLS + c as usize,
                ) = 1.0;
            }
        }
    }
    Ok(t)
}

pub fn decode_tonnetz(
    t: &EncodedTensor,
    threshold: f64,
    rule: TonnetzDecodeRule,
    meta: &SegmentMeta,
) -> Result<Segment, CodecError> {
    if t.width() != WIDTH {
        return Err(CodecError::WidthError {
            encoding: EncodingId::Tonnetz,
            expected: WIDTH,
            got: t.width(),
        });
    }
    let mut slices = Vec::with_capacity(t.rows());
    for step in 0..t.rows() {
        let mut slice = TimestepSlice::default();
        for pitch in TONNETZ_MIN_PITCH..=TONNETZ_MAX_PITCH {
            let cells = &positions_index()[pitch as usize];
            for (half, set) in [&mut slice.attacks, &mut slice.continuations]
                .into_iter()
                .enumerate()
            {
                let active = cells
                    .iter()
                    .filter(|&&(r, c)| {
                        t.at(
                            step,
                            r as usize * TONNETZ_COLS * 2 + half * TONNETZ_COLS + c as usize,
                        ) >= threshold
                    })
                    .count();
                let present = match rule {
                    TonnetzDecodeRule::AllCells => active == cells.len(),
                    TonnetzDecodeRule::Majority => 2 * active > cells.len(),
                };
                if present {
                    set.insert(pitch);
                }
            }
        }
        // Duplicated halves can disagree in model output; an attack claim
        // wins over a continuation claim, as in the piano roll.
        slice.continuations = &slice.continuations - &slice.attacks;
        slices.push(slice);
    }
    Ok(Segment::from_parts(meta, slices))
}
