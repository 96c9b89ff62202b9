//! DFT views of a segment. Per step, the attack and continuation sets each
//! become a binary vector (12-d pitch classes or 128-d pitches), are
//! transformed by a direct DFT, and the leading bins are stored interleaved
//! as (re, im) pairs. Transposition then becomes a phase rotation: shifting
//! a vector circularly by t multiplies bin k by exp(i·t·a_k) where a_k is
//! the phase of bin k of the unit shift, so magnitudes carry the invariant
//! content and phases the key.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::encodings::{CodecError, ElementKind, EncodedTensor, EncodingId};
use crate::score::{Segment, SegmentMeta, TimestepSlice};

/// Bins 0..=m/2 of a real-input DFT; the rest is conjugate-redundant.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub m: usize,
    pub bins: Vec<(f64, f64)>,
}

/// Per-bin rotation angles of the unit circular shift for source length m.
/// Computed from the DFT of the shifted impulse and pinned to the analytic
/// value -2*pi*k/m.
#[derive(Debug, Clone)]
pub struct ShiftPhases {
    pub m: usize,
    pub angles: Vec<f64>,
}

impl ShiftPhases {
    pub fn new(m: usize) -> Self {
        let mut impulse = vec![0.0; m];
        impulse[1 % m] = 1.0;
        let spectrum = dft_real(&impulse);
        let angles: Vec<f64> = spectrum
            .bins
            .iter()
            .enumerate()
            .map(|(k, &(re, im))| {
                let measured = im.atan2(re);
                let analytic = -2.0 * PI * k as f64 / m as f64;
                assert!(
                    (measured - analytic).abs() < 1e-12,
                    "bin {k}: {measured} vs {analytic}"
                );
                analytic
            })
            .collect();
        ShiftPhases { m, angles }
    }
}

/// Direct O(m^2) transform; m is 12 or 128 here, small enough that the
/// obvious sum doubles as its own specification.
pub fn dft_real(v: &[f64]) -> ComplexSpectrum {
    let m = v.len();
    let bins = (0..=m / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (n, &x) in v.iter().enumerate() {
                let angle = -2.0 * PI * (k * n) as f64 / m as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re, im)
        })
        .collect();
    ComplexSpectrum { m, bins }
}

/// Inverse transform after conjugate-symmetric completion; bins beyond the
/// ones supplied count as zero (dropped Nyquist, truncated tails).
pub fn idft_truncated(s: &ComplexSpectrum, m: usize) -> Vec<f64> {
    let stored = |k: usize| s.bins.get(k).copied().unwrap_or((0.0, 0.0));
    let bin = |k: usize| -> (f64, f64) {
        if k <= m / 2 {
            stored(k)
        } else {
            let (re, im) = stored(m - k);
            (re, -im)
        }
    };
    (0..m)
        .map(|n| {
            let mut acc = 0.0;
            for k in 0..m {
                let (re, im) = bin(k);
                let angle = 2.0 * PI * (k * n) as f64 / m as f64;
                acc += re * angle.cos() - im * angle.sin();
            }
            acc / m as f64
        })
        .collect()
}

const PC_BINS: usize = 7; // m/2 + 1 for m = 12
const PC_WIDTH: usize = 4 * PC_BINS; // two halves, (re, im) interleaved
const PITCH_BINS: usize = 64; // bins 0..=63 kept, Nyquist dropped
const PITCH_WIDTH: usize = 4 * PITCH_BINS;

fn pc_vector(pitches: &std::collections::BTreeSet<u8>) -> [f64; 12] {
    let mut v = [0.0; 12];
    for &p in pitches {
        v[(p % 12) as usize] = 1.0;
    }
    v
}

fn pitch_vector(pitches: &std::collections::BTreeSet<u8>) -> [f64; 128] {
    let mut v = [0.0; 128];
    for &p in pitches {
        v[p as usize] = 1.0;
    }
    v
}

fn write_bins(row: &mut [f64], offset: usize, spectrum: &ComplexSpectrum, bins: usize) {
    for k in 0..bins {
        let (re, im) = spectrum.bins[k];
        row[offset + 2 * k] = re;
        row[offset + 2 * k + 1] = im;
    }
}

/// 28 floats per step: 7 complex bins of the attack pitch-class vector,
/// then 7 of the continuation vector.
pub fn encode_pc_dft(seg: &Segment) -> EncodedTensor {
    let mut t = EncodedTensor::zeros(EncodingId::PcDft, ElementKind::Float, seg.len(), PC_WIDTH);
    for (step, slice) in seg.slices.iter().enumerate() {
        let row = &mut t.values[step * PC_WIDTH..(step + 1) * PC_WIDTH];
        write_bins(row, 0, &dft_real(&pc_vector(&slice.attacks)), PC_BINS);
        write_bins(
            row,
            2 * PC_BINS,
            &dft_real(&pc_vector(&slice.continuations)),
            PC_BINS,
        );
    }
    t
}

/// 256 floats per step: complex bins 0..=63 of the attack pitch vector,
/// then of the continuation vector. Bin 64 (Nyquist) is dropped; with the
/// handful of simultaneous notes in real slices its absence moves values by
/// well under the 0.5 decode threshold.
pub fn encode_pitch_dft(seg: &Segment) -> EncodedTensor {
    let mut t = EncodedTensor::zeros(
        EncodingId::PitchDft,
        ElementKind::Float,
        seg.len(),
        PITCH_WIDTH,
    );
    for (step, slice) in seg.slices.iter().enumerate() {
        let row = &mut t.values[step * PITCH_WIDTH..(step + 1) * PITCH_WIDTH];
        write_bins(row, 0, &dft_real(&pitch_vector(&slice.attacks)), PITCH_BINS);
        write_bins(
            row,
            2 * PITCH_BINS,
            &dft_real(&pitch_vector(&slice.continuations)),
            PITCH_BINS,
        );
    }
    t
}

fn read_half(row: &[f64], offset: usize, bins: usize, m: usize) -> ComplexSpectrum {
    ComplexSpectrum {
        m,
        bins: (0..bins)
            .map(|k| (row[offset + 2 * k], row[offset + 2 * k + 1]))
            .collect(),
    }
}

fn check_width(t: &EncodedTensor, expected: usize) -> Result<(), CodecError> {
    if t.width() != expected {
        return Err(CodecError::WidthError {
            encoding: t.encoding_id,
            expected,
            got: t.width(),
        });
    }
    Ok(())
}

/// Pitch-class-only reconstruction: each decoded class lands on the octave
/// above middle C (pc + 60). A class claimed by both halves counts as an
/// attack.
pub fn decode_pc_dft(
    t: &EncodedTensor,
    threshold: f64,
    meta: &SegmentMeta,
) -> Result<Segment, CodecError> {
    check_width(t, PC_WIDTH)?;
    let mut slices = Vec::with_capacity(t.rows());
    for step in 0..t.rows() {
        let row = t.row(step);
        let mut slice = TimestepSlice::default();
        for (offset, set) in [(0, &mut slice.attacks), (2 * PC_BINS, &mut slice.continuations)] {
            let v = idft_truncated(&read_half(row, offset, PC_BINS, 12), 12);
            set.extend(
                v.iter()
                    .enumerate()
                    .filter(|&(_, &x)| x >= threshold)
                    .map(|(pc, _)| pc as u8 + 60),
            );
        }
        slice.continuations = &slice.continuations - &slice.attacks;
        slices.push(slice);
    }
    Ok(Segment::from_parts(meta, slices))
}

pub fn decode_pitch_dft(
    t: &EncodedTensor,
    threshold: f64,
    meta: &SegmentMeta,
) -> Result<Segment, CodecError> {
    check_width(t, PITCH_WIDTH)?;
    let mut slices = Vec::with_capacity(t.rows());
    for step in 0..t.rows() {
        let row = t.row(step);
        let mut slice = TimestepSlice::default();
        for (offset, set) in [
            (0, &mut slice.attacks),
            (2 * PITCH_BINS, &mut slice.continuations),
        ] {
            let v = idft_truncated(&read_half(row, offset, PITCH_BINS, 128), 128);
            set.extend(
                v.iter()
                    .enumerate()
                    .filter(|&(_, &x)| x >= threshold)
                    .map(|(p, _)| p as u8),
            );
        }
        slice.continuations = &slice.continuations - &slice.attacks;
        slices.push(slice);
    }
    Ok(Segment::from_parts(meta, slices))
}

/// Rotates every kept bin of both halves by `semitones` steps of the unit
/// shift: new = z * exp(i * t * a_k). For PcDft that transposes pitch
/// classes; for PitchDft it is a circular shift of the 128-pitch axis, which
/// matches transposition whenever nothing crosses the range edges.
///
/// Panics if the tensor is not one of the two DFT kinds or has the wrong
/// width; rotation has no failure modes on its actual domain.
pub fn rotate_phases(t: &EncodedTensor, semitones: i32) -> EncodedTensor {
    let (m, bins) = match t.encoding_id {
        EncodingId::PcDft => (12usize, PC_BINS),
        EncodingId::PitchDft => (128usize, PITCH_BINS),
        other => panic!("rotate_phases on non-spectral tensor {other}"),
    };
    assert_eq!(t.width(), 4 * bins, "{} width", t.encoding_id);
    let phases = ShiftPhases::new(m);
    let mut out = t.clone();
    for row in 0..out.rows() {
        for half in 0..2 {
            for k in 0..bins {
                let base = row * 4 * bins + half * 2 * bins + 2 * k;
                let z = Complex64::new(out.values[base], out.values[base + 1]);
                let rotated = z * Complex64::from_polar(1.0, semitones as f64 * phases.angles[k]);
                out.values[base] = rotated.re;
                out.values[base + 1] = rotated.im;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{transpose_grid, KeyLabel, TimestepGrid};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    const L: usize = 4;

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

    fn slice(attacks: &[u8], continuations: &[u8]) -> TimestepSlice {
        TimestepSlice {
            attacks: attacks.iter().copied().collect(),
            continuations: continuations.iter().copied().collect(),
        }
    }

    /// Independent formulation of the same sum through polar complex
    /// arithmetic, used as the oracle for dft_real.
    fn dft_oracle(v: &[f64]) -> Vec<Complex64> {
        let m = v.len();
        (0..=m / 2)
            .map(|k| {
                v.iter()
                    .enumerate()
                    .map(|(n, &x)| {
                        x * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * n as f64 / m as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn impulse_and_zero_spectra() {
        let zero = dft_real(&[0.0; 12]);
        assert!(zero.bins.iter().all(|&(re, im)| re == 0.0 && im == 0.0));
        let mut v = [0.0; 12];
        v[0] = 1.0;
        for (re, im) in dft_real(&v).bins {
            assert!((re - 1.0).abs() < 1e-12 && im.abs() < 1e-12);
        }
    }

    #[test]
    fn triad_spectrum_matches_oracle() {
        let mut v = [0.0; 12];
        for pc in [0, 4, 7] {
            v[pc] = 1.0;
        }
        let s = dft_real(&v);
        assert!((s.bins[0].0 - 3.0).abs() < 1e-12 && s.bins[0].1.abs() < 1e-12);
        for (got, want) in s.bins.iter().zip(dft_oracle(&v)) {
            assert!((got.0 - want.re).abs() < 1e-12);
            assert!((got.1 - want.im).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_round_trip_m12() {
        for mask in 0u16..(1 << 12) {
            let v: Vec<f64> = (0..12)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 })
                .collect();
            let back = idft_truncated(&dft_real(&v), 12);
            for (a, b) in v.iter().zip(&back) {
                assert!((a - b).abs() < 1e-9, "mask {mask}");
            }
        }
    }

    #[test]
    fn parseval_m12() {
        for mask in [0u16, 1, 0b1001_0001_0001, 0b1111_1111_1111, 0b0101_0101_0101] {
            let v: Vec<f64> = (0..12)
                .map(|i| if mask & (1 << i) != 0 { 1.0 } else { 0.0 })
                .collect();
            let s = dft_real(&v);
            let power: f64 = v.iter().map(|x| x * x).sum();
            let mag2 = |k: usize| s.bins[k].0.powi(2) + s.bins[k].1.powi(2);
            let spectral =
                (mag2(0) + 2.0 * (1..6).map(mag2).sum::<f64>() + mag2(6)) / 12.0;
            assert!((power - spectral).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_phase_angles_are_analytic() {
        for m in [12usize, 128] {
            let p = ShiftPhases::new(m);
            assert_eq!(p.angles.len(), m / 2 + 1);
            assert_eq!(p.angles[0], 0.0);
            for (k, &a) in p.angles.iter().enumerate() {
                assert!((a + 2.0 * PI * k as f64 / m as f64).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn pc_layout_and_dc_counts() {
        let seg = seg_with(vec![slice(&[60, 64, 67], &[]), slice(&[], &[50])]);
        let t = encode_pc_dft(&seg);
        assert_eq!(t.shape, (L, 28));
        assert_eq!(t.at(0, 0), 3.0); // attack DC = three classes
        assert_eq!(t.at(0, 1), 0.0);
        assert_eq!(t.at(1, 14), 1.0); // continuation DC on the second step
        assert!(t.row(2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pc_round_trip_is_class_level() {
        let seg = seg_with(vec![slice(&[48, 64], &[]), slice(&[], &[67, 79])]);
        let back = decode_pc_dft(&encode_pc_dft(&seg), 0.5, &seg.meta()).unwrap();
        assert_eq!(back.slices[0].attacks, BTreeSet::from([60, 64]));
        assert_eq!(back.slices[1].continuations, BTreeSet::from([67]));
    }

    #[test]
    fn pitch_round_trip_exhaustive_single_pitch() {
        for p in 0u8..=127 {
            let seg = seg_with(vec![slice(&[p], &[]), slice(&[], &[p])]);
            let t = encode_pitch_dft(&seg);
            assert_eq!(t.at(0, 0), 1.0);
            let back = decode_pitch_dft(&t, 0.5, &seg.meta()).unwrap();
            assert_eq!(back, seg, "pitch {p}");
        }
    }

    #[test]
    fn width_is_checked() {
        let t = EncodedTensor::zeros(EncodingId::PcDft, ElementKind::Float, 1, 10);
        let meta = seg_with(vec![]).meta();
        assert!(matches!(
            decode_pc_dft(&t, 0.5, &meta),
            Err(CodecError::WidthError { .. })
        ));
    }

    #[test]
    fn rotation_identities() {
        let seg = seg_with(vec![slice(&[60, 64, 67], &[72]), slice(&[], &[55])]);
        let t = encode_pc_dft(&seg);
        let same = rotate_phases(&t, 0);
        assert_eq!(same.values, t.values);
        let cycle = rotate_phases(&t, 12);
        for (a, b) in cycle.values.iter().zip(&t.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn arb_sets() -> impl Strategy<Value = Vec<(BTreeSet<u8>, BTreeSet<u8>)>> {
        prop::collection::vec(
            (
                prop::collection::btree_set(36u8..84, 0..5),
                prop::collection::btree_set(36u8..84, 0..5),
            ),
            L,
        )
    }

    fn grid_of(sets: &[(BTreeSet<u8>, BTreeSet<u8>)]) -> TimestepGrid {
        TimestepGrid {
            resolution: crate::score::beats(1, 4),
            key: KeyLabel::major(0),
            steps: sets
                .iter()
                .map(|(a, c)| TimestepSlice {
                    attacks: a.clone(),
                    continuations: c - a,
                })
                .collect(),
        }
    }

    proptest! {
        #[test]
        fn magnitude_and_dc_invariance(sets in arb_sets(), t in -12i32..=12) {
            let seg = seg_with(grid_of(&sets).steps);
            for tensor in [encode_pc_dft(&seg), encode_pitch_dft(&seg)] {
                let rotated = rotate_phases(&tensor, t);
                let pairs = tensor.width() / 2;
                for row in 0..tensor.rows() {
                    for k in 0..pairs {
                        let m0 = (tensor.at(row, 2 * k).powi(2)
                            + tensor.at(row, 2 * k + 1).powi(2))
                        .sqrt();
                        let m1 = (rotated.at(row, 2 * k).powi(2)
                            + rotated.at(row, 2 * k + 1).powi(2))
                        .sqrt();
                        prop_assert!((m0 - m1).abs() < 1e-9);
                    }
                    // DC bins sit at the start of each half.
                    for half_start in [0, tensor.width() / 2] {
                        prop_assert!(
                            (tensor.at(row, half_start) - rotated.at(row, half_start)).abs()
                                < 1e-12
                        );
                    }
                }
            }
        }

        #[test]
        fn pc_rotation_commutes_with_transposition(sets in arb_sets(), t in -12i32..=12) {
            let grid = grid_of(&sets);
            let (moved, _) = transpose_grid(&grid, t);
            let a = rotate_phases(&encode_pc_dft(&seg_with(grid.steps.clone())), t);
            let b = encode_pc_dft(&seg_with(moved.steps));
            prop_assert_eq!(a.shape, b.shape);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn pitch_rotation_commutes_without_folds(sets in arb_sets(), t in -5i32..=6) {
            let grid = grid_of(&sets);
            let (moved, warnings) = transpose_grid(&grid, t);
            prop_assert!(warnings.is_empty());
            let a = rotate_phases(&encode_pitch_dft(&seg_with(grid.steps.clone())), t);
            let b = encode_pitch_dft(&seg_with(moved.steps));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
