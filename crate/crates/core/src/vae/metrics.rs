//! Reconstruction quality per encoding family.
//!
//! Accuracy means different things per family and all three definitions are
//! intentional: token streams score argmax-vs-target per position (padding
//! included), binary planes score per-cell agreement after 0.5 thresholding,
//! and spectra score the fraction of timesteps whose decoded attack and
//! continuation sets match exactly. MSE is the elementwise mean; kl_div
//! compares the two value histograms (32 bins, epsilon-smoothed).

use std::collections::BTreeSet;

use super::Ex;
use crate::encodings::EncodingId;
use crate::spectral::{idft_truncated, ComplexSpectrum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconMetrics {
    /// Percent in [0, 100].
    pub accuracy: f64,
    pub mse: f64,
    pub kl_div: f64,
}

fn spectral_sets(row: &[f64], bins: usize, m: usize) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let half = |offset: usize| -> BTreeSet<usize> {
        let spectrum = ComplexSpectrum {
            m,
            bins: (0..bins)
                .map(|k| (row[offset + 2 * k], row[offset + 2 * k + 1]))
                .collect(),
        };
        idft_truncated(&spectrum, m)
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v >= 0.5)
            .map(|(i, _)| i)
            .collect()
    };
    (half(0), half(2 * bins))
}

fn histogram_kl(x: &[f64], y: &[f64]) -> f64 {
    const BINS: usize = 32;
    const EPS: f64 = 1e-9;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in x.iter().chain(y) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    // Degenerate or NaN range: call the distributions identical.
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return 0.0;
    }
    let count = |vals: &[f64]| -> Vec<f64> {
        let mut h = vec![EPS; BINS];
        for &v in vals {
            let idx = (((v - lo) / (hi - lo)) * BINS as f64) as usize;
            h[idx.min(BINS - 1)] += 1.0;
        }
        let total: f64 = h.iter().sum();
        h.into_iter().map(|c| c / total).collect()
    };
    let p = count(x);
    let q = count(y);
    p.iter().zip(&q).map(|(&pi, &qi)| pi * (pi / qi).ln()).sum()
}

pub fn reconstruction_metrics(encoding: EncodingId, x: Ex<'_>, xhat: &[f64]) -> ReconMetrics {
    let accuracy = match (encoding, x) {
        (EncodingId::MidiLike | EncodingId::Abc, Ex::Tokens(ids)) => {
            let v = xhat.len() / ids.len().max(1);
            let hits = ids
                .iter()
                .enumerate()
                .filter(|&(t, &id)| {
                    let block = &xhat[t * v..(t + 1) * v];
                    let argmax = block
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(i, _)| i)
                        .unwrap_or(0);
                    argmax == id as usize
                })
                .count();
            hits as f64 / ids.len().max(1) as f64
        }
        (EncodingId::PianoRoll | EncodingId::Tonnetz, Ex::Dense(v)) => {
            let hits = v
                .iter()
                .zip(xhat)
                .filter(|&(&a, &b)| (a >= 0.5) == (b >= 0.5))
                .count();
            hits as f64 / v.len().max(1) as f64
        }
        (EncodingId::PcDft | EncodingId::PitchDft, Ex::Dense(v)) => {
            let (bins, m, width) = if encoding == EncodingId::PcDft {
                (7usize, 12usize, 28usize)
            } else {
                (64, 128, 256)
            };
            let rows = v.len() / width;
            let hits = (0..rows)
                .filter(|&r| {
                    spectral_sets(&v[r * width..(r + 1) * width], bins, m)
                        == spectral_sets(&xhat[r * width..(r + 1) * width], bins, m)
                })
                .count();
            hits as f64 / rows.max(1) as f64
        }
        _ => panic!("{encoding} paired with the wrong example form"),
    };

    let dense;
    let target: &[f64] = match x {
        Ex::Dense(v) => v,
        Ex::Tokens(ids) => {
            dense = x.to_dense(xhat.len() / ids.len().max(1));
            &dense
        }
    };
    let mse = target
        .iter()
        .zip(xhat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / target.len().max(1) as f64;

    ReconMetrics {
        accuracy: accuracy * 100.0,
        mse,
        kl_div: histogram_kl(target, xhat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_reconstruction_scores_perfectly() {
        let x = vec![1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let m = reconstruction_metrics(EncodingId::PianoRoll, Ex::Dense(&x), &x);
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.kl_div, 0.0);
    }

    #[test]
    fn one_flipped_cell_in_piano_roll() {
        let x = vec![0.0; 2560];
        let mut xhat = x.clone();
        xhat[777] = 1.0;
        let m = reconstruction_metrics(EncodingId::PianoRoll, Ex::Dense(&x), &xhat);
        assert!((m.accuracy - 100.0 * 2559.0 / 2560.0).abs() < 1e-9);
        assert!((m.mse - 1.0 / 2560.0).abs() < 1e-12);
        assert!(m.kl_div > 0.0);
    }

    #[test]
    fn categorical_argmax_accuracy() {
        // Three positions, vocab 4; two argmaxes match.
        let ids = [1u32, 2, 0];
        let xhat = vec![
            0.1, 0.7, 0.1, 0.1, // argmax 1 = hit
            0.4, 0.3, 0.2, 0.1, // argmax 0, miss
            0.9, 0.05, 0.03, 0.02, // argmax 0 = hit
        ];
        let m = reconstruction_metrics(EncodingId::MidiLike, Ex::Tokens(&ids), &xhat);
        assert!((m.accuracy - 200.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_random_output_scores_near_chance() {
        let v = 8usize;
        let t = 4000usize;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let ids: Vec<u32> = (0..t).map(|_| rng.gen_range(0..v as u32)).collect();
        let xhat: Vec<f64> = (0..t * v).map(|_| rng.gen::<f64>()).collect();
        let m = reconstruction_metrics(EncodingId::Abc, Ex::Tokens(&ids), &xhat);
        let chance = 100.0 / v as f64;
        assert!(
            (m.accuracy - chance).abs() < 2.0,
            "{} vs {chance}",
            m.accuracy
        );
    }

    #[test]
    fn spectral_accuracy_counts_matching_slices() {
        use crate::score::{KeyLabel, Segment, TimestepSlice};
        use crate::spectral::encode_pc_dft;
        let mut slices = vec![TimestepSlice::default(); 4];
        slices[0].attacks.insert(60);
        slices[2].continuations.insert(67);
        let seg = Segment {
            piece_id: "m".into(),
            start_step: 0,
            key: KeyLabel::major(0),
            slices,
            padded: false,
        };
        let x = encode_pc_dft(&seg).values;
        let m = reconstruction_metrics(EncodingId::PcDft, Ex::Dense(&x), &x);
        assert_eq!(m.accuracy, 100.0);

        // Kill one slice's spectrum: 3 of 4 rows still decode identically.
        let mut xhat = x.clone();
        for v in xhat[..28].iter_mut() {
            *v = 0.0;
        }
        let m = reconstruction_metrics(EncodingId::PcDft, Ex::Dense(&x), &xhat);
        assert_eq!(m.accuracy, 75.0);
    }

    #[test]
    fn histogram_kl_is_zero_only_for_matching_distributions() {
        let a = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        assert_eq!(histogram_kl(&a, &a), 0.0);
        let b = vec![1.0, 1.0, 1.0, 1.0, 1.0];
        assert!(histogram_kl(&a, &b) > 0.1);
    }
}
