//! Shared input builders for the benchmark suite.

use fifthspace::{KeyLabel, Segment, TimestepSlice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A segment with `len` steps of pseudo-random triads, pitched well inside
/// the Tonnetz range so every codec accepts it. Attacks and continuations
/// stay disjoint and continuations always extend a sounding pitch.
pub fn random_segment(seed: u64, len: usize) -> Segment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slices = Vec::with_capacity(len);
    let mut held: Vec<u8> = Vec::new();
    for _ in 0..len {
        let mut slice = TimestepSlice::default();
        if rng.gen_bool(0.3) {
            held.clear();
        }
        if rng.gen_bool(0.7) {
            let root = rng.gen_range(40u8..60);
            for interval in [0u8, 4, 7, 12] {
                slice.attacks.insert(root + interval);
            }
        }
        for &p in &held {
            if !slice.attacks.contains(&p) {
                slice.continuations.insert(p);
            }
        }
        held = slice.sounding().into_iter().collect();
        slices.push(slice);
    }
    Segment {
        piece_id: format!("bench-{seed}"),
        start_step: 0,
        key: KeyLabel::major(0),
        slices,
        padded: false,
    }
}
