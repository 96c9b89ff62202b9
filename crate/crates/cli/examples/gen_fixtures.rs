//! Regenerates the chorale corpus in testdata/chorales/. Output is a pure
//! function of the seeds below, so the committed files never drift.
//!
//!     cargo run -p fifthspace-cli --example gen_fixtures
//!
//! Twelve four-voice pieces, eight major and four minor. Every pitch stays
//! inside [40, 79] so transposing by -5..=+6 semitones never leaves MIDI
//! range; that keeps the transposition fast paths exact on this corpus.

use std::path::PathBuf;

use fifthspace::score::{beats, chordify, parse_score_json, quantize, serialize_score, Note, Voice};
use fifthspace::{KeyLabel, Mode, Score};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Plan {
    tonic_pc: u8,
    mode: Mode,
    bars: usize,
}

/// Scale degrees of the mode, as semitone offsets from the tonic.
fn scale(mode: Mode) -> [u8; 7] {
    match mode {
        Mode::Major => [0, 2, 4, 5, 7, 9, 11],
        Mode::Minor => [0, 2, 3, 5, 7, 8, 10],
    }
}

fn in_scale(key: KeyLabel, pc: u8) -> bool {
    scale(key.mode).iter().any(|&off| (key.tonic_pc + off) % 12 == pc)
}

/// Pitch classes of the triad on scale degree `d` (0-based).
fn triad(key: KeyLabel, d: usize) -> [u8; 3] {
    let s = scale(key.mode);
    let pc = |degree: usize| (key.tonic_pc + s[degree % 7]) % 12;
    [pc(d), pc(d + 2), pc(d + 4)]
}

/// The chord tone nearest `target` within [lo, hi]; ties break downward.
fn nearest_chord_tone(chord: &[u8; 3], target: i32, lo: u8, hi: u8) -> u8 {
    let mut best = None;
    for p in lo..=hi {
        if !chord.contains(&(p % 12)) {
            continue;
        }
        let d = (p as i32 - target).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.expect("every triad has a tone in a 2-octave range").1
}

/// The nearest scale tone strictly in `dir` from `pitch`, staying in range.
fn scale_step(key: KeyLabel, pitch: u8, dir: i32, lo: u8, hi: u8) -> u8 {
    let mut next = pitch as i32 + dir;
    while !in_scale(key, next.rem_euclid(12) as u8) {
        next += dir;
    }
    next.clamp(lo as i32, hi as i32) as u8
}

fn generate(index: usize, plan: &Plan) -> Score {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + index as u64);
    let key = KeyLabel::new(plan.tonic_pc, plan.mode);

    // One chord per beat, four beats per bar, cadencing on the tonic.
    let phrases: [&[usize]; 3] = [&[0, 3, 4, 0], &[0, 5, 1, 4], &[3, 0, 4, 0]];
    let mut degrees = Vec::new();
    for bar in 0..plan.bars {
        let phrase = if bar == plan.bars - 1 {
            &[1, 4, 4, 0][..]
        } else {
            phrases[rng.gen_range(0..phrases.len())]
        };
        degrees.extend_from_slice(phrase);
    }

    // (low, high, center) per voice: bass, tenor, alto, soprano.
    let ranges: [(u8, u8, i32); 4] = [
        (40, 55, 46),
        (48, 62, 55),
        (55, 69, 62),
        (62, 79, 69),
    ];
    let mut voices = Vec::new();
    for (v, &(lo, hi, center)) in ranges.iter().enumerate() {
        let mut notes: Vec<Note> = Vec::new();
        let mut prev: Option<u8> = None;
        let mut skip_next = false;
        for (bi, &d) in degrees.iter().enumerate() {
            if skip_next {
                skip_next = false;
                continue;
            }
            let onset = beats(bi as i64, 1);
            let last = bi == degrees.len() - 1;
            let chord = triad(key, d);
            let target = prev.map_or(center, |p| p as i32) + rng.gen_range(-3..=3);
            let pitch = nearest_chord_tone(&chord, target, lo, hi);
            let note = |duration, pitch| Note {
                onset,
                duration,
                pitch,
                velocity: 72,
            };

            // Inner voices rest now and then; the outer voices never do.
            if !last && (v == 1 || v == 2) && rng.gen_bool(0.08) {
                prev = None;
                continue;
            }

            if last {
                // Final chord held a full bar.
                notes.push(note(beats(4, 1), pitch));
            } else if v == 3 && rng.gen_bool(0.3) {
                // Soprano passing motion: chord tone, then a scale step.
                let up = rng.gen_bool(0.5);
                let dir = if pitch >= hi - 2 {
                    -1
                } else if pitch <= lo + 2 || up {
                    1
                } else {
                    -1
                };
                let step = scale_step(key, pitch, dir, lo, hi);
                notes.push(note(beats(1, 2), pitch));
                notes.push(Note {
                    onset: onset + beats(1, 2),
                    duration: beats(1, 2),
                    pitch: step,
                    velocity: 72,
                });
            } else if bi + 1 < degrees.len() - 1
                && rng.gen_bool(0.15)
                && triad(key, degrees[bi + 1]).contains(&(pitch % 12))
            {
                // A common tone with the next chord holds through it.
                notes.push(note(beats(2, 1), pitch));
                skip_next = true;
            } else {
                notes.push(note(beats(1, 1), pitch));
            }
            prev = Some(pitch);
        }
        voices.push(Voice { notes });
    }

    Score {
        title: format!("Chorale No. {} in {}", index + 1, key.name()),
        key,
        resolution: beats(1, 4),
        voices,
    }
}

fn main() {
    let plans = [
        Plan { tonic_pc: 0, mode: Mode::Major, bars: 3 },
        Plan { tonic_pc: 7, mode: Mode::Major, bars: 4 },
        Plan { tonic_pc: 5, mode: Mode::Major, bars: 3 },
        Plan { tonic_pc: 2, mode: Mode::Major, bars: 4 },
        Plan { tonic_pc: 10, mode: Mode::Major, bars: 3 },
        Plan { tonic_pc: 4, mode: Mode::Major, bars: 4 },
        Plan { tonic_pc: 9, mode: Mode::Major, bars: 3 },
        Plan { tonic_pc: 3, mode: Mode::Major, bars: 4 },
        Plan { tonic_pc: 9, mode: Mode::Minor, bars: 3 },
        Plan { tonic_pc: 4, mode: Mode::Minor, bars: 4 },
        Plan { tonic_pc: 2, mode: Mode::Minor, bars: 3 },
        Plan { tonic_pc: 7, mode: Mode::Minor, bars: 4 },
    ];

    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../testdata/chorales");
    std::fs::create_dir_all(&dir).expect("create corpus dir");

    for (i, plan) in plans.iter().enumerate() {
        let score = generate(i, plan);
        let text = serialize_score(&score);

        // The file must survive its own parser and stay transposition-safe.
        let (reparsed, warnings) = parse_score_json(&text).expect("fixture parses");
        assert!(warnings.is_empty(), "fixture warned: {warnings:?}");
        assert_eq!(reparsed, score, "serialization round trip");
        for voice in &score.voices {
            for note in &voice.notes {
                assert!(
                    (40..=79).contains(&note.pitch),
                    "pitch {} escapes the safe range",
                    note.pitch
                );
            }
        }
        let grid = chordify(&quantize(&score, beats(1, 4)));
        assert!(grid.steps.len() >= 40, "piece too short: {}", grid.steps.len());

        let path = dir.join(format!("chorale_{:02}.json", i + 1));
        std::fs::write(&path, text).expect("write fixture");
        println!("{} ({} steps)", path.display(), grid.steps.len());
    }
}
