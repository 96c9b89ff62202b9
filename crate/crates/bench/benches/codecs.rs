//! Encode/decode throughput for all six codecs at the default segment
//! length, plus the transposition fast paths.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fifthspace::encodings::{
    augment_midi_like, augment_piano_roll, decode_abc, decode_midi_like, decode_piano_roll,
    decode_tonnetz, encode_abc, encode_midi_like, encode_piano_roll, encode_tonnetz,
    TonnetzDecodeRule,
};
use fifthspace::score::SegmentMeta;
use fifthspace::spectral::{
    decode_pc_dft, decode_pitch_dft, encode_pc_dft, encode_pitch_dft, rotate_phases,
};
use fifthspace_bench::random_segment;

const L: usize = 10;

fn meta(seg: &fifthspace::Segment) -> SegmentMeta {
    SegmentMeta {
        piece_id: seg.piece_id.clone(),
        start_step: seg.start_step,
        key: seg.key,
        padded: seg.padded,
    }
}

fn bench_codecs(c: &mut Criterion) {
    let seg = random_segment(7, L);
    let m = meta(&seg);

    c.bench_function("encode_piano_roll", |b| {
        b.iter(|| encode_piano_roll(black_box(&seg)))
    });
    let roll = encode_piano_roll(&seg);
    c.bench_function("decode_piano_roll", |b| {
        b.iter(|| decode_piano_roll(black_box(&roll), 0.5, &m).unwrap())
    });
    c.bench_function("augment_piano_roll", |b| {
        b.iter(|| augment_piano_roll(black_box(&roll), 3).unwrap())
    });

    c.bench_function("encode_midi_like", |b| {
        b.iter(|| encode_midi_like(black_box(&seg)))
    });
    let tokens = encode_midi_like(&seg);
    c.bench_function("decode_midi_like", |b| {
        b.iter(|| decode_midi_like(black_box(&tokens), L, &m))
    });
    c.bench_function("augment_midi_like", |b| {
        b.iter(|| augment_midi_like(black_box(&tokens), 3))
    });

    c.bench_function("encode_abc", |b| b.iter(|| encode_abc(black_box(&seg))));
    let abc = encode_abc(&seg);
    c.bench_function("decode_abc", |b| {
        b.iter(|| decode_abc(black_box(&abc), L, &m).unwrap())
    });

    c.bench_function("encode_tonnetz", |b| {
        b.iter(|| encode_tonnetz(black_box(&seg)).unwrap())
    });
    let tonnetz = encode_tonnetz(&seg).unwrap();
    c.bench_function("decode_tonnetz", |b| {
        b.iter(|| decode_tonnetz(black_box(&tonnetz), 0.5, TonnetzDecodeRule::AllCells, &m).unwrap())
    });

    c.bench_function("encode_pc_dft", |b| b.iter(|| encode_pc_dft(black_box(&seg))));
    let pc = encode_pc_dft(&seg);
    c.bench_function("decode_pc_dft", |b| {
        b.iter(|| decode_pc_dft(black_box(&pc), 0.5, &m).unwrap())
    });
    c.bench_function("rotate_phases_pc", |b| {
        b.iter(|| rotate_phases(black_box(&pc), 3))
    });

    c.bench_function("encode_pitch_dft", |b| {
        b.iter(|| encode_pitch_dft(black_box(&seg)))
    });
    let pitch = encode_pitch_dft(&seg);
    c.bench_function("decode_pitch_dft", |b| {
        b.iter(|| decode_pitch_dft(black_box(&pitch), 0.5, &m).unwrap())
    });
}

criterion_group!(codecs, bench_codecs);
criterion_main!(codecs);
