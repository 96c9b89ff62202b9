//! Cost of one epoch of VAE training and of the latent metrics.

use std::collections::BTreeMap;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use fifthspace::encodings::encode_piano_roll;
use fifthspace::latent::{
    camelot_order, centroid_angles, circular_kendall_tau, davies_bouldin, dunn_index, pca2,
    LatentPoint,
};
use fifthspace::vae::{encode_latent, train, LossKind, TrainConfig, TrainData, VaeParams};
use fifthspace::{KeyLabel, Mode};
use fifthspace_bench::random_segment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rolls(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| encode_piano_roll(&random_segment(i as u64, 10)).values)
        .collect()
}

fn bench_training(c: &mut Criterion) {
    let rows = rolls(64);
    let data = TrainData::Dense { rows };
    let mut config = TrainConfig::new(LossKind::BinaryCe);
    config.epochs = 1;
    config.hidden_dim = 128;
    config.latent_dim = 32;
    config.batch_size = 16;

    c.bench_function("train_one_epoch_64x2560", |b| {
        b.iter(|| train(black_box(&data), black_box(&config)).unwrap())
    });

    let params = VaeParams::init(2560, 128, 32, None, LossKind::BinaryCe, 0);
    let x = encode_piano_roll(&random_segment(1, 10)).values;
    c.bench_function("encode_latent_2560", |b| {
        b.iter(|| encode_latent(black_box(&params), black_box(&x)).unwrap())
    });
}

fn bench_latent_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let keys = camelot_order(Mode::Major);
    let mut points: Vec<LatentPoint> = Vec::new();
    for (i, &key) in keys.iter().enumerate() {
        let angle = 2.0 * std::f64::consts::PI * i as f64 / 12.0;
        for s in 0..20 {
            let mut mu: Vec<f64> = (0..32).map(|_| rng.gen_range(-0.1..0.1)).collect();
            mu[0] += 8.0 * angle.cos();
            mu[1] += 8.0 * angle.sin();
            points.push(LatentPoint {
                piece_id: "bench".into(),
                segment_index: s,
                key,
                mu,
                xy: None,
            });
        }
    }

    c.bench_function("pca2_240x32", |b| {
        b.iter_batched(
            || points.clone(),
            |mut pts| pca2(&mut pts).unwrap(),
            criterion::BatchSize::SmallInput,
        )
    });

    pca2(&mut points).unwrap();
    let groups: BTreeMap<KeyLabel, Vec<(f64, f64)>> =
        points.iter().fold(BTreeMap::new(), |mut acc, p| {
            acc.entry(p.key).or_default().push(p.xy.unwrap());
            acc
        });

    c.bench_function("davies_bouldin_12x20", |b| {
        b.iter(|| davies_bouldin(black_box(&groups)))
    });
    c.bench_function("dunn_12x20", |b| b.iter(|| dunn_index(black_box(&groups))));
    let angles = centroid_angles(&groups).unwrap();
    c.bench_function("circular_kendall_tau", |b| {
        b.iter(|| circular_kendall_tau(black_box(&keys), black_box(&angles)).unwrap())
    });
}

criterion_group!(training, bench_training, bench_latent_metrics);
criterion_main!(training);
