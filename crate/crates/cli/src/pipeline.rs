//! The experiment pipeline: corpus to cache to model to latent reports.

use std::collections::BTreeSet;

use fifthspace::encodings::{
    abc_vocabulary, augment_midi_like, augment_piano_roll, encode_abc, encode_midi_like,
    encode_piano_roll, encode_tonnetz, midi_like_vocabulary, PAD_ID,
};
use fifthspace::latent::{
    camelot_order, centroid_angles, circular_kendall_tau, davies_bouldin, dunn_index, pca2,
    LatentPoint, LatentReport,
};
use fifthspace::score::{
    chordify, parse_score_json, parse_smf, quantize, segment, transpose_grid, SegmentMeta,
};
use fifthspace::spectral::{encode_pc_dft, encode_pitch_dft, rotate_phases};
use fifthspace::vae::{
    decode_latent, encode_latent, encode_latent_tokens, reconstruction_metrics, train, Ex,
    LossBreakdown, ReconMetrics, VaeParams,
};
use fifthspace::{
    ElementKind, EncodedTensor, EncodingId, KeyLabel, Segment, TimestepGrid, Vocabulary, Warning,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cache::{CacheEntry, TensorCache};
use crate::config::ExperimentConfig;
use crate::CliError;

/// The twelve semitone offsets covering every key of the piece's mode.
pub const TRANSPOSITIONS: [i8; 12] = [-5, -4, -3, -2, -1, 0, 1, 2, 3, 4, 5, 6];

/// A parsed piece: quantized, chordified, in its original key.
#[derive(Debug, Clone)]
pub struct Piece {
    pub id: String,
    pub grid: TimestepGrid,
}

/// Reads every `.mid`/`.midi`/`.json` score under `corpus_dir`, quantizes at
/// the configured resolution, and chordifies. Files sort by name so piece
/// order (and everything seeded downstream) is stable.
pub fn load_corpus(config: &ExperimentConfig) -> Result<(Vec<Piece>, Vec<String>), CliError> {
    let mut paths: Vec<_> = std::fs::read_dir(&config.corpus_dir)
        .map_err(|e| CliError::Data(format!("corpus {}: {e}", config.corpus_dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("mid" | "midi" | "json")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!(
            "no .mid/.midi/.json scores in {}",
            config.corpus_dir.display()
        )));
    }

    let mut pieces = Vec::with_capacity(paths.len());
    let mut notes = Vec::new();
    for path in &paths {
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("piece")
            .to_string();
        let data_err = |e: String| CliError::Data(format!("{}: {e}", path.display()));
        let (score, warnings) = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let text = std::fs::read_to_string(path)?;
            parse_score_json(&text).map_err(|e| data_err(e.to_string()))?
        } else {
            let bytes = std::fs::read(path)?;
            parse_smf(&bytes).map_err(|e| data_err(e.to_string()))?
        };
        for w in warnings {
            notes.push(format!("{id}: {w}"));
        }
        let grid = chordify(&quantize(&score, config.resolution));
        pieces.push(Piece { id, grid });
    }
    Ok((pieces, notes))
}

/// Piece-level split: seeded shuffle, first ceil(ratio*n) pieces train.
pub fn split_dataset(pieces: &[Piece], ratio: f64, seed: u64) -> (Vec<&Piece>, Vec<&Piece>) {
    assert!(pieces.len() >= 2, "need at least two pieces to split");
    let mut order: Vec<usize> = (0..pieces.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let n_train = (ratio * pieces.len() as f64).ceil() as usize;
    let train = order[..n_train].iter().map(|&i| &pieces[i]).collect();
    let test = order[n_train..].iter().map(|&i| &pieces[i]).collect();
    (train, test)
}

fn encode_one(encoding: EncodingId, seg: &Segment) -> Result<EncodedTensor, CliError> {
    Ok(match encoding {
        EncodingId::PianoRoll => encode_piano_roll(seg),
        EncodingId::MidiLike => encode_midi_like(seg),
        EncodingId::Abc => encode_abc(seg),
        EncodingId::Tonnetz => encode_tonnetz(seg)?,
        EncodingId::PcDft => encode_pc_dft(seg),
        EncodingId::PitchDft => encode_pitch_dft(seg),
    })
}

/// Encodings whose tensors transpose directly, without re-encoding.
fn has_fast_path(encoding: EncodingId) -> bool {
    matches!(
        encoding,
        EncodingId::PianoRoll | EncodingId::MidiLike | EncodingId::PcDft | EncodingId::PitchDft
    )
}

fn augment_one(
    encoding: EncodingId,
    tensor: &EncodedTensor,
    semitones: i32,
) -> Result<(EncodedTensor, Vec<Warning>), CliError> {
    Ok(match encoding {
        EncodingId::PianoRoll => (augment_piano_roll(tensor, semitones)?, Vec::new()),
        EncodingId::MidiLike => augment_midi_like(tensor, semitones),
        EncodingId::PcDft | EncodingId::PitchDft => (rotate_phases(tensor, semitones), Vec::new()),
        other => {
            return Err(CliError::Data(format!(
                "{} has no augmentation fast path",
                other.as_str()
            )))
        }
    })
}

/// Token list for the encoding, when it is token-based.
pub fn vocabulary_for(encoding: EncodingId, l: usize) -> Option<Vocabulary> {
    match encoding {
        EncodingId::MidiLike => Some(midi_like_vocabulary(l)),
        EncodingId::Abc => Some(abc_vocabulary(l)),
        _ => None,
    }
}

/// Encodes all twelve transpositions of every training piece. Fast-path
/// encodings augment the original-key tensors; the rest re-encode the
/// transposed grid. Entries are ordered by piece, then transposition, then
/// segment, so the cache bytes are a pure function of config + corpus.
pub fn build_cache(
    train: &[&Piece],
    config: &ExperimentConfig,
) -> Result<(TensorCache, Vec<String>), CliError> {
    let encoding = config.encoding;
    let l = config.segment_length;
    let per_piece: Vec<(Vec<CacheEntry>, Vec<String>)> = train
        .par_iter()
        .map(|piece| -> Result<(Vec<CacheEntry>, Vec<String>), CliError> {
            let mut entries = Vec::new();
            let mut notes = Vec::new();
            let base: Vec<(SegmentMeta, EncodedTensor)> = segment(&piece.grid, l, &piece.id)
                .iter()
                .map(|s| Ok((s.meta(), encode_one(encoding, s)?)))
                .collect::<Result<_, CliError>>()?;
            for &t in &TRANSPOSITIONS {
                if t == 0 || has_fast_path(encoding) {
                    for (meta, tensor) in &base {
                        let (tensor, warnings) = if t == 0 {
                            (tensor.clone(), Vec::new())
                        } else {
                            augment_one(encoding, tensor, t as i32)?
                        };
                        for w in warnings {
                            notes.push(format!("{} t{t:+}: {w}", piece.id));
                        }
                        let mut meta = meta.clone();
                        meta.key = meta.key.transposed(t as i32);
                        entries.push(CacheEntry {
                            piece_id: piece.id.clone(),
                            transposition: t,
                            meta,
                            tensor,
                        });
                    }
                } else {
                    let (grid_t, warnings) = transpose_grid(&piece.grid, t as i32);
                    for w in warnings {
                        notes.push(format!("{} t{t:+}: {w}", piece.id));
                    }
                    for s in segment(&grid_t, l, &piece.id) {
                        entries.push(CacheEntry {
                            piece_id: piece.id.clone(),
                            transposition: t,
                            meta: s.meta(),
                            tensor: encode_one(encoding, &s)?,
                        });
                    }
                }
            }
            Ok((entries, notes))
        })
        .collect::<Result<_, _>>()?;

    let mut entries = Vec::new();
    let mut notes = Vec::new();
    for (e, n) in per_piece {
        entries.extend(e);
        notes.extend(n);
    }
    Ok((
        TensorCache {
            encoding,
            segment_length: l,
            entries,
        },
        notes,
    ))
}

/// Cache entries to a uniformly-shaped training set. Token streams pad to
/// the longest stream in the cache with PAD.
pub fn train_data_from_cache(cache: &TensorCache) -> Result<fifthspace::vae::TrainData, CliError> {
    if cache.entries.is_empty() {
        return Err(CliError::Data("cache holds no segments".into()));
    }
    if cache.entries[0].tensor.kind == ElementKind::Token {
        let vocab = vocabulary_for(cache.encoding, cache.segment_length)
            .expect("token encodings have a vocabulary")
            .len();
        let token_len = cache
            .entries
            .iter()
            .map(|e| e.tensor.rows())
            .max()
            .unwrap_or(0);
        let rows = cache
            .entries
            .iter()
            .map(|e| {
                let mut ids = e.tensor.token_ids();
                ids.resize(token_len, PAD_ID);
                ids
            })
            .collect();
        Ok(fifthspace::vae::TrainData::Tokens {
            rows,
            vocab_size: vocab,
        })
    } else {
        let rows = cache.entries.iter().map(|e| e.tensor.values.clone()).collect();
        Ok(fifthspace::vae::TrainData::Dense { rows })
    }
}

/// Trains the configured VAE on a built cache.
pub fn train_model(
    config: &ExperimentConfig,
    cache: &TensorCache,
) -> Result<(VaeParams, Vec<LossBreakdown>), CliError> {
    let data = train_data_from_cache(cache)?;
    Ok(train(&data, &config.train)?)
}

/// One scatter point with its provenance, as written to points.csv.
#[derive(Debug, Clone)]
pub struct PointRecord {
    pub piece_id: String,
    pub transposition: i8,
    pub segment_index: usize,
    pub key: KeyLabel,
    pub xy: (f64, f64),
}

/// Everything the evaluation produces for one test piece.
#[derive(Debug, Clone)]
pub struct PieceEval {
    pub report: LatentReport,
    pub recon: ReconMetrics,
    pub points: Vec<PointRecord>,
}

/// The model's padded token length, when it is a token model.
fn token_len(params: &VaeParams) -> Option<usize> {
    params.vocab_size.map(|v| params.input_dim / v)
}

fn padded_ids(tensor: &EncodedTensor, token_len: usize, notes: &mut Vec<String>) -> Vec<u32> {
    let mut ids = tensor.token_ids();
    if ids.len() > token_len {
        notes.push(format!(
            "token stream of {} exceeds the model's {token_len}; truncated",
            ids.len()
        ));
        ids.truncate(token_len);
    }
    ids.resize(token_len, PAD_ID);
    ids
}

#[allow(clippy::type_complexity)]
fn embed_mu(
    params: &VaeParams,
    tensor: &EncodedTensor,
    notes: &mut Vec<String>,
) -> Result<(Vec<f64>, Vec<f64>, Vec<u32>), CliError> {
    if tensor.kind == ElementKind::Token {
        let tl = token_len(params).ok_or_else(|| {
            CliError::Data("token tensor on a dense model; encoding mismatch".into())
        })?;
        let ids = padded_ids(tensor, tl, notes);
        let (mu, lv) = encode_latent_tokens(params, &ids)?;
        Ok((mu, lv, ids))
    } else {
        let (mu, lv) = encode_latent(params, &tensor.values)?;
        Ok((mu, lv, Vec::new()))
    }
}

/// Embeds all twelve transpositions of one test piece, projects to 2-D,
/// and scores the latent layout. Reconstruction metrics come from the
/// original-key segments, decoding z = mu (no sampling at eval).
pub fn evaluate_piece(
    config: &ExperimentConfig,
    params: &VaeParams,
    piece: &Piece,
) -> Result<(PieceEval, Vec<String>), CliError> {
    let l = config.segment_length;
    let mut notes = Vec::new();
    let mut points: Vec<LatentPoint> = Vec::new();
    let mut provenance: Vec<(i8, usize)> = Vec::new();

    for &t in &TRANSPOSITIONS {
        let (grid_t, warnings) = transpose_grid(&piece.grid, t as i32);
        for w in warnings {
            notes.push(format!("{} t{t:+}: {w}", piece.id));
        }
        for (si, seg) in segment(&grid_t, l, &piece.id).iter().enumerate() {
            let tensor = encode_one(config.encoding, seg)?;
            let (mu, _, _) = embed_mu(params, &tensor, &mut notes)?;
            points.push(LatentPoint {
                piece_id: piece.id.clone(),
                segment_index: si,
                key: seg.key,
                mu,
                xy: None,
            });
            provenance.push((t, si));
        }
    }
    if points.is_empty() {
        return Err(CliError::Data(format!("{}: no segments to evaluate", piece.id)));
    }

    let explained_variance = pca2(&mut points)
        .map_err(|e| CliError::Numeric(format!("{}: {e}", piece.id)))?;
    let mut groups: std::collections::BTreeMap<KeyLabel, Vec<(f64, f64)>> = Default::default();
    for p in &points {
        groups.entry(p.key).or_default().push(p.xy.expect("pca2 set xy"));
    }
    let db = davies_bouldin(&groups);
    let dunn = dunn_index(&groups);
    let angles =
        centroid_angles(&groups).map_err(|e| CliError::Numeric(format!("{}: {e}", piece.id)))?;
    let order = camelot_order(piece.grid.key.mode);
    let tau = circular_kendall_tau(&order, &angles)
        .map_err(|e| CliError::Numeric(format!("{}: {e}", piece.id)))?;

    let mut acc = 0.0;
    let mut mse = 0.0;
    let mut kld = 0.0;
    let base = segment(&piece.grid, l, &piece.id);
    for seg in &base {
        let tensor = encode_one(config.encoding, seg)?;
        let (mu, _, ids) = embed_mu(params, &tensor, &mut notes)?;
        let xhat = decode_latent(params, &mu)?;
        let m = if tensor.kind == ElementKind::Token {
            reconstruction_metrics(config.encoding, Ex::Tokens(&ids), &xhat)
        } else {
            reconstruction_metrics(config.encoding, Ex::Dense(&tensor.values), &xhat)
        };
        acc += m.accuracy;
        mse += m.mse;
        kld += m.kl_div;
    }
    let n = base.len() as f64;
    let recon = ReconMetrics {
        accuracy: acc / n,
        mse: mse / n,
        kl_div: kld / n,
    };

    let records = points
        .iter()
        .zip(&provenance)
        .map(|(p, &(t, si))| PointRecord {
            piece_id: p.piece_id.clone(),
            transposition: t,
            segment_index: si,
            key: p.key,
            xy: p.xy.expect("pca2 set xy"),
        })
        .collect();

    Ok((
        PieceEval {
            report: LatentReport {
                piece_id: piece.id.clone(),
                davies_bouldin: db.score,
                davies_bouldin_degenerate: db.coincident_centroids,
                dunn,
                tau,
                centroid_angles: angles,
                explained_variance,
            },
            recon,
            points: records,
        },
        notes,
    ))
}

/// The full experiment's results, before any file is written.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub train_pieces: Vec<String>,
    pub test_pieces: Vec<String>,
    pub history: Vec<LossBreakdown>,
    pub evals: Vec<PieceEval>,
    pub notes: Vec<String>,
}

/// Corpus to reports in one call. `params` skips training (checkpoint
/// evaluation); otherwise the model trains on the freshly built cache.
pub fn run_experiment(
    config: &ExperimentConfig,
    params: Option<VaeParams>,
) -> Result<ExperimentOutput, CliError> {
    let (pieces, mut notes) = load_corpus(config)?;
    if pieces.len() < 2 {
        return Err(CliError::Data(format!(
            "need at least 2 pieces to split, found {}",
            pieces.len()
        )));
    }
    let (train_ps, test_ps) = split_dataset(&pieces, config.split_ratio, config.seed);
    if test_ps.is_empty() {
        return Err(CliError::Data(
            "test split is empty; lower split_ratio".into(),
        ));
    }

    let (params, history) = match params {
        Some(p) => {
            if p.loss_kind != config.loss_kind() {
                return Err(CliError::Data(
                    "checkpoint loss kind does not match the configured encoding".into(),
                ));
            }
            (p, Vec::new())
        }
        None => {
            let (cache, cache_notes) = build_cache(&train_ps, config)?;
            notes.extend(cache_notes);
            let test_ids: BTreeSet<&str> = test_ps.iter().map(|p| p.id.as_str()).collect();
            assert!(
                cache.entries.iter().all(|e| !test_ids.contains(e.piece_id.as_str())),
                "split hygiene: a test piece leaked into the training cache"
            );
            train_model(config, &cache)?
        }
    };

    let results: Vec<(PieceEval, Vec<String>)> = test_ps
        .par_iter()
        .map(|piece| evaluate_piece(config, &params, piece))
        .collect::<Result<_, _>>()?;
    let mut evals = Vec::with_capacity(results.len());
    for (eval, n) in results {
        evals.push(eval);
        notes.extend(n);
    }

    Ok(ExperimentOutput {
        train_pieces: train_ps.iter().map(|p| p.id.clone()).collect(),
        test_pieces: test_ps.iter().map(|p| p.id.clone()).collect(),
        history,
        evals,
        notes,
    })
}
