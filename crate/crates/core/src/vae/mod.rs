//! Dense variational autoencoder with hand-derived backprop.
//!
//! input → hidden (ReLU, dropout) → mu / logvar heads → z → hidden (ReLU,
//! dropout) → output head. The head and reconstruction loss follow the
//! encoding family: softmax blocks + categorical cross-entropy for token
//! streams, sigmoid + binary cross-entropy for binary planes, linear + MSE
//! for spectra. Loss = reconstruction + KL(q(z|x) ‖ N(0, I)), batch-mean.
//!
//! Everything is f64 and deterministic under a seed: one ChaCha stream
//! drives init, shuffling, dropout, and the reparameterization noise, and
//! gradients accumulate in example-index order.

mod checkpoint;
mod metrics;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
pub use metrics::{reconstruction_metrics, ReconMetrics};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::encodings::EncodingId;

pub const LOGVAR_CLAMP: f64 = 20.0;

#[derive(Debug, thiserror::Error)]
pub enum VaeError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeError { expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CategoricalCe,
    BinaryCe,
    Mse,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::CategoricalCe => "categorical_ce",
            LossKind::BinaryCe => "binary_ce",
            LossKind::Mse => "mse",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            LossKind::CategoricalCe => 0,
            LossKind::BinaryCe => 1,
            LossKind::Mse => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(LossKind::CategoricalCe),
            1 => Some(LossKind::BinaryCe),
            2 => Some(LossKind::Mse),
            _ => None,
        }
    }
}

/// Token streams train against token targets, binary planes against cell
/// targets, spectra against raw floats.
pub fn assign_loss(encoding: EncodingId) -> LossKind {
    match encoding {
        EncodingId::MidiLike | EncodingId::Abc => LossKind::CategoricalCe,
        EncodingId::PianoRoll | EncodingId::Tonnetz => LossKind::BinaryCe,
        EncodingId::PcDft | EncodingId::PitchDft => LossKind::Mse,
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn sampled(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        // Gaussian fan-in scaling keeps early activations O(1).
        let normal = Normal::new(0.0, (1.0 / cols as f64).sqrt()).unwrap();
        Tensor2 {
            rows,
            cols,
            data: (0..rows * cols).map(|_| normal.sample(rng)).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// y = Aᵀ x
    pub fn t_matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (row, &xi) in self.data.chunks_exact(self.cols).zip(x) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += a * xi;
            }
        }
        out
    }

    /// A += dy xᵀ
    fn add_outer(&mut self, dy: &[f64], x: &[f64]) {
        for (row, &d) in self.data.chunks_exact_mut(self.cols).zip(dy) {
            if d != 0.0 {
                for (a, &b) in row.iter_mut().zip(x) {
                    *a += d * b;
                }
            }
        }
    }

    /// A[:, col] += s * dy
    fn add_column(&mut self, col: usize, dy: &[f64], s: f64) {
        for (r, &d) in dy.iter().enumerate() {
            self.data[r * self.cols + col] += s * d;
        }
    }
}

/// One training example: a flat float row, or a token row expanded to
/// one-hot blocks on the fly.
#[derive(Debug, Clone, Copy)]
pub enum Ex<'a> {
    Dense(&'a [f64]),
    Tokens(&'a [u32]),
}

impl Ex<'_> {
    fn input_dim(&self, vocab_size: usize) -> usize {
        match self {
            Ex::Dense(x) => x.len(),
            Ex::Tokens(ids) => ids.len() * vocab_size,
        }
    }

    pub fn to_dense(&self, vocab_size: usize) -> Vec<f64> {
        match self {
            Ex::Dense(x) => x.to_vec(),
            Ex::Tokens(ids) => {
                let mut out = vec![0.0; ids.len() * vocab_size];
                for (t, &id) in ids.iter().enumerate() {
                    out[t * vocab_size + id as usize] = 1.0;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Softmax block width for the categorical head; input_dim is a
    /// multiple of it.
    pub vocab_size: Option<usize>,
    pub loss_kind: LossKind,
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w_mu: Tensor2,
    pub b_mu: Vec<f64>,
    pub w_lv: Tensor2,
    pub b_lv: Vec<f64>,
    pub w2: Tensor2,
    pub b2: Vec<f64>,
    pub w3: Tensor2,
    pub b3: Vec<f64>,
}

impl VaeParams {
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        latent_dim: usize,
        vocab_size: Option<usize>,
        loss_kind: LossKind,
        seed: u64,
    ) -> Self {
        if loss_kind == LossKind::CategoricalCe {
            let v = vocab_size.expect("categorical head needs a vocabulary size");
            assert_eq!(input_dim % v, 0, "input must split into token blocks");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        VaeParams {
            input_dim,
            hidden_dim,
            latent_dim,
            vocab_size,
            loss_kind,
            w1: Tensor2::sampled(hidden_dim, input_dim, &mut rng),
            b1: vec![0.0; hidden_dim],
            w_mu: Tensor2::sampled(latent_dim, hidden_dim, &mut rng),
            b_mu: vec![0.0; latent_dim],
            w_lv: Tensor2::sampled(latent_dim, hidden_dim, &mut rng),
            b_lv: vec![0.0; latent_dim],
            w2: Tensor2::sampled(hidden_dim, latent_dim, &mut rng),
            b2: vec![0.0; hidden_dim],
            w3: Tensor2::sampled(input_dim, hidden_dim, &mut rng),
            b3: vec![0.0; input_dim],
        }
    }

    /// Parameter arrays in checkpoint order.
    pub fn flat(&self) -> [&[f64]; 10] {
        [
            &self.w1.data,
            &self.b1,
            &self.w_mu.data,
            &self.b_mu,
            &self.w_lv.data,
            &self.b_lv,
            &self.w2.data,
            &self.b2,
            &self.w3.data,
            &self.b3,
        ]
    }

    /// Mutable parameter arrays in checkpoint order; lets callers perturb
    /// single weights (gradient checks, ablations).
    pub fn flat_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w_mu.data,
            &mut self.b_mu,
            &mut self.w_lv.data,
            &mut self.b_lv,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.w3.data,
            &mut self.b3,
        ]
    }
}

/// Gradients shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Grads {
    pub w1: Tensor2,
    pub b1: Vec<f64>,
    pub w_mu: Tensor2,
    pub b_mu: Vec<f64>,
    pub w_lv: Tensor2,
    pub b_lv: Vec<f64>,
    pub w2: Tensor2,
    pub b2: Vec<f64>,
    pub w3: Tensor2,
    pub b3: Vec<f64>,
}

impl Grads {
    fn zeros_like(p: &VaeParams) -> Self {
        Grads {
            w1: Tensor2::zeros(p.hidden_dim, p.input_dim),
            b1: vec![0.0; p.hidden_dim],
            w_mu: Tensor2::zeros(p.latent_dim, p.hidden_dim),
            b_mu: vec![0.0; p.latent_dim],
            w_lv: Tensor2::zeros(p.latent_dim, p.hidden_dim),
            b_lv: vec![0.0; p.latent_dim],
            w2: Tensor2::zeros(p.hidden_dim, p.latent_dim),
            b2: vec![0.0; p.hidden_dim],
            w3: Tensor2::zeros(p.input_dim, p.hidden_dim),
            b3: vec![0.0; p.input_dim],
        }
    }

    pub fn flat(&self) -> [&[f64]; 10] {
        [
            &self.w1.data,
            &self.b1,
            &self.w_mu.data,
            &self.b_mu,
            &self.w_lv.data,
            &self.b_lv,
            &self.w2.data,
            &self.b2,
            &self.w3.data,
            &self.b3,
        ]
    }

    fn scale(&mut self, s: f64) {
        for slot in [
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w_mu.data,
            &mut self.b_mu,
            &mut self.w_lv.data,
            &mut self.b_lv,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.w3.data,
            &mut self.b3,
        ] {
            for v in slot.iter_mut() {
                *v *= s;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn new(reconstruction: f64, kl: f64) -> Self {
        LossBreakdown {
            reconstruction,
            kl,
            total: reconstruction + kl,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub dropout_rate: f64,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
}

impl TrainConfig {
    pub fn new(loss_kind: LossKind) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 256,
            seed: 0,
            loss_kind,
            dropout_rate: 0.2,
            latent_dim: 256,
            hidden_dim: 1024,
            learning_rate: 1e-4,
        }
    }
}

/// Uniformly-shaped training set.
#[derive(Debug, Clone)]
pub enum TrainData {
    /// Binary or float rows, one example per row.
    Dense { rows: Vec<Vec<f64>> },
    /// Token-id rows of equal length with their one-hot block width.
    Tokens { rows: Vec<Vec<u32>>, vocab_size: usize },
}

impl TrainData {
    pub fn len(&self) -> usize {
        match self {
            TrainData::Dense { rows } => rows.len(),
            TrainData::Tokens { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainData::Dense { rows } => rows.first().map_or(0, Vec::len),
            TrainData::Tokens { rows, vocab_size } => {
                rows.first().map_or(0, Vec::len) * vocab_size
            }
        }
    }

    pub fn vocab_size(&self) -> Option<usize> {
        match self {
            TrainData::Dense { .. } => None,
            TrainData::Tokens { vocab_size, .. } => Some(*vocab_size),
        }
    }

    pub fn example(&self, i: usize) -> Ex<'_> {
        match self {
            TrainData::Dense { rows } => Ex::Dense(&rows[i]),
            TrainData::Tokens { rows, .. } => Ex::Tokens(&rows[i]),
        }
    }
}

fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Sparse or dense first-layer product: a1 = W1 x + b1.
fn first_layer(p: &VaeParams, x: Ex<'_>) -> Vec<f64> {
    match x {
        Ex::Dense(v) => {
            let mut a = p.w1.matvec(v);
            for (ai, bi) in a.iter_mut().zip(&p.b1) {
                *ai += bi;
            }
            a
        }
        Ex::Tokens(ids) => {
            let vocab = p.vocab_size.expect("token input on a non-token model");
            let mut a = p.b1.clone();
            for (t, &id) in ids.iter().enumerate() {
                let col = t * vocab + id as usize;
                for (r, ai) in a.iter_mut().enumerate() {
                    *ai += p.w1.at(r, col);
                }
            }
            a
        }
    }
}

/// Deterministic encoder pass (no dropout, no sampling).
pub fn encode_latent(p: &VaeParams, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
    if x.len() != p.input_dim {
        return Err(VaeError::ShapeError {
            expected: p.input_dim,
            got: x.len(),
        });
    }
    Ok(encode_example(p, Ex::Dense(x)))
}

/// Encoder pass on a token row without materializing the one-hot input.
pub fn encode_latent_tokens(p: &VaeParams, ids: &[u32]) -> Result<(Vec<f64>, Vec<f64>), VaeError> {
    let vocab = p.vocab_size.ok_or(VaeError::ShapeError {
        expected: p.input_dim,
        got: ids.len(),
    })?;
    if ids.len() * vocab != p.input_dim {
        return Err(VaeError::ShapeError {
            expected: p.input_dim,
            got: ids.len() * vocab,
        });
    }
    Ok(encode_example(p, Ex::Tokens(ids)))
}

fn encode_example(p: &VaeParams, x: Ex<'_>) -> (Vec<f64>, Vec<f64>) {
    let mut h1 = first_layer(p, x);
    relu_inplace(&mut h1);
    let mut mu = p.w_mu.matvec(&h1);
    for (m, b) in mu.iter_mut().zip(&p.b_mu) {
        *m += b;
    }
    let mut lv = p.w_lv.matvec(&h1);
    for (l, b) in lv.iter_mut().zip(&p.b_lv) {
        *l = (*l + b).clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP);
    }
    (mu, lv)
}

/// z = mu + exp(logvar/2) · ε, ε ~ N(0, I) from the given stream.
pub fn reparameterize(mu: &[f64], logvar: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    debug_assert_eq!(mu.len(), logvar.len());
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| {
            let eps: f64 = StandardNormal.sample(rng);
            m + (lv / 2.0).exp() * eps
        })
        .collect()
}

/// Decoder pass with the head chosen by the params' loss kind.
pub fn decode_latent(p: &VaeParams, z: &[f64]) -> Result<Vec<f64>, VaeError> {
    if z.len() != p.latent_dim {
        return Err(VaeError::ShapeError {
            expected: p.latent_dim,
            got: z.len(),
        });
    }
    let mut h2 = p.w2.matvec(z);
    for (h, b) in h2.iter_mut().zip(&p.b2) {
        *h += b;
    }
    relu_inplace(&mut h2);
    let mut y = p.w3.matvec(&h2);
    for (yi, b) in y.iter_mut().zip(&p.b3) {
        *yi += b;
    }
    apply_head(p, &mut y);
    Ok(y)
}

fn apply_head(p: &VaeParams, y: &mut [f64]) {
    match p.loss_kind {
        LossKind::Mse => {}
        LossKind::BinaryCe => {
            for v in y.iter_mut() {
                *v = sigmoid(*v);
            }
        }
        LossKind::CategoricalCe => {
            let v = p.vocab_size.expect("categorical head has a vocab");
            for block in y.chunks_exact_mut(v) {
                softmax_inplace(block);
            }
        }
    }
}

fn softmax_inplace(block: &mut [f64]) {
    let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in block.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in block.iter_mut() {
        *v /= sum;
    }
}

fn kl_closed_form(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| (lv.exp() + m * m - 1.0 - lv) / 2.0)
        .sum()
}

const LOG_FLOOR: f64 = 1e-12;

fn recon_loss(x: Ex<'_>, xhat: &[f64], kind: LossKind, vocab: Option<usize>) -> f64 {
    match kind {
        LossKind::Mse => match x {
            Ex::Dense(v) => v.iter().zip(xhat).map(|(a, b)| (a - b) * (a - b)).sum(),
            Ex::Tokens(_) => unreachable!("mse targets are dense"),
        },
        LossKind::BinaryCe => match x {
            Ex::Dense(v) => v
                .iter()
                .zip(xhat)
                .map(|(&t, &q)| {
                    let q = q.clamp(LOG_FLOOR, 1.0 - LOG_FLOOR);
                    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
                })
                .sum(),
            Ex::Tokens(_) => unreachable!("binary targets are dense"),
        },
        LossKind::CategoricalCe => {
            let v = vocab.expect("categorical loss has a vocab");
            match x {
                Ex::Tokens(ids) => ids
                    .iter()
                    .enumerate()
                    .map(|(t, &id)| {
                        -xhat[t * v + id as usize].max(LOG_FLOOR).ln()
                    })
                    .sum(),
                Ex::Dense(_) => unreachable!("categorical targets are token rows"),
            }
        }
    }
}

/// Batch-mean loss from already-decoded outputs.
pub fn loss(
    batch: &[Ex<'_>],
    xhat: &[Vec<f64>],
    mu: &[Vec<f64>],
    logvar: &[Vec<f64>],
    kind: LossKind,
    vocab: Option<usize>,
) -> Result<LossBreakdown, VaeError> {
    let n = batch.len().max(1) as f64;
    let mut recon = 0.0;
    let mut kl = 0.0;
    for i in 0..batch.len() {
        recon += recon_loss(batch[i], &xhat[i], kind, vocab);
        kl += kl_closed_form(&mu[i], &logvar[i]);
    }
    let out = LossBreakdown::new(recon / n, kl / n);
    if !out.total.is_finite() {
        return Err(VaeError::NonFinite {
            context: "loss".into(),
        });
    }
    Ok(out)
}

struct ForwardTrace {
    a1: Vec<f64>,
    h1: Vec<f64>,
    d1: Vec<f64>,
    mu: Vec<f64>,
    lv_pre: Vec<f64>,
    lv: Vec<f64>,
    eps: Vec<f64>,
    z: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
    d2: Vec<f64>,
    y: Vec<f64>,
}

fn dropout_mask(dim: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; dim];
    }
    let keep = 1.0 - rate;
    (0..dim)
        .map(|_| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                1.0 / keep
            }
        })
        .collect()
}

/// Training-mode forward pass; draws, in order, the first dropout mask, the
/// latent noise, then the second mask.
fn forward_train(
    p: &VaeParams,
    x: Ex<'_>,
    dropout_rate: f64,
    rng: &mut ChaCha8Rng,
) -> ForwardTrace {
    let a1 = first_layer(p, x);
    let d1 = dropout_mask(p.hidden_dim, dropout_rate, rng);
    let h1: Vec<f64> = a1
        .iter()
        .zip(&d1)
        .map(|(&a, &d)| if a > 0.0 { a * d } else { 0.0 })
        .collect();

    let mut mu = p.w_mu.matvec(&h1);
    for (m, b) in mu.iter_mut().zip(&p.b_mu) {
        *m += b;
    }
    let mut lv_pre = p.w_lv.matvec(&h1);
    for (l, b) in lv_pre.iter_mut().zip(&p.b_lv) {
        *l += b;
    }
    let lv: Vec<f64> = lv_pre
        .iter()
        .map(|&l| l.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP))
        .collect();
    let eps: Vec<f64> = (0..p.latent_dim)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let z: Vec<f64> = mu
        .iter()
        .zip(&lv)
        .zip(&eps)
        .map(|((&m, &l), &e)| m + (l / 2.0).exp() * e)
        .collect();

    let mut a2 = p.w2.matvec(&z);
    for (a, b) in a2.iter_mut().zip(&p.b2) {
        *a += b;
    }
    let d2 = dropout_mask(p.hidden_dim, dropout_rate, rng);
    let h2: Vec<f64> = a2
        .iter()
        .zip(&d2)
        .map(|(&a, &d)| if a > 0.0 { a * d } else { 0.0 })
        .collect();

    let mut y = p.w3.matvec(&h2);
    for (yi, b) in y.iter_mut().zip(&p.b3) {
        *yi += b;
    }

    ForwardTrace {
        a1,
        h1,
        d1,
        mu,
        lv_pre,
        lv,
        eps,
        z,
        a2,
        h2,
        d2,
        y,
    }
}

/// Reconstruction loss straight from logits, numerically stable at
/// saturation.
fn recon_loss_from_logits(x: Ex<'_>, y: &[f64], kind: LossKind, vocab: Option<usize>) -> f64 {
    match kind {
        LossKind::Mse => match x {
            Ex::Dense(v) => v.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            Ex::Tokens(_) => unreachable!(),
        },
        LossKind::BinaryCe => match x {
            // max(y,0) - y·t + ln(1 + exp(-|y|))
            Ex::Dense(v) => v
                .iter()
                .zip(y)
                .map(|(&t, &yi)| yi.max(0.0) - yi * t + (-yi.abs()).exp().ln_1p())
                .sum(),
            Ex::Tokens(_) => unreachable!(),
        },
        LossKind::CategoricalCe => {
            let vsize = vocab.expect("categorical");
            match x {
                Ex::Tokens(ids) => ids
                    .iter()
                    .enumerate()
                    .map(|(t, &id)| {
                        let block = &y[t * vsize..(t + 1) * vsize];
                        let max = block.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let lse = block.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                        lse - block[id as usize]
                    })
                    .sum(),
                Ex::Dense(_) => unreachable!(),
            }
        }
    }
}

/// dLoss/dy for one example (pre-head logits).
fn output_gradient(p: &VaeParams, x: Ex<'_>, y: &[f64]) -> Vec<f64> {
    match p.loss_kind {
        LossKind::Mse => match x {
            Ex::Dense(v) => y.iter().zip(v).map(|(&yh, &t)| 2.0 * (yh - t)).collect(),
            Ex::Tokens(_) => unreachable!(),
        },
        LossKind::BinaryCe => match x {
            Ex::Dense(v) => y.iter().zip(v).map(|(&yh, &t)| sigmoid(yh) - t).collect(),
            Ex::Tokens(_) => unreachable!(),
        },
        LossKind::CategoricalCe => {
            let vsize = p.vocab_size.expect("categorical");
            match x {
                Ex::Tokens(ids) => {
                    let mut dy = y.to_vec();
                    for block in dy.chunks_exact_mut(vsize) {
                        softmax_inplace(block);
                    }
                    for (t, &id) in ids.iter().enumerate() {
                        dy[t * vsize + id as usize] -= 1.0;
                    }
                    dy
                }
                Ex::Dense(_) => unreachable!(),
            }
        }
    }
}

/// Analytic gradients of the batch-mean loss, with the same noise and
/// dropout draws a training step would use.
pub fn backward(
    p: &VaeParams,
    batch: &[Ex<'_>],
    dropout_rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Grads, LossBreakdown), VaeError> {
    let mut g = Grads::zeros_like(p);
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;

    for &x in batch {
        debug_assert_eq!(x.input_dim(p.vocab_size.unwrap_or(1)), p.input_dim);
        let f = forward_train(p, x, dropout_rate, rng);
        recon_sum += recon_loss_from_logits(x, &f.y, p.loss_kind, p.vocab_size);
        kl_sum += kl_closed_form(&f.mu, &f.lv);

        let dy = output_gradient(p, x, &f.y);
        g.w3.add_outer(&dy, &f.h2);
        for (b, d) in g.b3.iter_mut().zip(&dy) {
            *b += d;
        }

        let dh2 = p.w3.t_matvec(&dy);
        let da2: Vec<f64> = dh2
            .iter()
            .zip(&f.a2)
            .zip(&f.d2)
            .map(|((&dh, &a), &d)| if a > 0.0 { dh * d } else { 0.0 })
            .collect();
        g.w2.add_outer(&da2, &f.z);
        for (b, d) in g.b2.iter_mut().zip(&da2) {
            *b += d;
        }

        let dz = p.w2.t_matvec(&da2);
        // z = mu + exp(lv/2)·eps, plus the KL terms in mu and lv.
        let dmu: Vec<f64> = dz.iter().zip(&f.mu).map(|(&d, &m)| d + m).collect();
        let dlv_pre: Vec<f64> = dz
            .iter()
            .zip(&f.eps)
            .zip(&f.lv)
            .zip(&f.lv_pre)
            .map(|(((&d, &e), &lv), &pre)| {
                if pre.abs() > LOGVAR_CLAMP {
                    0.0
                } else {
                    d * e * (lv / 2.0).exp() / 2.0 + (lv.exp() - 1.0) / 2.0
                }
            })
            .collect();

        g.w_mu.add_outer(&dmu, &f.h1);
        for (b, d) in g.b_mu.iter_mut().zip(&dmu) {
            *b += d;
        }
        g.w_lv.add_outer(&dlv_pre, &f.h1);
        for (b, d) in g.b_lv.iter_mut().zip(&dlv_pre) {
            *b += d;
        }

        let dh1_mu = p.w_mu.t_matvec(&dmu);
        let dh1_lv = p.w_lv.t_matvec(&dlv_pre);
        let da1: Vec<f64> = dh1_mu
            .iter()
            .zip(&dh1_lv)
            .zip(&f.a1)
            .zip(&f.d1)
            .map(|(((&m, &l), &a), &d)| if a > 0.0 { (m + l) * d } else { 0.0 })
            .collect();
        match x {
            Ex::Dense(v) => g.w1.add_outer(&da1, v),
            Ex::Tokens(ids) => {
                let vocab = p.vocab_size.expect("token input");
                for (t, &id) in ids.iter().enumerate() {
                    g.w1.add_column(t * vocab + id as usize, &da1, 1.0);
                }
            }
        }
        for (b, d) in g.b1.iter_mut().zip(&da1) {
            *b += d;
        }
    }

    let n = batch.len().max(1) as f64;
    g.scale(1.0 / n);
    let breakdown = LossBreakdown::new(recon_sum / n, kl_sum / n);
    if !breakdown.total.is_finite() {
        return Err(VaeError::NonFinite {
            context: "backward loss".into(),
        });
    }
    Ok((g, breakdown))
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(p: &VaeParams, learning_rate: f64) -> Self {
        let shapes: Vec<Vec<f64>> = p.flat().iter().map(|s| vec![0.0; s.len()]).collect();
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }
}

/// Standard bias-corrected Adam update, in place.
pub fn adam_step(p: &mut VaeParams, g: &Grads, state: &mut AdamState) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let grads = g.flat();
    for (slot, params) in p.flat_mut().into_iter().enumerate() {
        let (m, v) = (&mut state.m[slot], &mut state.v[slot]);
        for i in 0..params.len() {
            let gi = grads[slot][i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            params[i] -= state.learning_rate * mhat / (vhat.sqrt() + state.epsilon);
        }
    }
}

/// Epoch loop over seeded, shuffled minibatches. History holds the
/// per-epoch mean loss over examples; everything is bit-deterministic for
/// a given seed.
pub fn train(
    data: &TrainData,
    config: &TrainConfig,
) -> Result<(VaeParams, Vec<LossBreakdown>), VaeError> {
    assert!(!data.is_empty(), "training needs at least one example");
    assert!(
        matches!(data, TrainData::Tokens { .. }) == (config.loss_kind == LossKind::CategoricalCe),
        "token data pairs with the categorical loss"
    );
    let mut params = VaeParams::init(
        data.input_dim(),
        config.hidden_dim,
        config.latent_dim,
        data.vocab_size(),
        config.loss_kind,
        config.seed,
    );
    let mut adam = AdamState::new(&params, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut history = Vec::with_capacity(config.epochs);
    let n = data.len();

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle(&mut order, &mut rng);
        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        for (batch_index, chunk) in order.chunks(config.batch_size.max(1)).enumerate() {
            let batch: Vec<Ex<'_>> = chunk.iter().map(|&i| data.example(i)).collect();
            let (grads, breakdown) =
                backward(&params, &batch, config.dropout_rate, &mut rng).map_err(|e| {
                    VaeError::NonFinite {
                        context: format!("epoch {epoch}, batch {batch_index}: {e}"),
                    }
                })?;
            adam_step(&mut params, &grads, &mut adam);
            recon_sum += breakdown.reconstruction * batch.len() as f64;
            kl_sum += breakdown.kl * batch.len() as f64;
        }
        history.push(LossBreakdown::new(recon_sum / n as f64, kl_sum / n as f64));
    }
    Ok((params, history))
}

/// Fisher-Yates with the crate's own draw order, so shuffles stay stable
/// across rand versions.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}
