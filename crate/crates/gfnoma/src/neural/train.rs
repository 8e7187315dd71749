//! End-to-end training of the autoencoder detector.
//!
//! The dataset is frozen up front: every example fixes its active-message
//! set, its operating SNR (drawn from the configured grid) and its unit
//! noise vector, all from per-example RNG streams. Epochs revisit the
//! same examples in a seeded shuffle order, so a (seed, config) pair
//! fully determines the trajectory. The loss is multi-label binary
//! cross-entropy between decoder scores and the multi-hot activity
//! target, with an optional per-(active count, SNR) weight table.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use super::adam::Adam;
use super::Model;
use crate::phy::ebn0_to_noise_var_ratio;
use crate::rng::{ns, ns_stream};

// Batches are processed in fixed-size slices so memory stays bounded and
// accumulation order is independent of how callers pick batch sizes.
const CHUNK: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("{field} must be positive")]
    NonPositive { field: &'static str },
    #[error("training SNR grid is empty")]
    EmptySnrGrid,
    #[error("loss weight refers to {ebn0_db} dB, which is not on the training grid")]
    WeightOutsideGrid { ebn0_db: f64 },
    #[error("loss weight refers to {active_users} active users, outside 1..=T")]
    WeightBadUsers { active_users: usize },
    #[error("activity bound {activity_max} exceeds the {messages} available messages")]
    ActivityExceedsMessages { activity_max: usize, messages: usize },
    #[error("divergence detected at epoch {epoch}: loss is not finite")]
    DivergenceDetected { epoch: usize },
}

/// One weighting rule: examples with this active count at this SNR have
/// their loss multiplied by `weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeight {
    pub active_users: usize,
    pub ebn0_db: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub train_size: usize,
    pub val_size: usize,
    /// SNR grid the dataset is drawn from, one draw per example.
    pub train_ebn0_db: Vec<f64>,
    /// Active counts are uniform on `1..=activity_max`.
    pub activity_max: usize,
    /// Absent (count, SNR) pairs default to weight 1.
    pub loss_weights: Vec<LossWeight>,
    pub seed: u64,
}

impl TrainConfig {
    /// Laptop-scale defaults: single 8 dB training point, unweighted.
    pub fn desk_preset(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 200,
            minibatch_size: 256,
            train_size: 20_000,
            val_size: 2_000,
            train_ebn0_db: vec![8.0],
            activity_max: 4,
            loss_weights: Vec::new(),
            seed,
        }
    }

    /// Full-scale experiment sizes (wide nets, huge batches). The
    /// minibatch covers half the training set, so one epoch is exactly
    /// two updates.
    pub fn full_scale_preset(seed: u64) -> Self {
        TrainConfig {
            epochs: 1000,
            minibatch_size: 100_000,
            train_size: 200_000,
            val_size: 10_000,
            ..TrainConfig::desk_preset(seed)
        }
    }

    /// Two-SNR weighted training aimed at suppressing the high-SNR error
    /// floor: heavy-load examples are up-weighted 10x and 20x at 8 dB,
    /// and the 12 dB point carries a further 4x multiplier.
    pub fn error_floor_preset(seed: u64) -> Self {
        TrainConfig {
            train_ebn0_db: vec![8.0, 12.0],
            loss_weights: vec![
                LossWeight { active_users: 3, ebn0_db: 8.0, weight: 10.0 },
                LossWeight { active_users: 4, ebn0_db: 8.0, weight: 20.0 },
                LossWeight { active_users: 1, ebn0_db: 12.0, weight: 4.0 },
                LossWeight { active_users: 2, ebn0_db: 12.0, weight: 4.0 },
                LossWeight { active_users: 3, ebn0_db: 12.0, weight: 40.0 },
                LossWeight { active_users: 4, ebn0_db: 12.0, weight: 80.0 },
            ],
            ..TrainConfig::desk_preset(seed)
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positives: [(&'static str, f64); 7] = [
            ("learning_rate", self.learning_rate),
            ("epochs", self.epochs as f64),
            ("minibatch_size", self.minibatch_size as f64),
            ("train_size", self.train_size as f64),
            ("val_size", self.val_size as f64),
            ("activity_max", self.activity_max as f64),
            ("epsilon", self.epsilon),
        ];
        for (field, v) in positives {
            // `!is_finite` also rejects NaN, so the plain `<=` is safe here.
            if v <= 0.0 || !v.is_finite() {
                return Err(TrainError::NonPositive { field });
            }
        }
        if self.train_ebn0_db.is_empty() {
            return Err(TrainError::EmptySnrGrid);
        }
        for w in &self.loss_weights {
            if w.weight.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
                return Err(TrainError::NonPositive { field: "loss weight" });
            }
            if !self.train_ebn0_db.contains(&w.ebn0_db) {
                return Err(TrainError::WeightOutsideGrid { ebn0_db: w.ebn0_db });
            }
            if w.active_users == 0 || w.active_users > self.activity_max {
                return Err(TrainError::WeightBadUsers { active_users: w.active_users });
            }
        }
        Ok(())
    }
}

/// Per-(SNR index, active count) loss multipliers, resolved from the
/// sparse rule list.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    by_snr: Vec<Vec<f64>>,
}

impl WeightMatrix {
    pub fn get(&self, snr_index: usize, active: usize) -> f64 {
        self.by_snr[snr_index][active]
    }

    /// Multiplies every weight by `c` (used by the linearity property).
    pub fn scaled(&self, c: f64) -> Self {
        WeightMatrix {
            by_snr: self
                .by_snr
                .iter()
                .map(|row| row.iter().map(|w| w * c).collect())
                .collect(),
        }
    }
}

pub fn resolve_weights(cfg: &TrainConfig) -> Result<WeightMatrix, TrainError> {
    cfg.validate()?;
    let mut by_snr = vec![vec![1.0; cfg.activity_max + 1]; cfg.train_ebn0_db.len()];
    for w in &cfg.loss_weights {
        let snr_index = cfg
            .train_ebn0_db
            .iter()
            .position(|&db| db == w.ebn0_db)
            .expect("validated against the grid");
        by_snr[snr_index][w.active_users] = w.weight;
    }
    Ok(WeightMatrix { by_snr })
}

/// One frozen training example: which messages are active, which grid
/// SNR applies, and the unit-variance noise sample (scaled by the SNR's
/// sigma at use time).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    /// 0-based message indices, sorted ascending.
    pub message_indices: Vec<usize>,
    pub snr_index: usize,
    pub noise: Vec<f64>,
}

/// Draws `count` frozen examples from per-example streams in `namespace`
/// ([`ns::TRAIN_DATA`] or [`ns::VAL_DATA`]).
pub fn generate_examples(
    model: &Model,
    cfg: &TrainConfig,
    count: usize,
    namespace: u64,
) -> Vec<TrainExample> {
    let n = model.message_count();
    (0..count)
        .map(|i| {
            let mut rng = ns_stream(cfg.seed, namespace, i as u64);
            let l = rng.gen_range(1..=cfg.activity_max);
            let mut message_indices = rand::seq::index::sample(&mut rng, n, l).into_vec();
            message_indices.sort_unstable();
            let snr_index = rng.gen_range(0..cfg.train_ebn0_db.len());
            let noise = (0..model.chip_count())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            TrainExample { message_indices, snr_index, noise }
        })
        .collect()
}

/// Noise standard deviation per grid SNR, via the chips-per-bit Eb/N0
/// calibration shared with the signature chain.
pub fn noise_sigmas(model: &Model, cfg: &TrainConfig) -> Vec<f64> {
    cfg.train_ebn0_db
        .iter()
        .map(|&db| ebn0_to_noise_var_ratio(db, model.amplitude(), model.chips_per_bit()).sqrt())
        .collect()
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted multi-label cross-entropy of a batch, averaged over examples.
pub fn batch_loss(
    model: &Model,
    examples: &[&TrainExample],
    weights: &WeightMatrix,
    sigmas: &[f64],
) -> f64 {
    batch_loss_and_grad(model, examples, weights, sigmas, false).0
}

/// Loss and (optionally) the gradient with respect to every model
/// parameter. The gradient flows through the decoder, the superposition
/// and the shared encoder; the frozen noise sample is a constant.
pub fn batch_loss_and_grad(
    model: &Model,
    examples: &[&TrainExample],
    weights: &WeightMatrix,
    sigmas: &[f64],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let batch_size = examples.len();
    assert!(batch_size > 0, "empty batch");
    let n = model.message_count();
    let chips = model.chip_count();
    let a = model.amplitude();
    let inv_b = 1.0 / batch_size as f64;

    let mut loss_sum = 0.0;
    let mut grads = if want_grad {
        Some(vec![0.0; model.params.len()])
    } else {
        None
    };

    for chunk in examples.chunks(CHUNK) {
        let bc = chunk.len();
        // flatten (example, active message) pairs for the shared encoder
        let mut enc_indices = Vec::new();
        let mut seg = Vec::new();
        for (e, ex) in chunk.iter().enumerate() {
            for &idx in &ex.message_indices {
                enc_indices.push(idx);
                seg.push(e);
            }
        }
        let enc_cache = model.encoder_forward(&enc_indices);
        let s_enc = enc_cache.output();

        // received chips: superposed surrogates plus frozen scaled noise
        let mut x = Array2::zeros((bc, chips));
        for (r, &e) in seg.iter().enumerate() {
            let mut row = x.row_mut(e);
            for (acc, &s) in row.iter_mut().zip(s_enc.row(r)) {
                *acc += a * (2.0 * s - 1.0);
            }
        }
        for (e, ex) in chunk.iter().enumerate() {
            let sigma = sigmas[ex.snr_index];
            let mut row = x.row_mut(e);
            for (acc, &eps) in row.iter_mut().zip(&ex.noise) {
                *acc += sigma * eps;
            }
        }

        let dec_cache = model.decoder_forward(x.view());
        let scores = dec_cache.output();
        let logits = &dec_cache.logits;

        let mut target = Array2::zeros((bc, n));
        let mut w_ex = vec![0.0; bc];
        for (e, ex) in chunk.iter().enumerate() {
            for &idx in &ex.message_indices {
                target[(e, idx)] = 1.0;
            }
            w_ex[e] = weights.get(ex.snr_index, ex.message_indices.len());
        }

        for e in 0..bc {
            let mut bce = 0.0;
            for m in 0..n {
                let z = logits[(e, m)];
                bce += softplus(z) - z * target[(e, m)];
            }
            loss_sum += w_ex[e] * bce;
        }

        let Some(grads) = grads.as_mut() else { continue };
        // d loss / d logits for sigmoid cross-entropy is (score - target)
        let mut dz_dec = scores - &target;
        for (e, mut row) in dz_dec.outer_iter_mut().enumerate() {
            let scale = w_ex[e] * inv_b;
            row.mapv_inplace(|v| v * scale);
        }
        let dx = model.decoder_backward(x.view(), &dec_cache, dz_dec, grads);

        // every replica of an example's sum node sees the same gradient
        let mut dz_enc = Array2::zeros((enc_indices.len(), chips));
        for (r, &e) in seg.iter().enumerate() {
            let s_row = s_enc.row(r);
            let dx_row = dx.row(e);
            for (c, d) in dz_enc.row_mut(r).iter_mut().enumerate() {
                // chip = A (2 s - 1), then sigmoid derivative s (1 - s)
                let s = s_row[c];
                *d = dx_row[c] * 2.0 * a * s * (1.0 - s);
            }
        }
        model.encoder_backward(&enc_indices, &enc_cache, dz_enc, grads);
    }

    (loss_sum * inv_b, grads)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochLoss>,
}

/// Runs the full Adam training loop in place. The returned trace holds
/// one entry per epoch: mean minibatch loss (measured before each update)
/// and the validation loss after the epoch's updates.
pub fn train(model: &mut Model, cfg: &TrainConfig) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if cfg.activity_max > model.message_count() {
        return Err(TrainError::ActivityExceedsMessages {
            activity_max: cfg.activity_max,
            messages: model.message_count(),
        });
    }
    let weights = resolve_weights(cfg)?;
    let sigmas = noise_sigmas(model, cfg);
    let train_set = generate_examples(model, cfg, cfg.train_size, ns::TRAIN_DATA);
    let val_set = generate_examples(model, cfg, cfg.val_size, ns::VAL_DATA);
    let val_refs: Vec<&TrainExample> = val_set.iter().collect();

    let mut opt = Adam::new(
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.epsilon,
        model.params.len(),
    );
    let mut report = TrainReport::default();
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..cfg.train_size).collect();
        order.shuffle(&mut ns_stream(cfg.seed, ns::SHUFFLE, epoch as u64));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch_ids in order.chunks(cfg.minibatch_size) {
            let batch: Vec<&TrainExample> = batch_ids.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_loss_and_grad(model, &batch, &weights, &sigmas, true);
            if !loss.is_finite() {
                return Err(TrainError::DivergenceDetected { epoch });
            }
            opt.update(&mut model.params, &grads.expect("gradient requested"));
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
        }
        let val_loss = batch_loss(model, &val_refs, &weights, &sigmas);
        if !val_loss.is_finite() {
            return Err(TrainError::DivergenceDetected { epoch });
        }
        report.epochs.push(EpochLoss {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_loss,
        });
    }
    Ok(report)
}

/// Compares analytic gradients against central finite differences of the
/// full weighted loss, parameter by parameter; returns the worst relative
/// error.
pub fn gradient_check(
    model: &Model,
    examples: &[&TrainExample],
    weights: &WeightMatrix,
    sigmas: &[f64],
    epsilon: f64,
) -> f64 {
    let (_, grads) = batch_loss_and_grad(model, examples, weights, sigmas, true);
    let analytic = grads.expect("gradient requested");
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (i, &slope) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let up = batch_loss(&probe, examples, weights, sigmas);
        probe.params[i] = orig - epsilon;
        let down = batch_loss(&probe, examples, weights, sigmas);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = slope.abs().max(numeric.abs()).max(1e-3);
        worst = worst.max((slope - numeric).abs() / denom);
    }
    worst
}
