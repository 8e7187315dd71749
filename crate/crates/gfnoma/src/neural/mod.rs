//! Learned detection: a from-scratch MLP autoencoder over the adder
//! channel.
//!
//! Every user runs the same encoder network, which maps a one-hot
//! message to a chip vector; active users' chips superpose, AWGN is
//! added, and a decoder network maps the noisy sum to per-message
//! activity scores. Training (see [`train`]) differentiates end to end
//! through a continuous chip surrogate; inference hardens the chips to
//! exact BPSK levels so transmit energy matches the algebraic baseline.

mod adam;
pub mod checkpoint;
mod mlp;
mod train;

pub use adam::Adam;
pub use mlp::{MlpSpec, SpecError};
pub use train::{
    batch_loss, batch_loss_and_grad, generate_examples, gradient_check, noise_sigmas,
    resolve_weights, train, EpochLoss, LossWeight, TrainConfig, TrainError, TrainExample,
    TrainReport, WeightMatrix,
};

use mlp::{backward, forward, layer_shapes, BatchInput, LayerShape};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::detectors::{DecodeStatus, DecodedSet};
use crate::phy::ReceivedBlock;
use crate::rng::{ns, ns_stream};
use crate::signatures::MessageId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("encoder output {encoder_out} must equal decoder input {decoder_in}")]
    ChipWidthMismatch { encoder_out: usize, decoder_in: usize },
    #[error("encoder input {encoder_in} must equal decoder output {decoder_out}")]
    MessageWidthMismatch { encoder_in: usize, decoder_out: usize },
    #[error("message count {0} is not of the form 2^k - 1")]
    BadMessageCount(usize),
    #[error("amplitude must be positive")]
    BadAmplitude,
}

/// Shared-encoder autoencoder: one parameter vector holds the encoder
/// layers followed by the decoder layers.
#[derive(Debug, Clone)]
pub struct Model {
    encoder_spec: MlpSpec,
    decoder_spec: MlpSpec,
    amplitude: f64,
    chip_count: usize,
    /// Seed the weights were initialized (and trained) under.
    pub seed: u64,
    pub params: Vec<f64>,
    enc_shapes: Vec<LayerShape>,
    dec_shapes: Vec<LayerShape>,
}

impl Model {
    /// Builds a zero-initialized model after validating that the two
    /// networks plug into each other and the message space is a full
    /// field index range.
    pub fn new(
        encoder_spec: MlpSpec,
        decoder_spec: MlpSpec,
        amplitude: f64,
    ) -> Result<Self, ModelError> {
        if encoder_spec.output_width() != decoder_spec.input_width() {
            return Err(ModelError::ChipWidthMismatch {
                encoder_out: encoder_spec.output_width(),
                decoder_in: decoder_spec.input_width(),
            });
        }
        if encoder_spec.input_width() != decoder_spec.output_width() {
            return Err(ModelError::MessageWidthMismatch {
                encoder_in: encoder_spec.input_width(),
                decoder_out: decoder_spec.output_width(),
            });
        }
        let n = encoder_spec.input_width();
        if !(n + 1).is_power_of_two() || n < 3 {
            return Err(ModelError::BadMessageCount(n));
        }
        // NaN amplitude has to fail too, so compare for strictly-greater.
        if amplitude.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ModelError::BadAmplitude);
        }
        let (enc_shapes, enc_end) = layer_shapes(&encoder_spec, 0);
        let (dec_shapes, total) = layer_shapes(&decoder_spec, enc_end);
        Ok(Model {
            chip_count: encoder_spec.output_width(),
            encoder_spec,
            decoder_spec,
            amplitude,
            seed: 0,
            params: vec![0.0; total],
            enc_shapes,
            dec_shapes,
        })
    }

    /// He-style initialization for the ReLU hidden stack, Glorot for the
    /// sigmoid output layers, biases zero. Deterministic in `seed`.
    pub fn init(
        encoder_spec: MlpSpec,
        decoder_spec: MlpSpec,
        amplitude: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let mut model = Model::new(encoder_spec, decoder_spec, amplitude)?;
        model.seed = seed;
        let mut rng = ns_stream(seed, ns::INIT, 0);
        let all: Vec<LayerShape> = model
            .enc_shapes
            .iter()
            .chain(&model.dec_shapes)
            .copied()
            .collect();
        let enc_layers = model.enc_shapes.len();
        for (l, shape) in all.iter().enumerate() {
            let is_output = l + 1 == enc_layers || l + 1 == all.len();
            let std = if is_output {
                (2.0 / (shape.inputs + shape.outputs) as f64).sqrt()
            } else {
                (2.0 / shape.inputs as f64).sqrt()
            };
            let dist = Normal::new(0.0, std).expect("positive standard deviation");
            for p in &mut model.params[shape.w_off..shape.w_off + shape.inputs * shape.outputs] {
                *p = rng.sample(dist);
            }
        }
        Ok(model)
    }

    pub fn encoder_spec(&self) -> &MlpSpec {
        &self.encoder_spec
    }

    pub fn decoder_spec(&self) -> &MlpSpec {
        &self.decoder_spec
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn chip_count(&self) -> usize {
        self.chip_count
    }

    /// Number of distinct messages (the one-hot input width).
    pub fn message_count(&self) -> usize {
        self.encoder_spec.input_width()
    }

    /// Chips spent per information bit; drives Eb/N0 calibration exactly
    /// like `T / R` does for the signature chain.
    pub fn chips_per_bit(&self) -> f64 {
        let k = (self.message_count() + 1).trailing_zeros() as f64;
        self.chip_count as f64 / k
    }

    pub(crate) fn encoder_forward(&self, indices: &[usize]) -> mlp::ForwardCache {
        forward(&self.params, &self.enc_shapes, &BatchInput::OneHot(indices))
    }

    pub(crate) fn decoder_forward(&self, x: ArrayView2<f64>) -> mlp::ForwardCache {
        forward(&self.params, &self.dec_shapes, &BatchInput::Dense(x))
    }

    pub(crate) fn encoder_backward(
        &self,
        indices: &[usize],
        cache: &mlp::ForwardCache,
        dz_out: Array2<f64>,
        grads: &mut [f64],
    ) {
        backward(
            &self.params,
            &self.enc_shapes,
            &BatchInput::OneHot(indices),
            cache,
            dz_out,
            grads,
        );
    }

    pub(crate) fn decoder_backward(
        &self,
        x: ArrayView2<f64>,
        cache: &mlp::ForwardCache,
        dz_out: Array2<f64>,
        grads: &mut [f64],
    ) -> Array2<f64> {
        backward(
            &self.params,
            &self.dec_shapes,
            &BatchInput::Dense(x),
            cache,
            dz_out,
            grads,
        )
        .expect("dense input always has an input gradient")
    }

    /// Training-mode chips for message index `idx` (0-based): the smooth
    /// surrogate `A (2 s - 1)`, each chip strictly inside `(-A, A)`.
    pub fn encode_train(&self, idx: usize) -> Vec<f64> {
        let cache = self.encoder_forward(&[idx]);
        cache
            .output()
            .row(0)
            .iter()
            .map(|&s| self.amplitude * (2.0 * s - 1.0))
            .collect()
    }

    /// Inference-mode chips: the surrogate hardened to exact BPSK levels
    /// so each chip carries energy `A^2`, matching the signature
    /// baseline's power budget.
    pub fn encode_hard(&self, idx: usize) -> Vec<f64> {
        let cache = self.encoder_forward(&[idx]);
        cache
            .output()
            .row(0)
            .iter()
            .map(|&s| {
                if 2.0 * s - 1.0 >= 0.0 {
                    self.amplitude
                } else {
                    -self.amplitude
                }
            })
            .collect()
    }

    /// Per-message activity scores for a received chip vector, each
    /// strictly in (0, 1).
    pub fn decoder_scores(&self, chips: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, chips.len()), chips)
            .expect("chip slice viewed as one row");
        let cache = self.decoder_forward(x);
        cache.output().row(0).to_vec()
    }

    /// End-to-end training-mode pass for one message set: superpose the
    /// surrogate chips of every listed message, add AWGN of the given
    /// variance, and return the decoder's activity scores.
    pub fn system_forward<R: Rng>(
        &self,
        message_indices: &[usize],
        noise_var: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let mut x = vec![0.0; self.chip_count];
        for &idx in message_indices {
            for (acc, c) in x.iter_mut().zip(self.encode_train(idx)) {
                *acc += c;
            }
        }
        let noisy = crate::phy::awgn_add(&x, noise_var, rng);
        self.decoder_scores(&noisy)
    }
}

/// Thresholds the decoder scores into a message set. More than `t_max`
/// scores above threshold means the network is claiming an impossible
/// load; that is reported as a decode failure (erasure), mirroring the
/// algebraic detector's contract.
pub fn dl_detect(model: &Model, block: &ReceivedBlock, threshold: f64, t_max: usize) -> DecodedSet {
    let scores = model.decoder_scores(&block.chips);
    let messages: Vec<MessageId> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| (i + 1) as MessageId)
        .collect();
    let status = if messages.len() > t_max {
        DecodeStatus::DecodeFailure
    } else {
        DecodeStatus::Success
    };
    DecodedSet {
        messages,
        status,
        field_ops: 0,
    }
}
