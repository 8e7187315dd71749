//! Physical-layer pieces: BPSK mapping, multi-user superposition, AWGN,
//! the Eb/N0 calibration rule, and per-chip multiplicity estimation.
//!
//! The channel is a real adder: every active user transmits its
//! (optionally outer-coded) signature as BPSK chips at amplitude `A` and
//! the receiver sees the element-wise sum plus Gaussian noise. Everything
//! here is a pure function of its inputs and an explicit RNG stream, so
//! Monte Carlo trials parallelize trivially.

mod outer;

pub use outer::{DecisionMode, OuterCode, OuterRate};

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::signatures::{BchSignatureCode, MessageId, SignatureError};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhyError {
    #[error("signal lengths differ: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Signature(#[from] SignatureError),
}

/// One received block: the noisy chip vector plus the channel metadata the
/// detectors need (per-user amplitude and per-dimension noise variance).
#[derive(Debug, Clone)]
pub struct ReceivedBlock {
    pub chips: Vec<f64>,
    pub amplitude: f64,
    pub noise_var: f64,
}

impl ReceivedBlock {
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }
}

/// BPSK map: bit 0 to `+A`, bit 1 to `-A`.
pub fn bpsk_modulate(bits: &[u8], amplitude: f64) -> Vec<f64> {
    bits.iter()
        .map(|&b| if b == 0 { amplitude } else { -amplitude })
        .collect()
}

/// Element-wise sum of equal-length chip vectors. An empty list is a valid
/// silent channel and yields zeros of the requested length.
pub fn superpose(signals: &[Vec<f64>], chip_count: usize) -> Result<Vec<f64>, PhyError> {
    let mut sum = vec![0.0; chip_count];
    for s in signals {
        if s.len() != chip_count {
            return Err(PhyError::LengthMismatch {
                expected: chip_count,
                got: s.len(),
            });
        }
        for (acc, x) in sum.iter_mut().zip(s) {
            *acc += x;
        }
    }
    Ok(sum)
}

/// Adds i.i.d. zero-mean Gaussian noise of variance `noise_var` per chip.
/// `noise_var = 0` is the noiseless oracle channel.
pub fn awgn_add<R: Rng>(chips: &[f64], noise_var: f64, rng: &mut R) -> Vec<f64> {
    if noise_var == 0.0 {
        return chips.to_vec();
    }
    let sigma = noise_var.sqrt();
    chips
        .iter()
        .map(|&c| c + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Noise variance per real dimension for a target Eb/N0.
///
/// The energy convention charges each user for its own chips only:
/// `Eb = A^2 * T / R` per information bit (a user spends `T / R` chips of
/// energy `A^2` per each of its `k` message bits, and the signature carries
/// `k` bits over `k * T / R` chips), with `N0 = 2 sigma^2`, giving
/// `sigma^2 = A^2 * T / (2 R 10^(EbN0_dB / 10))`.
pub fn ebn0_to_noise_var(ebn0_db: f64, amplitude: f64, t: usize, rate: OuterRate) -> f64 {
    ebn0_to_noise_var_ratio(ebn0_db, amplitude, t as f64 / rate.value())
}

/// Same calibration expressed through the chips-per-information-bit ratio
/// (`T / R` for the signature chain; `chip_count / k` for learned
/// encoders).
pub fn ebn0_to_noise_var_ratio(ebn0_db: f64, amplitude: f64, chips_per_bit: f64) -> f64 {
    amplitude * amplitude * chips_per_bit / (2.0 * 10f64.powf(ebn0_db / 10.0))
}

/// Per-chip multiplicity and parity estimate under a hypothesized count of
/// `l` active users.
///
/// With `ones` users sending bit 1 on a chip the noiseless level is
/// `(l - 2 ones) A`, so `ones` is recovered by rounding `(l A - y) / 2A`
/// and clamping into `0..=l`. Returns the per-chip parity (`ones mod 2`)
/// and the squared distance between the received chips and the nearest
/// level sequence, which doubles as the hypothesis quality metric.
pub fn estimate_parity(block: &ReceivedBlock, l: usize) -> (Vec<u8>, f64) {
    let a = block.amplitude;
    let mut parity = Vec::with_capacity(block.len());
    let mut metric = 0.0;
    for &y in &block.chips {
        let ones = if l == 0 {
            0.0
        } else {
            ((l as f64 * a - y) / (2.0 * a)).round().clamp(0.0, l as f64)
        };
        parity.push((ones as u64 % 2) as u8);
        let level = (l as f64 - 2.0 * ones) * a;
        metric += (y - level) * (y - level);
    }
    (parity, metric)
}

/// Per-chip costs `-log P(parity = b | y)` under a hypothesized active
/// count, marginalizing the multiplicity with a Binomial(l, 1/2) prior.
/// Feeds the soft-decision branch metric of the outer Viterbi decoder.
pub fn parity_bit_costs(block: &ReceivedBlock, l: usize) -> Vec<[f64; 2]> {
    let a = block.amplitude;
    if block.noise_var == 0.0 {
        // degenerate channel: fall back to hard decisions
        let (parity, _) = estimate_parity(block, l);
        return parity
            .iter()
            .map(|&p| if p == 0 { [0.0, 1e9] } else { [1e9, 0.0] })
            .collect();
    }
    let inv_2var = 1.0 / (2.0 * block.noise_var);
    // log C(l, ones) for ones = 0..=l
    let mut log_binom = vec![0.0f64; l + 1];
    for ones in 1..=l {
        log_binom[ones] =
            log_binom[ones - 1] + ((l - ones + 1) as f64).ln() - (ones as f64).ln();
    }
    block
        .chips
        .iter()
        .map(|&y| {
            let mut log_p = [f64::NEG_INFINITY; 2];
            for (ones, &lb) in log_binom.iter().enumerate() {
                let level = (l as f64 - 2.0 * ones as f64) * a;
                let ll = lb - (y - level) * (y - level) * inv_2var;
                let b = ones % 2;
                log_p[b] = log_sum_exp(log_p[b], ll);
            }
            [-log_p[0], -log_p[1]]
        })
        .collect()
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Signature bits of message `m` after the optional outer code.
pub fn coded_bits(
    code: &BchSignatureCode,
    outer: Option<&OuterCode>,
    m: MessageId,
) -> Result<Vec<u8>, PhyError> {
    let sig = code.signature(m)?;
    Ok(match outer {
        None => sig.to_vec(),
        Some(oc) => oc.encode(sig),
    })
}

/// Chip count of one transmitted block for the given code and outer rate.
pub fn block_chip_count(code: &BchSignatureCode, outer: Option<&OuterCode>) -> usize {
    match outer {
        None => code.seq_len(),
        Some(oc) => oc.encoded_len(code.seq_len()),
    }
}

/// Noiseless superposition of the coded BPSK signatures of a message set.
pub fn synth_superposition(
    code: &BchSignatureCode,
    outer: Option<&OuterCode>,
    messages: &[MessageId],
    amplitude: f64,
) -> Result<Vec<f64>, PhyError> {
    let chip_count = block_chip_count(code, outer);
    let signals: Vec<Vec<f64>> = messages
        .iter()
        .map(|&m| Ok(bpsk_modulate(&coded_bits(code, outer, m)?, amplitude)))
        .collect::<Result<_, PhyError>>()?;
    superpose(&signals, chip_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galois::FieldTables;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bpsk_mapping() {
        assert_eq!(bpsk_modulate(&[0, 1], 1.0), vec![1.0, -1.0]);
        assert_eq!(bpsk_modulate(&[0, 0, 0], 2.0), vec![2.0, 2.0, 2.0]);
        assert!(bpsk_modulate(&[], 1.0).is_empty());
    }

    #[test]
    fn superpose_sums_and_checks_lengths() {
        let sum = superpose(&[vec![1.0], vec![-1.0]], 1).unwrap();
        assert_eq!(sum, vec![0.0]);
        let l = 3;
        let users: Vec<Vec<f64>> = (0..l).map(|_| bpsk_modulate(&[0], 1.5)).collect();
        assert_eq!(superpose(&users, 1).unwrap(), vec![l as f64 * 1.5]);
        assert_eq!(superpose(&[], 4).unwrap(), vec![0.0; 4]);
        assert!(matches!(
            superpose(&[vec![1.0, 2.0]], 3),
            Err(PhyError::LengthMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn awgn_zero_variance_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = vec![0.25, -3.0, 7.5];
        assert_eq!(awgn_add(&v, 0.0, &mut rng), v);
    }

    #[test]
    fn awgn_sample_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000usize;
        let var = 0.7;
        let noise = awgn_add(&vec![0.0; n], var, &mut rng);
        let mean = noise.iter().sum::<f64>() / n as f64;
        let sample_var = noise.iter().map(|x| x * x).sum::<f64>() / n as f64 - mean * mean;
        // CLT bounds: mean within 4 sigma / sqrt(n), variance within 1%
        assert!(mean.abs() < 4.0 * var.sqrt() / 1e3, "mean {mean}");
        assert!((sample_var - var).abs() / var < 0.01, "var {sample_var}");
    }

    #[test]
    fn ebn0_calibration_values() {
        let v = ebn0_to_noise_var(8.0, 1.0, 4, OuterRate::Half);
        assert!((v - 4.0 / 10f64.powf(0.8)).abs() < 1e-12);
        assert!((v - 0.6340).abs() < 5e-5);
        assert_eq!(ebn0_to_noise_var(0.0, 1.0, 1, OuterRate::Unity), 0.5);
        let lo = ebn0_to_noise_var(0.0, 1.0, 4, OuterRate::Half);
        let hi = ebn0_to_noise_var(10.0, 1.0, 4, OuterRate::Half);
        assert!((lo / hi - 10.0).abs() < 1e-9);
    }

    #[test]
    fn ebn0_strictly_decreasing() {
        let mut last = f64::INFINITY;
        for db in (-10..=30).map(f64::from) {
            let v = ebn0_to_noise_var(db, 1.0, 4, OuterRate::Half);
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn parity_rounding_cases() {
        let block = |y: f64| ReceivedBlock {
            chips: vec![y],
            amplitude: 1.0,
            noise_var: 0.1,
        };
        // y = +0.1, L=2: one user on each side
        let (p, _) = estimate_parity(&block(0.1), 2);
        assert_eq!(p, vec![1]);
        // y = -1.9, L=2: both users sent 1
        let (p, _) = estimate_parity(&block(-1.9), 2);
        assert_eq!(p, vec![0]);
    }

    #[test]
    fn parity_exact_on_noiseless_superposition() {
        let field = FieldTables::with_default_poly(4).unwrap();
        let code = BchSignatureCode::new(field, 2).unwrap();
        let chips = synth_superposition(&code, None, &[2, 6], 1.0).unwrap();
        let block = ReceivedBlock {
            chips,
            amplitude: 1.0,
            noise_var: 0.0,
        };
        let (parity, metric) = estimate_parity(&block, 2);
        assert_eq!(parity, code.syndrome_of(&[2, 6]).unwrap());
        assert_eq!(metric, 0.0);

        // L = 0 on a silent channel
        let silent = ReceivedBlock {
            chips: vec![0.0; 8],
            amplitude: 1.0,
            noise_var: 0.0,
        };
        let (parity, metric) = estimate_parity(&silent, 0);
        assert_eq!(parity, vec![0; 8]);
        assert_eq!(metric, 0.0);
    }

    #[test]
    fn soft_costs_prefer_the_hard_decision() {
        let block = ReceivedBlock {
            chips: vec![1.9, -0.05, -1.95],
            amplitude: 1.0,
            noise_var: 0.2,
        };
        let (hard, _) = estimate_parity(&block, 2);
        let costs = parity_bit_costs(&block, 2);
        for (h, c) in hard.iter().zip(&costs) {
            let soft = if c[0] <= c[1] { 0 } else { 1 };
            assert_eq!(*h, soft);
        }
    }
}
