//! Rate-1/2 convolutional outer code with zero-tail termination and a
//! Viterbi decoder that takes either hard parity bits or per-bit soft
//! costs.
//!
//! The code is the constraint-length-7 pair with octal generators
//! (171, 133): `G1 = 1 + D + D^2 + D^3 + D^6`,
//! `G2 = 1 + D^2 + D^3 + D^5 + D^6`. An input impulse therefore produces
//! `(1, 1)` as its first output pair.

/// Information rate of the optional outer stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterRate {
    /// No outer code: chips carry raw signature bits.
    Unity,
    /// Convolutional rate-1/2 outer code around the signature bits.
    Half,
}

impl OuterRate {
    pub fn value(self) -> f64 {
        match self {
            OuterRate::Unity => 1.0,
            OuterRate::Half => 0.5,
        }
    }
}

/// Branch-metric flavor for the Viterbi decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecisionMode {
    /// Hamming distance against hard per-chip parity decisions.
    #[default]
    Hard,
    /// Sum of caller-supplied per-bit costs (negative log-likelihoods).
    Soft,
}

const GENERATORS: [u32; 2] = [0o171, 0o133];
const MEMORY: usize = 6;

/// The (171, 133) rate-1/2 convolutional code, zero-tail terminated.
#[derive(Debug, Clone, Copy)]
pub struct OuterCode {
    generators: [u32; 2],
    memory: usize,
}

impl Default for OuterCode {
    fn default() -> Self {
        Self::standard()
    }
}

impl OuterCode {
    pub fn standard() -> Self {
        OuterCode {
            generators: GENERATORS,
            memory: MEMORY,
        }
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    /// Coded length for `info_len` input bits, tail included.
    pub fn encoded_len(&self, info_len: usize) -> usize {
        2 * (info_len + self.memory)
    }

    /// Information length recoverable from a coded block, if the length is
    /// consistent with this code.
    pub fn info_len(&self, coded_len: usize) -> Option<usize> {
        if !coded_len.is_multiple_of(2) {
            return None;
        }
        (coded_len / 2).checked_sub(self.memory)
    }

    // State packs the last `memory` input bits, most recent in the top
    // bit; the 7-bit window `(input << memory) | state` lines up with the
    // generator taps so one output bit is parity(window & generator).
    fn step(&self, state: u32, bit: u8) -> (u32, [u8; 2]) {
        let window = (u32::from(bit) << self.memory) | state;
        let out = [
            ((window & self.generators[0]).count_ones() % 2) as u8,
            ((window & self.generators[1]).count_ones() % 2) as u8,
        ];
        let next = (u32::from(bit) << (self.memory - 1)) | (state >> 1);
        (next, out)
    }

    /// Encodes `bits` and appends the `memory`-bit zero tail, so the
    /// encoder always ends in the all-zero state.
    pub fn encode(&self, bits: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len(bits.len()));
        let mut state = 0u32;
        for &b in bits.iter().chain(std::iter::repeat_n(&0, self.memory)) {
            let (next, pair) = self.step(state, b & 1);
            out.push(pair[0]);
            out.push(pair[1]);
            state = next;
        }
        out
    }

    /// Hard-decision decode: minimizes Hamming distance to `coded`.
    /// Returns `None` if the length does not match a terminated block.
    pub fn decode_hard(&self, coded: &[u8]) -> Option<Vec<u8>> {
        let costs: Vec<[f64; 2]> = coded
            .iter()
            .map(|&b| if b & 1 == 0 { [0.0, 1.0] } else { [1.0, 0.0] })
            .collect();
        self.decode_soft(&costs)
    }

    /// Soft-decision decode. `bit_costs[i][b]` is the cost of coded bit
    /// `i` taking value `b`; the decoder returns the info bits of the
    /// minimum-cost path that starts and ends in the zero state.
    pub fn decode_soft(&self, bit_costs: &[[f64; 2]]) -> Option<Vec<u8>> {
        let info_len = self.info_len(bit_costs.len())?;
        let total_steps = info_len + self.memory;
        let n_states = 1usize << self.memory;

        let mut metric = vec![f64::INFINITY; n_states];
        metric[0] = 0.0;
        // survivors[t][next] = predecessor state of the best edge into
        // `next` after step t; the input bit on that edge is the top bit
        // of `next`, so it needs no separate storage.
        let mut survivors = vec![vec![0u32; n_states]; total_steps];

        let mut next_metric = vec![f64::INFINITY; n_states];
        for (t, surv) in survivors.iter_mut().enumerate() {
            let c = [bit_costs[2 * t], bit_costs[2 * t + 1]];
            next_metric.iter_mut().for_each(|m| *m = f64::INFINITY);
            // tail steps only accept input 0 (zero-tail termination)
            let max_bit = if t < info_len { 1 } else { 0 };
            for (state, &base) in metric.iter().enumerate() {
                if base == f64::INFINITY {
                    continue;
                }
                for bit in 0..=max_bit {
                    let (next, out) = self.step(state as u32, bit);
                    let cost = base + c[0][out[0] as usize] + c[1][out[1] as usize];
                    if cost < next_metric[next as usize] {
                        next_metric[next as usize] = cost;
                        surv[next as usize] = state as u32;
                    }
                }
            }
            std::mem::swap(&mut metric, &mut next_metric);
        }

        if metric[0] == f64::INFINITY {
            return None;
        }
        let mut bits = vec![0u8; total_steps];
        let mut state = 0usize;
        for t in (0..total_steps).rev() {
            bits[t] = (state >> (self.memory - 1)) as u8;
            state = survivors[t][state] as usize;
        }
        bits.truncate(info_len);
        Some(bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn impulse_response_prefix() {
        // An isolated 1 exercises all generator taps in turn. With
        // G1 = 1111001 and G2 = 1011011 (tap order: current bit first),
        // the impulse output pairs are the columns of the two generators.
        let oc = OuterCode::standard();
        let coded = oc.encode(&[1]);
        assert_eq!(coded.len(), 14);
        assert_eq!(&coded[..2], &[1, 1]);
        let g1 = [1, 1, 1, 1, 0, 0, 1];
        let g2 = [1, 0, 1, 1, 0, 1, 1];
        for i in 0..7 {
            assert_eq!(coded[2 * i], g1[i], "G1 tap {i}");
            assert_eq!(coded[2 * i + 1], g2[i], "G2 tap {i}");
        }
    }

    #[test]
    fn zero_input_encodes_to_zero() {
        let oc = OuterCode::standard();
        assert_eq!(oc.encode(&[0; 24]), vec![0; 60]);
    }

    #[test]
    fn encoder_is_linear_over_gf2() {
        let oc = OuterCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a: Vec<u8> = (0..24).map(|_| rng.gen_range(0..2)).collect();
            let b: Vec<u8> = (0..24).map(|_| rng.gen_range(0..2)).collect();
            let xor: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let ca = oc.encode(&a);
            let cb = oc.encode(&b);
            let cx = oc.encode(&xor);
            for i in 0..ca.len() {
                assert_eq!(ca[i] ^ cb[i], cx[i]);
            }
        }
    }

    #[test]
    fn lengths_and_info_len_roundtrip() {
        let oc = OuterCode::standard();
        assert_eq!(oc.encoded_len(24), 60);
        assert_eq!(oc.info_len(60), Some(24));
        assert_eq!(oc.info_len(61), None);
        assert_eq!(oc.info_len(10), None);
        assert_eq!(oc.info_len(12), Some(0));
    }

    #[test]
    fn decode_clean_roundtrip() {
        let oc = OuterCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for len in [1usize, 8, 24, 40] {
            for _ in 0..20 {
                let bits: Vec<u8> = (0..len).map(|_| rng.gen_range(0..2)).collect();
                let coded = oc.encode(&bits);
                assert_eq!(oc.decode_hard(&coded).unwrap(), bits);
            }
        }
    }

    #[test]
    fn corrects_scattered_bit_errors() {
        // Free distance is 10, so any 4 channel errors are correctable.
        let oc = OuterCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let bits: Vec<u8> = (0..24).map(|_| rng.gen_range(0..2)).collect();
            let mut coded = oc.encode(&bits);
            let n = coded.len();
            let mut flipped = std::collections::HashSet::new();
            while flipped.len() < 4 {
                flipped.insert(rng.gen_range(0..n));
            }
            for &i in &flipped {
                coded[i] ^= 1;
            }
            assert_eq!(oc.decode_hard(&coded).unwrap(), bits);
        }
    }

    #[test]
    fn soft_beats_hard_on_reliability_flips() {
        // Seven wrong bits bunched inside one constraint span defeat hard
        // decoding in some trials, but their costs barely favor the wrong
        // value (margin 0.1) while clean bits strongly favor the right one
        // (margin 1.9). Any competing path differs in at least the free
        // distance of 10 positions, of which at most 7 are weak, so its
        // soft cost exceeds the true path by at least 3 * 1.9 - 7 * 0.1.
        let oc = OuterCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut hard_failures = 0;
        for _ in 0..40 {
            let bits: Vec<u8> = (0..24).map(|_| rng.gen_range(0..2)).collect();
            let coded = oc.encode(&bits);
            let n = coded.len();
            let mut costs: Vec<[f64; 2]> = coded
                .iter()
                .map(|&b| if b == 0 { [0.1, 2.0] } else { [2.0, 0.1] })
                .collect();
            let mut hard: Vec<u8> = coded.clone();
            let start = rng.gen_range(0..n - 14);
            let mut flipped = std::collections::HashSet::new();
            while flipped.len() < 7 {
                flipped.insert(start + rng.gen_range(0..14));
            }
            for &i in &flipped {
                hard[i] ^= 1;
                costs[i] = if hard[i] == 0 { [0.9, 1.0] } else { [1.0, 0.9] };
            }
            assert_eq!(
                oc.decode_soft(&costs).unwrap(),
                bits,
                "soft decode must recover weak flips"
            );
            if oc.decode_hard(&hard).unwrap() != bits {
                hard_failures += 1;
            }
        }
        assert!(hard_failures > 0, "error bursts should defeat hard decoding");
    }

    #[test]
    fn brute_force_ml_agreement_short_blocks() {
        // For short blocks, compare against exhaustive minimum-distance
        // search over all 2^len codewords.
        let oc = OuterCode::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for len in [3usize, 6] {
            for _ in 0..30 {
                let n = oc.encoded_len(len);
                let noisy: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
                let mut best = (usize::MAX, Vec::new());
                for w in 0u32..(1 << len) {
                    let cand: Vec<u8> =
                        (0..len).map(|i| ((w >> i) & 1) as u8).collect();
                    let coded = oc.encode(&cand);
                    let d = coded
                        .iter()
                        .zip(&noisy)
                        .filter(|(a, b)| a != b)
                        .count();
                    if d < best.0 {
                        best = (d, cand);
                    }
                }
                let got = oc.decode_hard(&noisy).unwrap();
                let got_d = oc
                    .encode(&got)
                    .iter()
                    .zip(&noisy)
                    .filter(|(a, b)| a != b)
                    .count();
                // Viterbi must achieve the same minimum distance (the
                // minimizer itself may tie).
                assert_eq!(got_d, best.0);
            }
        }
    }

    #[test]
    fn rate_values() {
        assert_eq!(OuterRate::Unity.value(), 1.0);
        assert_eq!(OuterRate::Half.value(), 0.5);
        assert_eq!(DecisionMode::default(), DecisionMode::Hard);
    }
}
