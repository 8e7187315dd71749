//! Signature sequences for the shared-codebook adder channel.
//!
//! The workhorse is [`BchSignatureCode`]: message `m` maps to column `m - 1`
//! of a binary BCH parity-check matrix of error-correction capability `T`
//! over `GF(2^k)`. Any XOR of up to `T` distinct columns identifies its
//! summands uniquely, which is what lets a receiver peel apart up to `T`
//! simultaneous transmissions from the mod-2 image of their sum.
//!
//! Zadoff-Chu sequences live here too. They motivate how large a
//! near-orthogonal pool can be for a given length; the toolkit only needs
//! generation and periodic correlation for analysis.

use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::galois::{Element, FieldTables};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("capability T={t} invalid for GF(2^{k}): need 1 <= T and 2T-1 < 2^k - 1")]
    InvalidCapability { t: usize, k: u32 },
    #[error("message {m} out of range 1..={n}")]
    MessageOutOfRange { m: usize, n: usize },
    #[error("invalid Zadoff-Chu parameters: u={u}, q={q} (need q odd, 1 <= u < q, gcd(u,q)=1)")]
    InvalidZcParams { u: usize, q: usize },
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Message index, 1-based: valid messages are `1..=n` with `n = 2^k - 1`.
pub type MessageId = u16;

/// Signature matrix built from the parity checks of a binary BCH code.
///
/// Column `j` is the concatenation of the `k`-bit LSB-first serializations
/// of `alpha^j, alpha^{3j}, ..., alpha^{(2T-1)j}`, the odd power sums of a
/// single active position `j`. Even power sums are implied by squaring
/// (`S_{2i} = S_i^2` over GF(2)) so they are not stored, which is why the
/// signature length is exactly `k * T` bits.
#[derive(Debug, Clone)]
pub struct BchSignatureCode {
    field: FieldTables,
    t: usize,
    n: usize,
    seq_len: usize,
    columns: Vec<Vec<u8>>,
}

impl BchSignatureCode {
    /// Builds the signature code for the given field and capability `T`.
    pub fn new(field: FieldTables, t: usize) -> Result<Self, SignatureError> {
        let n = field.order();
        if t < 1 || 2 * t > n {
            return Err(SignatureError::InvalidCapability {
                t,
                k: field.degree(),
            });
        }
        let k = field.degree() as usize;
        let seq_len = k * t;
        let mut columns = Vec::with_capacity(n);
        for j in 0..n as u64 {
            let mut col = Vec::with_capacity(seq_len);
            for i in 1..=t as u64 {
                let s = field.alpha_pow((2 * i - 1) * j);
                col.extend(field.element_to_bits(s));
            }
            columns.push(col);
        }
        Ok(Self {
            field,
            t,
            n,
            seq_len,
            columns,
        })
    }

    pub fn field(&self) -> &FieldTables {
        &self.field
    }

    /// Error-correction capability: the maximum number of simultaneous
    /// users the code can separate.
    pub fn capability(&self) -> usize {
        self.t
    }

    /// Number of messages, `2^k - 1`.
    pub fn message_count(&self) -> usize {
        self.n
    }

    /// Signature length in bits, `k * T`.
    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Column of the parity-check matrix by 0-based index.
    pub fn column(&self, j: usize) -> &[u8] {
        &self.columns[j]
    }

    /// Signature bits for message `m`; messages `1..=n` map to columns
    /// `0..n`.
    pub fn signature(&self, m: MessageId) -> Result<&[u8], SignatureError> {
        if m == 0 || m as usize > self.n {
            return Err(SignatureError::MessageOutOfRange {
                m: m as usize,
                n: self.n,
            });
        }
        Ok(&self.columns[m as usize - 1])
    }

    /// XOR of the signatures of a message set: the noiseless syndrome the
    /// receiver would observe on the mod-2 adder channel.
    pub fn syndrome_of(&self, messages: &[MessageId]) -> Result<Vec<u8>, SignatureError> {
        let mut acc = vec![0u8; self.seq_len];
        for &m in messages {
            for (a, b) in acc.iter_mut().zip(self.signature(m)?) {
                *a ^= b;
            }
        }
        Ok(acc)
    }

    /// Reassembles the odd power sums `S_1, S_3, ..., S_{2T-1}` from a
    /// `k*T`-bit syndrome.
    pub fn syndrome_elements(&self, bits: &[u8]) -> Vec<Element> {
        let k = self.field.degree() as usize;
        debug_assert_eq!(bits.len(), self.seq_len);
        bits.chunks(k)
            .map(|chunk| self.field.element_from_bits(chunk))
            .collect()
    }
}

/// Root index and length of a Zadoff-Chu sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZcParams {
    u: usize,
    q: usize,
}

impl ZcParams {
    /// Validates `q` odd, `1 <= u < q`, `gcd(u, q) = 1`.
    pub fn new(u: usize, q: usize) -> Result<Self, SignatureError> {
        if q.is_multiple_of(2) || u == 0 || u >= q || gcd(u, q) != 1 {
            return Err(SignatureError::InvalidZcParams { u, q });
        }
        Ok(Self { u, q })
    }

    pub fn root(&self) -> usize {
        self.u
    }

    pub fn len(&self) -> usize {
        self.q
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Generates the length-`q` Zadoff-Chu sequence
/// `x[n] = exp(-i pi u n (n+1) / q)`. Every sample has unit magnitude.
pub fn zc_generate(p: ZcParams) -> Vec<Complex64> {
    let q = p.q as f64;
    let u = p.u as f64;
    (0..p.q)
        .map(|n| {
            let n = n as f64;
            Complex64::from_polar(1.0, -PI * u * n * (n + 1.0) / q)
        })
        .collect()
}

/// Periodic correlation `sum_n a[n] * conj(b[(n + lag) mod q])`.
pub fn periodic_correlation(
    a: &[Complex64],
    b: &[Complex64],
    lag: usize,
) -> Result<Complex64, SignatureError> {
    if a.len() != b.len() {
        return Err(SignatureError::LengthMismatch(a.len(), b.len()));
    }
    let q = a.len();
    Ok((0..q)
        .map(|n| a[n] * b[(n + lag) % q].conj())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galois::FieldTables;

    fn code_4_2() -> BchSignatureCode {
        BchSignatureCode::new(FieldTables::with_default_poly(4).unwrap(), 2).unwrap()
    }

    #[test]
    fn dimensions_63_39_instance() {
        let code =
            BchSignatureCode::new(FieldTables::with_default_poly(6).unwrap(), 4).unwrap();
        assert_eq!(code.message_count(), 63);
        assert_eq!(code.seq_len(), 24);
    }

    #[test]
    fn capability_bounds() {
        let f = FieldTables::with_default_poly(4).unwrap();
        assert!(matches!(
            BchSignatureCode::new(f.clone(), 0),
            Err(SignatureError::InvalidCapability { .. })
        ));
        // 2T-1 = 15 = 2^4-1 is out of range
        assert!(matches!(
            BchSignatureCode::new(f, 8),
            Err(SignatureError::InvalidCapability { .. })
        ));
    }

    #[test]
    fn known_columns_k4_t2() {
        let code = code_4_2();
        // column 0: (alpha^0, alpha^0) = (1, 1)
        assert_eq!(code.column(0), &[1, 0, 0, 0, 1, 0, 0, 0]);
        // column 1: (alpha, alpha^3) = (0b0010, 0b1000)
        assert_eq!(code.column(1), &[0, 1, 0, 0, 0, 0, 0, 1]);
    }

    #[test]
    fn message_map_is_shifted_index() {
        let code = code_4_2();
        assert_eq!(code.signature(1).unwrap(), code.column(0));
        assert_eq!(code.signature(2).unwrap(), &[0, 1, 0, 0, 0, 0, 0, 1]);
        assert!(matches!(
            code.signature(16),
            Err(SignatureError::MessageOutOfRange { m: 16, n: 15 })
        ));
        assert!(code.signature(0).is_err());
    }

    #[test]
    fn columns_distinct_and_nonzero() {
        for (k, t) in [(4u32, 2usize), (6, 4)] {
            let code =
                BchSignatureCode::new(FieldTables::with_default_poly(k).unwrap(), t).unwrap();
            let mut seen = std::collections::HashSet::new();
            for j in 0..code.message_count() {
                let col = code.column(j).to_vec();
                assert!(col.iter().any(|&b| b != 0), "zero column at j={j}");
                assert!(seen.insert(col), "duplicate column at j={j}");
            }
        }
    }

    /// All subset XOR sums of size <= T must be pairwise distinct; this is
    /// the property that makes the sum of active signatures decodable.
    #[test]
    fn unique_sums_exhaustive_k4_t2() {
        let code = code_4_2();
        let n = code.message_count();
        let mut sums = std::collections::HashSet::new();
        let mut count = 0usize;
        // empty set
        assert!(sums.insert(vec![0u8; code.seq_len()]));
        count += 1;
        for a in 1..=n as MessageId {
            assert!(sums.insert(code.syndrome_of(&[a]).unwrap()));
            count += 1;
            for b in (a + 1)..=n as MessageId {
                assert!(
                    sums.insert(code.syndrome_of(&[a, b]).unwrap()),
                    "collision for pair ({a},{b})"
                );
                count += 1;
            }
        }
        // 1 + 15 + C(15,2) = 121 distinct sums
        assert_eq!(count, 121);
        assert_eq!(sums.len(), 121);
    }

    /// Unique sums over subsets of size <= T is equivalent to any 2T columns
    /// being linearly independent; spot-check the (63,39) instance.
    #[test]
    fn random_2t_subsets_independent_k6_t4() {
        use rand::prelude::*;
        let code =
            BchSignatureCode::new(FieldTables::with_default_poly(6).unwrap(), 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = code.message_count();
        for _ in 0..200 {
            let mut ids: Vec<MessageId> = (1..=n as MessageId).collect();
            ids.shuffle(&mut rng);
            let subset = &ids[..8]; // 2T = 8 columns
            // Gaussian elimination over GF(2) on the 8 columns
            let mut rows: Vec<Vec<u8>> =
                subset.iter().map(|&m| code.signature(m).unwrap().to_vec()).collect();
            let mut rank = 0;
            for bit in 0..code.seq_len() {
                if let Some(p) = (rank..rows.len()).find(|&r| rows[r][bit] == 1) {
                    rows.swap(rank, p);
                    for r in 0..rows.len() {
                        if r != rank && rows[r][bit] == 1 {
                            let (head, tail) = rows.split_at_mut(rank.max(r));
                            let (a, b) = if r < rank {
                                (&mut head[r], &tail[0])
                            } else {
                                (&mut tail[0], &head[rank])
                            };
                            for (x, y) in a.iter_mut().zip(b.iter()) {
                                *x ^= y;
                            }
                        }
                    }
                    rank += 1;
                }
            }
            assert_eq!(rank, 8, "2T columns dependent for subset {subset:?}");
        }
    }

    #[test]
    fn zc_param_validation() {
        assert!(ZcParams::new(1, 7).is_ok());
        assert!(matches!(
            ZcParams::new(2, 4),
            Err(SignatureError::InvalidZcParams { u: 2, q: 4 })
        ));
        // gcd(3, 9) = 3
        assert!(ZcParams::new(3, 9).is_err());
        assert!(ZcParams::new(0, 7).is_err());
        assert!(ZcParams::new(7, 7).is_err());
    }

    #[test]
    fn zc_unit_modulus() {
        for (u, q) in [(1usize, 7usize), (1, 839), (3, 839)] {
            let x = zc_generate(ZcParams::new(u, q).unwrap());
            assert_eq!(x.len(), q);
            for s in &x {
                assert!((s.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zc_correlation_properties_q7() {
        let x1 = zc_generate(ZcParams::new(1, 7).unwrap());
        let x2 = zc_generate(ZcParams::new(2, 7).unwrap());
        // zero-lag autocorrelation is exactly q
        let peak = periodic_correlation(&x1, &x1, 0).unwrap();
        assert!((peak.norm() - 7.0).abs() < 1e-9);
        // off-peak autocorrelation vanishes
        for lag in 1..7 {
            assert!(periodic_correlation(&x1, &x1, lag).unwrap().norm() < 1e-9);
        }
        // cross-correlation between distinct roots has magnitude sqrt(q)
        let cross = periodic_correlation(&x1, &x2, 0).unwrap();
        assert!((cross.norm() - 7f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn correlation_length_mismatch() {
        let a = zc_generate(ZcParams::new(1, 7).unwrap());
        let b = zc_generate(ZcParams::new(1, 839).unwrap());
        assert!(matches!(
            periodic_correlation(&a, &b, 0),
            Err(SignatureError::LengthMismatch(7, 839))
        ));
    }
}
