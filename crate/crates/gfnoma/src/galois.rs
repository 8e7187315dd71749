//! Arithmetic over the binary extension fields `GF(2^k)`.
//!
//! Field elements are bit vectors of polynomial coefficients packed into a
//! `u16` (coefficient of `x^0` in bit 0). Multiplication and inversion go
//! through exponent/log tables built once per field from a primitive
//! polynomial, so every operation after construction is a couple of table
//! lookups and an index reduction modulo `2^k - 1`.

use thiserror::Error;

/// A field element, packed LSB-first: bit `i` is the coefficient of `x^i`.
pub type Element = u16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GaloisError {
    #[error("field degree {0} outside supported range 2..=16")]
    DegreeOutOfRange(u32),
    #[error("polynomial {poly:#x} does not have degree exactly {k}")]
    WrongPolynomialDegree { poly: u32, k: u32 },
    #[error("polynomial {0:#x} is not primitive (multiplicative cycle shorter than 2^k - 1)")]
    NonPrimitivePolynomial(u32),
    #[error("division by zero in GF(2^k)")]
    DivisionByZero,
}

/// Default primitive polynomial per degree, `x^k` term included.
///
/// Indexed by `k - 2`; these are the conventional choices (e.g. `0x13` is
/// `x^4 + x + 1`, `0x11d` the usual degree-8 polynomial).
pub const DEFAULT_PRIMITIVE_POLYS: [u32; 15] = [
    0x7,     // k=2:  x^2 + x + 1
    0xb,     // k=3:  x^3 + x + 1
    0x13,    // k=4:  x^4 + x + 1
    0x25,    // k=5:  x^5 + x^2 + 1
    0x43,    // k=6:  x^6 + x + 1
    0x89,    // k=7:  x^7 + x^3 + 1
    0x11d,   // k=8:  x^8 + x^4 + x^3 + x^2 + 1
    0x211,   // k=9:  x^9 + x^4 + 1
    0x409,   // k=10: x^10 + x^3 + 1
    0x805,   // k=11: x^11 + x^2 + 1
    0x1053,  // k=12: x^12 + x^6 + x^4 + x + 1
    0x201b,  // k=13: x^13 + x^4 + x^3 + x + 1
    0x4443,  // k=14: x^14 + x^10 + x^6 + x + 1
    0x8003,  // k=15: x^15 + x + 1
    0x1100b, // k=16: x^16 + x^12 + x^3 + x + 1
];

/// Returns the built-in primitive polynomial for degree `k`.
pub fn default_primitive_poly(k: u32) -> Result<u32, GaloisError> {
    if !(2..=16).contains(&k) {
        return Err(GaloisError::DegreeOutOfRange(k));
    }
    Ok(DEFAULT_PRIMITIVE_POLYS[(k - 2) as usize])
}

/// Exponent/log tables for one field `GF(2^k)`.
///
/// `exp[i] = alpha^i` for the primitive element `alpha = x`, with
/// `log` the inverse map over nonzero elements. Immutable after
/// construction and freely shareable across threads.
#[derive(Debug, Clone)]
pub struct FieldTables {
    k: u32,
    primitive_poly: u32,
    order: usize, // 2^k - 1
    exp: Vec<Element>,
    log: Vec<u32>,
}

impl FieldTables {
    /// Builds tables for `GF(2^k)` under the given primitive polynomial.
    ///
    /// Fails with [`GaloisError::NonPrimitivePolynomial`] when the powers of
    /// `x` cycle before exhausting the `2^k - 1` nonzero elements.
    pub fn new(k: u32, primitive_poly: u32) -> Result<Self, GaloisError> {
        if !(2..=16).contains(&k) {
            return Err(GaloisError::DegreeOutOfRange(k));
        }
        if 32 - primitive_poly.leading_zeros() != k + 1 {
            return Err(GaloisError::WrongPolynomialDegree {
                poly: primitive_poly,
                k,
            });
        }
        let order = (1usize << k) - 1;
        let mut exp = vec![0 as Element; order];
        let mut log = vec![u32::MAX; order + 1];
        let mut x: u32 = 1;
        for (i, slot) in exp.iter_mut().enumerate() {
            if log[x as usize] != u32::MAX {
                // repeated element before the full cycle: x not primitive here
                return Err(GaloisError::NonPrimitivePolynomial(primitive_poly));
            }
            *slot = x as Element;
            log[x as usize] = i as u32;
            x <<= 1;
            if x >> k != 0 {
                x ^= primitive_poly;
            }
        }
        if x != 1 {
            return Err(GaloisError::NonPrimitivePolynomial(primitive_poly));
        }
        Ok(Self {
            k,
            primitive_poly,
            order,
            exp,
            log,
        })
    }

    /// Builds the field for degree `k` with the built-in polynomial table.
    pub fn with_default_poly(k: u32) -> Result<Self, GaloisError> {
        Self::new(k, default_primitive_poly(k)?)
    }

    pub fn degree(&self) -> u32 {
        self.k
    }

    pub fn primitive_poly(&self) -> u32 {
        self.primitive_poly
    }

    /// Number of nonzero elements, `2^k - 1`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// `alpha^i`, with the exponent reduced modulo `2^k - 1`.
    pub fn alpha_pow(&self, i: u64) -> Element {
        self.exp[(i % self.order as u64) as usize]
    }

    /// Discrete log of a nonzero element.
    pub fn log(&self, a: Element) -> Result<u32, GaloisError> {
        if a == 0 {
            return Err(GaloisError::DivisionByZero);
        }
        Ok(self.log[a as usize])
    }

    /// Field addition (carryless): XOR of coefficient vectors.
    #[inline]
    pub fn add(&self, a: Element, b: Element) -> Element {
        a ^ b
    }

    /// Field multiplication via the log/exp tables.
    #[inline]
    pub fn mul(&self, a: Element, b: Element) -> Element {
        if a == 0 || b == 0 {
            return 0;
        }
        let idx = self.log[a as usize] as usize + self.log[b as usize] as usize;
        self.exp[if idx >= self.order { idx - self.order } else { idx }]
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(&self, a: Element) -> Result<Element, GaloisError> {
        if a == 0 {
            return Err(GaloisError::DivisionByZero);
        }
        let l = self.log[a as usize] as usize;
        Ok(self.exp[(self.order - l) % self.order])
    }

    /// `a^e` with exponent arithmetic modulo the group order.
    ///
    /// `0^0` is taken as 1; `0^e` is 0 for positive `e`.
    pub fn pow(&self, a: Element, e: u64) -> Element {
        if a == 0 {
            return if e == 0 { 1 } else { 0 };
        }
        let l = self.log[a as usize] as u64;
        self.exp[((l * (e % self.order as u64)) % self.order as u64) as usize]
    }

    /// Serializes an element to `k` bits, coefficient of `x^0` first.
    pub fn element_to_bits(&self, a: Element) -> Vec<u8> {
        (0..self.k).map(|i| ((a >> i) & 1) as u8).collect()
    }

    /// Reassembles an element from `k` LSB-first bits.
    pub fn element_from_bits(&self, bits: &[u8]) -> Element {
        debug_assert_eq!(bits.len(), self.k as usize);
        bits.iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as Element & 1) << i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Schoolbook polynomial multiply-and-reduce, independent of the tables.
    fn naive_mul(a: Element, b: Element, k: u32, poly: u32) -> Element {
        let mut prod: u32 = 0;
        for i in 0..k {
            if (b >> i) & 1 == 1 {
                prod ^= (a as u32) << i;
            }
        }
        for deg in (k..2 * k).rev() {
            if (prod >> deg) & 1 == 1 {
                prod ^= poly << (deg - k);
            }
        }
        prod as Element
    }

    #[test]
    fn alpha_powers_gf16() {
        let f = FieldTables::new(4, 0x13).unwrap();
        assert_eq!(f.alpha_pow(0), 1);
        assert_eq!(f.alpha_pow(1), 0b0010);
        // alpha^4 = alpha + 1 under x^4 + x + 1
        assert_eq!(f.alpha_pow(4), 0b0011);
    }

    #[test]
    fn reducible_polynomial_rejected() {
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2 has a short cycle
        assert_eq!(
            FieldTables::new(4, 0x15).unwrap_err(),
            GaloisError::NonPrimitivePolynomial(0x15)
        );
    }

    #[test]
    fn wrong_degree_rejected() {
        assert!(matches!(
            FieldTables::new(4, 0x9).unwrap_err(),
            GaloisError::WrongPolynomialDegree { .. }
        ));
        assert_eq!(
            FieldTables::new(1, 0x3).unwrap_err(),
            GaloisError::DegreeOutOfRange(1)
        );
        assert_eq!(
            FieldTables::new(17, 0x3).unwrap_err(),
            GaloisError::DegreeOutOfRange(17)
        );
    }

    #[test]
    fn mul_identities() {
        let f = FieldTables::with_default_poly(4).unwrap();
        for a in 0..16 {
            assert_eq!(f.mul(a, 1), a);
            assert_eq!(f.mul(a, 0), 0);
            assert_eq!(f.mul(0, a), 0);
        }
        // x * (x^3 + 1) = 1 in GF(16)
        assert_eq!(f.mul(0b0010, 0b1001), 1);
    }

    #[test]
    fn inv_and_pow() {
        let f = FieldTables::with_default_poly(4).unwrap();
        assert_eq!(f.inv(1).unwrap(), 1);
        assert_eq!(f.inv(0b0010).unwrap(), 0b1001);
        assert_eq!(f.inv(0).unwrap_err(), GaloisError::DivisionByZero);
        for a in 1..16 {
            assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
            // group order annihilates the exponent
            assert_eq!(f.pow(a, 15), 1);
        }
        assert_eq!(f.pow(0, 0), 1);
        assert_eq!(f.pow(0, 3), 0);
    }

    #[test]
    fn exhaustive_table_invariants() {
        for k in 2..=16 {
            let f = FieldTables::with_default_poly(k).unwrap();
            assert_eq!(f.alpha_pow(0), 1);
            let mut seen = vec![false; f.order() + 1];
            for i in 0..f.order() {
                let e = f.alpha_pow(i as u64);
                assert!(!seen[e as usize], "duplicate exp entry at k={k} i={i}");
                seen[e as usize] = true;
                assert_eq!(f.log(e).unwrap(), i as u32);
            }
        }
    }

    #[test]
    fn exhaustive_agreement_with_naive_oracle() {
        for k in 3..=6u32 {
            let poly = default_primitive_poly(k).unwrap();
            let f = FieldTables::new(k, poly).unwrap();
            let size = 1u32 << k;
            for a in 0..size as Element {
                for b in 0..size as Element {
                    assert_eq!(
                        f.mul(a, b),
                        naive_mul(a, b, k, poly),
                        "mismatch at k={k} a={a:#x} b={b:#x}"
                    );
                }
            }
        }
    }

    #[test]
    fn field_axioms_exhaustive_small_k() {
        for k in 3..=6u32 {
            let f = FieldTables::with_default_poly(k).unwrap();
            let size = 1 << k;
            for a in 0..size as Element {
                for b in 0..size as Element {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    // Frobenius: squaring distributes over addition
                    assert_eq!(f.mul(f.add(a, b), f.add(a, b)), f.add(f.mul(a, a), f.mul(b, b)));
                    assert_eq!(f.mul(a, a), f.pow(a, 2));
                    for c in [1 as Element, 3, (size - 1) as Element] {
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn bit_serialization_round_trip() {
        let f = FieldTables::with_default_poly(6).unwrap();
        for a in 0..64 as Element {
            let bits = f.element_to_bits(a);
            assert_eq!(bits.len(), 6);
            assert_eq!(f.element_from_bits(&bits), a);
        }
        // LSB-first convention: alpha = x serializes with bit 1 in slot 1
        let f4 = FieldTables::with_default_poly(4).unwrap();
        assert_eq!(f4.element_to_bits(0b0010), vec![0, 1, 0, 0]);
    }
}
