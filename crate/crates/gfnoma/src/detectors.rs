//! Receivers that recover the set of active messages from one received
//! block.
//!
//! Three detectors share the same contract (return the decoded message
//! set, never a per-user estimate):
//!
//! * [`bma_decode`]: algebraic syndrome decoding. The parity bits of the
//!   superposition are the power sums of the active users' field
//!   locators; Berlekamp-Massey finds the error-locator polynomial and a
//!   Chien scan extracts its roots. Every field operation is counted so
//!   the quadratic complexity contract is checkable.
//! * [`joint_activity_bma`]: wraps the algebraic decoder with a sweep
//!   over the hypothesized number of active users. Each hypothesis
//!   changes the per-chip multiplicity grid, so the receiver keeps the
//!   hypothesis whose resynthesized superposition is closest to the
//!   observation.
//! * [`mld_decode`]: exact maximum likelihood over all message subsets up
//!   to the capability, made tractable by an incremental Gram-matrix
//!   update that prices each subset in O(subset size).

use thiserror::Error;

use crate::galois::{Element, FieldTables};
use crate::phy::{
    block_chip_count, coded_bits, estimate_parity, parity_bit_costs, synth_superposition,
    DecisionMode, OuterCode, PhyError, ReceivedBlock,
};
use crate::signatures::{BchSignatureCode, MessageId};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("parity length {got} does not match signature length {expected}")]
    ParityLengthMismatch { expected: usize, got: usize },
    #[error("block length {got} does not match {expected} chips")]
    BlockLengthMismatch { expected: usize, got: usize },
    #[error("subset budget {budget} exhausted")]
    BudgetExceeded { budget: u64 },
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Signature(#[from] crate::signatures::SignatureError),
}

/// Whether a decode produced a trustworthy set. A failure is an erasure:
/// the receiver knows it has nothing, it does not emit a guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStatus {
    Success,
    DecodeFailure,
}

/// Result of a set decode: the recovered messages in ascending order plus
/// the number of finite-field operations spent producing them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedSet {
    pub messages: Vec<MessageId>,
    pub status: DecodeStatus,
    pub field_ops: u64,
}

impl DecodedSet {
    fn failure(field_ops: u64) -> Self {
        DecodedSet {
            messages: Vec::new(),
            status: DecodeStatus::DecodeFailure,
            field_ops,
        }
    }
}

// Field arithmetic wrapper that bills every add, multiply, square and
// inversion against one counter.
struct CountedField<'a> {
    f: &'a FieldTables,
    ops: u64,
}

impl<'a> CountedField<'a> {
    fn new(f: &'a FieldTables) -> Self {
        CountedField { f, ops: 0 }
    }

    fn add(&mut self, a: Element, b: Element) -> Element {
        self.ops += 1;
        self.f.add(a, b)
    }

    fn mul(&mut self, a: Element, b: Element) -> Element {
        self.ops += 1;
        self.f.mul(a, b)
    }

    fn inv(&mut self, a: Element) -> Element {
        self.ops += 1;
        self.f.inv(a).expect("inverting a known-nonzero element")
    }
}

/// Decodes the active-message set from the `k * T` parity bits of a
/// (possibly noisy) superposition.
///
/// Succeeds with the exact transmitted set whenever the parity bits are
/// the true subset sum of at most `T` signatures. Inconsistent parities
/// (more than `T` users, or residual channel errors) either fail or are
/// caught by the final syndrome re-check, which re-sums the candidate
/// signatures and rejects on mismatch.
pub fn bma_decode(
    code: &BchSignatureCode,
    parity_bits: &[u8],
) -> Result<DecodedSet, DetectorError> {
    if parity_bits.len() != code.seq_len() {
        return Err(DetectorError::ParityLengthMismatch {
            expected: code.seq_len(),
            got: parity_bits.len(),
        });
    }
    let t = code.capability();
    let field = code.field();
    let order = field.order() as u64;
    let mut cf = CountedField::new(field);

    // Power sums: odd ones come straight from the parity bits, even ones
    // follow from squaring in characteristic 2.
    let odd = code.syndrome_elements(parity_bits);
    let mut synd = vec![0 as Element; 2 * t];
    for (i, &s) in odd.iter().enumerate() {
        synd[2 * i] = s;
    }
    for i in 1..=t {
        let s_half = synd[i - 1];
        synd[2 * i - 1] = cf.mul(s_half, s_half);
    }

    if synd.iter().all(|&s| s == 0) {
        return Ok(DecodedSet {
            messages: Vec::new(),
            status: DecodeStatus::Success,
            field_ops: cf.ops,
        });
    }

    // Berlekamp-Massey: shortest LFSR generating the power-sum sequence.
    let poly_len = 2 * t + 1;
    let mut lambda = vec![0 as Element; poly_len];
    let mut prev = vec![0 as Element; poly_len];
    lambda[0] = 1;
    prev[0] = 1;
    let mut l = 0usize;
    let mut m = 1usize;
    let mut b: Element = 1;
    for n in 0..2 * t {
        let mut d = synd[n];
        for j in 1..=l.min(n) {
            let prod = cf.mul(lambda[j], synd[n - j]);
            d = cf.add(d, prod);
        }
        if d == 0 {
            m += 1;
        } else {
            let coef = {
                let ib = cf.inv(b);
                cf.mul(d, ib)
            };
            let update = |cf: &mut CountedField, lambda: &mut Vec<Element>, m: usize| {
                for j in 0..poly_len - m {
                    if prev[j] != 0 {
                        let prod = cf.mul(coef, prev[j]);
                        lambda[j + m] = cf.add(lambda[j + m], prod);
                    }
                }
            };
            if 2 * l <= n {
                let keep = lambda.clone();
                update(&mut cf, &mut lambda, m);
                l = n + 1 - l;
                prev = keep;
                b = d;
                m = 1;
            } else {
                update(&mut cf, &mut lambda, m);
                m += 1;
            }
        }
    }

    let degree = (0..poly_len).rev().find(|&j| lambda[j] != 0).unwrap_or(0);
    if degree != l || l > t {
        return Ok(DecodedSet::failure(cf.ops));
    }

    // Chien scan: position j is active iff alpha^{-j} is a root of the
    // locator polynomial; message identifiers are positions shifted by 1.
    let mut messages = Vec::new();
    let mut reg: Vec<Element> = lambda[..=l].to_vec();
    let step: Vec<Element> = (0..=l)
        .map(|i| field.alpha_pow(order - (i as u64 % order)))
        .collect();
    for j in 0..field.order() {
        let mut acc = reg[0];
        for &term in &reg[1..=l] {
            acc = cf.add(acc, term);
        }
        if acc == 0 {
            messages.push((j + 1) as MessageId);
        }
        for i in 1..=l {
            reg[i] = cf.mul(reg[i], step[i]);
        }
    }
    if messages.len() != l {
        return Ok(DecodedSet::failure(cf.ops));
    }

    // Re-sum the candidate signatures; a miscorrection that survives the
    // root count cannot survive an exact syndrome match.
    let resum = code.syndrome_of(&messages)?;
    if resum != parity_bits {
        return Ok(DecodedSet::failure(cf.ops));
    }
    Ok(DecodedSet {
        messages,
        status: DecodeStatus::Success,
        field_ops: cf.ops,
    })
}

/// Joint activity and identity detection.
///
/// For every hypothesized active count `l` in `0..=t_max` the receiver
/// re-estimates the per-chip parity (through the outer decoder when one
/// is present), runs the algebraic set decoder, and keeps hypotheses that
/// decode cleanly to exactly `l` messages. The winner is the candidate
/// whose noiseless resynthesis lies closest to the received block in
/// squared Euclidean distance; ties prefer the smaller count. No valid
/// candidate at all is an erasure.
pub fn joint_activity_bma(
    code: &BchSignatureCode,
    outer: Option<&OuterCode>,
    mode: DecisionMode,
    block: &ReceivedBlock,
    t_max: usize,
) -> Result<DecodedSet, DetectorError> {
    Ok(joint_activity_trace(code, outer, mode, block, t_max)?.0)
}

/// One row of the joint activity search, kept for debug surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisRecord {
    pub active_users: usize,
    /// Decoded set when the hypothesis produced a consistent candidate:
    /// the algebraic decoder succeeded with exactly `active_users`
    /// messages (and the outer decoder, if any, accepted the parity).
    pub candidate: Option<Vec<MessageId>>,
    /// Squared resynthesis distance of the candidate.
    pub metric: Option<f64>,
    pub selected: bool,
}

/// [`joint_activity_bma`] plus the full per-hypothesis record table.
pub fn joint_activity_trace(
    code: &BchSignatureCode,
    outer: Option<&OuterCode>,
    mode: DecisionMode,
    block: &ReceivedBlock,
    t_max: usize,
) -> Result<(DecodedSet, Vec<HypothesisRecord>), DetectorError> {
    let expected = block_chip_count(code, outer);
    if block.len() != expected {
        return Err(DetectorError::BlockLengthMismatch {
            expected,
            got: block.len(),
        });
    }
    let mut total_ops = 0u64;
    let mut best: Option<(f64, DecodedSet, usize)> = None;
    let mut trace = Vec::with_capacity(t_max + 1);
    for l in 0..=t_max {
        let mut record = HypothesisRecord {
            active_users: l,
            candidate: None,
            metric: None,
            selected: false,
        };
        let parity = match outer {
            None => Some(estimate_parity(block, l).0),
            Some(oc) => match mode {
                DecisionMode::Hard => oc.decode_hard(&estimate_parity(block, l).0),
                DecisionMode::Soft => oc.decode_soft(&parity_bit_costs(block, l)),
            },
        };
        let Some(parity) = parity else {
            trace.push(record);
            continue;
        };
        let set = bma_decode(code, &parity)?;
        total_ops += set.field_ops;
        if set.status != DecodeStatus::Success || set.messages.len() != l {
            trace.push(record);
            continue;
        }
        let synth = synth_superposition(code, outer, &set.messages, block.amplitude)?;
        let metric: f64 = block
            .chips
            .iter()
            .zip(&synth)
            .map(|(y, s)| (y - s) * (y - s))
            .sum();
        record.candidate = Some(set.messages.clone());
        record.metric = Some(metric);
        trace.push(record);
        if best.as_ref().is_none_or(|(m, _, _)| metric < *m) {
            best = Some((metric, set, l));
        }
    }
    let decoded = match best {
        Some((_, mut set, l)) => {
            set.field_ops = total_ops;
            trace[l].selected = true;
            set
        }
        None => DecodedSet::failure(total_ops),
    };
    Ok((decoded, trace))
}

/// Exact maximum-likelihood detection result.
#[derive(Debug, Clone, PartialEq)]
pub struct MldOutcome {
    pub messages: Vec<MessageId>,
    /// Squared distance between the block and the winning resynthesis.
    pub metric: f64,
    pub subsets_evaluated: u64,
}

/// Exact maximum-likelihood set detection.
///
/// Minimizes `|y - sum of coded signatures|^2` over every message subset
/// of size at most `t_max`. Expanding the square leaves a per-subset cost
/// of inner products only, so a depth-first scan that adds one message at
/// a time updates the cost with one Gram row segment per step instead of
/// resynthesizing the superposition. Ties prefer fewer messages, then the
/// lexicographically smaller set. `max_subsets` caps the search size;
/// exceeding it returns [`DetectorError::BudgetExceeded`].
pub fn mld_decode(
    code: &BchSignatureCode,
    outer: Option<&OuterCode>,
    block: &ReceivedBlock,
    t_max: usize,
    max_subsets: Option<u64>,
) -> Result<MldOutcome, DetectorError> {
    let chip_count = block_chip_count(code, outer);
    if block.len() != chip_count {
        return Err(DetectorError::BlockLengthMismatch {
            expected: chip_count,
            got: block.len(),
        });
    }
    let n = code.message_count();
    let signed: Vec<Vec<f64>> = (1..=n as u16)
        .map(|m| {
            Ok(crate::phy::bpsk_modulate(
                &coded_bits(code, outer, m)?,
                block.amplitude,
            ))
        })
        .collect::<Result<_, PhyError>>()?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| dot(&signed[i], &signed[j])).collect())
        .collect();
    let yc: Vec<f64> = (0..n).map(|j| dot(&block.chips, &signed[j])).collect();
    let y_energy = dot(&block.chips, &block.chips);

    struct Search<'a> {
        gram: &'a [Vec<f64>],
        yc: &'a [f64],
        n: usize,
        t_max: usize,
        budget: Option<u64>,
        evaluated: u64,
        best_cost: f64,
        best_set: Vec<usize>,
        stack: Vec<usize>,
    }

    impl Search<'_> {
        // `cost` is the subset's score minus the constant |y|^2 term.
        fn visit(&mut self, start: usize, cost: f64) -> Result<(), DetectorError> {
            if let Some(b) = self.budget {
                if self.evaluated >= b {
                    return Err(DetectorError::BudgetExceeded { budget: b });
                }
            }
            self.evaluated += 1;
            let better = cost < self.best_cost
                || (cost == self.best_cost
                    && (self.stack.len(), &self.stack)
                        < (self.best_set.len(), &self.best_set));
            if better {
                self.best_cost = cost;
                self.best_set = self.stack.clone();
            }
            if self.stack.len() == self.t_max {
                return Ok(());
            }
            for j in start..self.n {
                let mut delta = -2.0 * self.yc[j] + self.gram[j][j];
                for &i in &self.stack {
                    delta += 2.0 * self.gram[i][j];
                }
                self.stack.push(j);
                self.visit(j + 1, cost + delta)?;
                self.stack.pop();
            }
            Ok(())
        }
    }

    let mut search = Search {
        gram: &gram,
        yc: &yc,
        n,
        t_max,
        budget: max_subsets,
        evaluated: 0,
        best_cost: f64::INFINITY,
        best_set: Vec::new(),
        stack: Vec::new(),
    };
    // The empty set scores 0 (nothing transmitted), so start above it.
    search.visit(0, 0.0)?;

    Ok(MldOutcome {
        messages: search.best_set.iter().map(|&i| (i + 1) as MessageId).collect(),
        metric: y_energy + search.best_cost,
        subsets_evaluated: search.evaluated,
    })
}
