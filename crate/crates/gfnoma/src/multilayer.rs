//! Power-domain layering on top of the signature layer.
//!
//! Several groups of users share the channel at distinct received
//! powers; each layer runs the same signature code and the receiver
//! peels layers strongest-first with successive interference
//! cancellation. During a layer's detection the not-yet-decoded layers
//! are approximated as extra Gaussian noise of variance `P_i * T / 2`
//! each (every interfering user contributes `P_i` per chip with random
//! sign, and at most `T` of them are active in expectation-halved
//! fashion). A failed layer is left in the residual rather than
//! subtracted wrongly.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::detectors::{
    joint_activity_bma, mld_decode, DecodeStatus, DecodedSet, DetectorError,
};
use crate::phy::{awgn_add, synth_superposition, DecisionMode, ReceivedBlock};
use crate::rng::{ns, ns_stream};
use crate::signatures::{BchSignatureCode, MessageId};

const MAX_LAYERS: usize = 4;

#[derive(Debug, Error, PartialEq)]
pub enum MultilayerError {
    #[error("a layer plan needs at least one layer")]
    EmptyPlan,
    #[error("{0} layers exceed the supported maximum of 4")]
    TooManyLayers(usize),
    #[error("received powers must be strictly descending and positive")]
    NonDescendingPowers,
    #[error("power optimizer supports 1 or 2 layers, got {0}")]
    LayerCountUnsupported(usize),
    #[error("no grid point satisfies the power ordering constraints")]
    InfeasibleGrid,
    #[error("layer count mismatch: plan has {plan} layers, got {got} message sets")]
    LayerCountMismatch { plan: usize, got: usize },
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Ordered received powers plus the signature code every layer shares.
#[derive(Debug, Clone)]
pub struct LayerPlan {
    code: BchSignatureCode,
    powers: Vec<f64>,
}

impl LayerPlan {
    pub fn new(code: BchSignatureCode, powers: Vec<f64>) -> Result<Self, MultilayerError> {
        if powers.is_empty() {
            return Err(MultilayerError::EmptyPlan);
        }
        if powers.len() > MAX_LAYERS {
            return Err(MultilayerError::TooManyLayers(powers.len()));
        }
        let descending = powers.windows(2).all(|p| p[0] > p[1]);
        // NaN powers must be rejected as well, so test for strictly-greater.
        let all_positive = powers
            .iter()
            .all(|p| p.partial_cmp(&0.0) == Some(std::cmp::Ordering::Greater));
        if !descending || !all_positive {
            return Err(MultilayerError::NonDescendingPowers);
        }
        Ok(LayerPlan { code, powers })
    }

    pub fn code(&self) -> &BchSignatureCode {
        &self.code
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn layer_count(&self) -> usize {
        self.powers.len()
    }

    /// Amplitude at which layer `j` is received.
    pub fn amplitude(&self, j: usize) -> f64 {
        self.powers[j].sqrt()
    }
}

/// Detector run inside each SIC stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SicDetector {
    #[default]
    Bma,
    Mld,
}

/// Noiseless multi-layer superposition of one message set per layer.
pub fn synth_layers(
    plan: &LayerPlan,
    sets: &[Vec<MessageId>],
) -> Result<Vec<f64>, MultilayerError> {
    if sets.len() != plan.layer_count() {
        return Err(MultilayerError::LayerCountMismatch {
            plan: plan.layer_count(),
            got: sets.len(),
        });
    }
    let mut chips = vec![0.0; plan.code.seq_len()];
    for (j, set) in sets.iter().enumerate() {
        let layer = synth_superposition(&plan.code, None, set, plan.amplitude(j))
            .map_err(DetectorError::from)?;
        for (acc, c) in chips.iter_mut().zip(layer) {
            *acc += c;
        }
    }
    Ok(chips)
}

/// Successive interference cancellation: decode layers strongest first,
/// subtract each successful layer's resynthesis, and return one decode
/// result per layer. Failures never abort the chain; the failed layer
/// simply stays in the residual seen by weaker layers.
pub fn sic_receive(
    block: &ReceivedBlock,
    plan: &LayerPlan,
    detector: SicDetector,
) -> Result<Vec<DecodedSet>, MultilayerError> {
    let t = plan.code.capability();
    let mut residual = block.chips.clone();
    let mut results = Vec::with_capacity(plan.layer_count());
    for j in 0..plan.layer_count() {
        let interference: f64 = plan.powers[j + 1..]
            .iter()
            .map(|p| p * t as f64 / 2.0)
            .sum();
        let layer_block = ReceivedBlock {
            chips: residual.clone(),
            amplitude: plan.amplitude(j),
            noise_var: block.noise_var + interference,
        };
        let decoded = match detector {
            SicDetector::Bma => {
                joint_activity_bma(&plan.code, None, DecisionMode::Hard, &layer_block, t)?
            }
            SicDetector::Mld => {
                let out = mld_decode(&plan.code, None, &layer_block, t, None)?;
                DecodedSet {
                    messages: out.messages,
                    status: DecodeStatus::Success,
                    field_ops: 0,
                }
            }
        };
        if decoded.status == DecodeStatus::Success && !decoded.messages.is_empty() {
            let synth =
                synth_superposition(&plan.code, None, &decoded.messages, plan.amplitude(j))
                    .map_err(DetectorError::from)?;
            for (r, s) in residual.iter_mut().zip(synth) {
                *r -= s;
            }
        }
        results.push(decoded);
    }
    Ok(results)
}

/// One grid point of the power search with its Monte Carlo estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGridPoint {
    pub powers: Vec<f64>,
    pub per_layer_bler: Vec<f64>,
    pub minmax_bler: f64,
}

#[derive(Debug, Clone)]
pub struct PowerOptResult {
    pub plan: LayerPlan,
    pub minmax_bler: f64,
    pub grid: Vec<PowerGridPoint>,
}

/// Estimates per-layer message error rates for one power assignment.
/// Every layer carries `users_per_layer` distinct random messages per
/// trial; trial randomness comes from `(seed, point, trial)` streams so
/// grid points can be evaluated in parallel deterministically.
fn evaluate_point(
    code: &BchSignatureCode,
    powers: &[f64],
    noise_var: f64,
    users_per_layer: usize,
    trials: usize,
    seed: u64,
    point: u64,
) -> Vec<f64> {
    let plan = LayerPlan::new(code.clone(), powers.to_vec()).expect("grid powers are ordered");
    let n = code.message_count();
    let layers = powers.len();
    let mut errors = vec![0u64; layers];
    for trial in 0..trials {
        let mut rng = ns_stream(seed, ns::POWER, (point << 24) | trial as u64);
        let sets: Vec<Vec<MessageId>> = (0..layers)
            .map(|_| {
                let mut set: Vec<MessageId> = rand::seq::index::sample(&mut rng, n, users_per_layer)
                    .into_iter()
                    .map(|i| (i + 1) as MessageId)
                    .collect();
                set.sort_unstable();
                set
            })
            .collect();
        let clean = synth_layers(&plan, &sets).expect("set count matches plan");
        let block = ReceivedBlock {
            chips: awgn_add(&clean, noise_var, &mut rng),
            amplitude: 1.0,
            noise_var,
        };
        let decoded = sic_receive(&block, &plan, SicDetector::Bma).expect("valid block");
        for (j, set) in sets.iter().enumerate() {
            let hit = &decoded[j];
            for m in set {
                let recovered =
                    hit.status == DecodeStatus::Success && hit.messages.contains(m);
                if !recovered {
                    errors[j] += 1;
                }
            }
        }
    }
    let denom = (trials * users_per_layer) as f64;
    errors.iter().map(|&e| e as f64 / denom).collect()
}

/// Exhaustive min-max power search over a geometric grid spanning three
/// decades below `p_max` (`levels` points per layer). Ties prefer lower
/// total power, then earlier grid order.
#[allow(clippy::too_many_arguments)]
pub fn optimize_power_allocation(
    code: &BchSignatureCode,
    layer_count: usize,
    p_max: f64,
    noise_var: f64,
    users_per_layer: usize,
    trials: usize,
    seed: u64,
    levels: usize,
) -> Result<PowerOptResult, MultilayerError> {
    if !(1..=2).contains(&layer_count) {
        return Err(MultilayerError::LayerCountUnsupported(layer_count));
    }
    let grid_levels: Vec<f64> = (0..levels)
        .map(|i| {
            let frac = if levels == 1 { 0.0 } else { i as f64 / (levels - 1) as f64 };
            p_max * 10f64.powf(-3.0 * frac)
        })
        .collect();
    let mut candidates: Vec<Vec<f64>> = Vec::new();
    match layer_count {
        1 => {
            for &p in &grid_levels {
                candidates.push(vec![p]);
            }
        }
        _ => {
            for (i, &p1) in grid_levels.iter().enumerate() {
                for &p2 in &grid_levels[i + 1..] {
                    candidates.push(vec![p1, p2]);
                }
            }
        }
    }
    if candidates.is_empty() {
        return Err(MultilayerError::InfeasibleGrid);
    }

    let grid: Vec<PowerGridPoint> = candidates
        .par_iter()
        .enumerate()
        .map(|(idx, powers)| {
            let per_layer_bler = evaluate_point(
                code,
                powers,
                noise_var,
                users_per_layer,
                trials,
                seed,
                idx as u64,
            );
            let minmax_bler = per_layer_bler.iter().cloned().fold(0.0, f64::max);
            PowerGridPoint {
                powers: powers.clone(),
                per_layer_bler,
                minmax_bler,
            }
        })
        .collect();

    // BLER is nonincreasing in power for a lone layer, so full power is
    // optimal regardless of Monte Carlo ties; the search only arbitrates
    // the genuine strong/weak trade-off of two layers.
    let mut best = 0usize;
    if layer_count > 1 {
        for (i, point) in grid.iter().enumerate().skip(1) {
            let b = &grid[best];
            let total: f64 = point.powers.iter().sum();
            let best_total: f64 = b.powers.iter().sum();
            if point.minmax_bler < b.minmax_bler
                || (point.minmax_bler == b.minmax_bler && total < best_total)
            {
                best = i;
            }
        }
    }
    Ok(PowerOptResult {
        plan: LayerPlan::new(code.clone(), grid[best].powers.clone())?,
        minmax_bler: grid[best].minmax_bler,
        grid,
    })
}

/// Channel and power budget of one user in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserState {
    pub channel_gain: f64,
    pub p_max_tx: f64,
}

/// Layer selection policy.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerPolicy {
    /// Pick the highest-power affordable layer. With `literal_least` the
    /// user instead picks the cheapest affordable layer, the literal
    /// "least transmit power" reading; it ignores channel quality and is
    /// kept for comparison.
    ChannelBased { literal_least: bool },
    /// Draw among affordable layers with the given (renormalized)
    /// probabilities, one per layer.
    Random { probabilities: Vec<f64> },
}

/// Outcome of layer selection; `Outage` means no layer's required
/// transmit power `P_j / g` fits under the user's ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerChoice {
    Layer(usize),
    Outage,
}

pub fn select_layer<R: Rng>(
    policy: &LayerPolicy,
    user: &UserState,
    plan: &LayerPlan,
    rng: &mut R,
) -> LayerChoice {
    let feasible: Vec<usize> = (0..plan.layer_count())
        .filter(|&j| plan.powers()[j] / user.channel_gain <= user.p_max_tx)
        .collect();
    if feasible.is_empty() {
        return LayerChoice::Outage;
    }
    match policy {
        LayerPolicy::ChannelBased { literal_least } => {
            // powers are descending, so the first feasible index is the
            // highest-power layer and the last is the cheapest
            if *literal_least {
                LayerChoice::Layer(*feasible.last().unwrap())
            } else {
                LayerChoice::Layer(feasible[0])
            }
        }
        LayerPolicy::Random { probabilities } => {
            let weights: Vec<f64> = feasible.iter().map(|&j| probabilities[j]).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return LayerChoice::Layer(feasible[0]);
            }
            let mut draw = rng.gen_range(0.0..total);
            for (w, &j) in weights.iter().zip(&feasible) {
                if draw < *w {
                    return LayerChoice::Layer(j);
                }
                draw -= w;
            }
            LayerChoice::Layer(*feasible.last().unwrap())
        }
    }
}

/// Closed-form outage probability of a Rayleigh-faded user that must
/// reach received power `power` under transmit ceiling `p_max_tx`:
/// outage iff `g < power / p_max_tx` with `g ~ Exp(1)`.
pub fn single_layer_outage_probability(power: f64, p_max_tx: f64) -> f64 {
    1.0 - (-power / p_max_tx).exp()
}

/// Plan-level closed form: a user is in outage only when even the
/// cheapest layer is unreachable.
pub fn plan_outage_probability(plan: &LayerPlan, p_max_tx: f64) -> f64 {
    let cheapest = *plan.powers().last().unwrap();
    single_layer_outage_probability(cheapest, p_max_tx)
}

/// Channel gain model for arriving users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fading {
    /// Rayleigh envelope: power gain exponential, unit mean.
    Rayleigh,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSimConfig {
    /// Poisson mean arrivals per round.
    pub arrival_rate: f64,
    pub p_max_tx: f64,
    pub fading: Fading,
    pub policy: LayerPolicy,
    pub noise_var: f64,
    pub rounds: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilayerMetrics {
    pub rounds: u64,
    pub offered_packets: u64,
    pub outage_count: u64,
    pub outage_probability: f64,
    pub per_layer_attempts: Vec<u64>,
    pub per_layer_errors: Vec<u64>,
    /// Message error rate per layer; NaN when the layer saw no traffic.
    pub per_layer_bler: Vec<f64>,
    pub recovered_total: u64,
    /// Recovered packets per round.
    pub goodput: f64,
}

/// Slot-level Monte Carlo of the full layered uplink: Poisson arrivals,
/// per-user fading and layer selection, superposition, SIC reception.
/// Users in outage stay silent for the round.
pub fn simulate_multilayer_rounds(
    plan: &LayerPlan,
    cfg: &RoundSimConfig,
) -> Result<MultilayerMetrics, MultilayerError> {
    let layers = plan.layer_count();
    let n = plan.code.message_count();
    let mut offered = 0u64;
    let mut outages = 0u64;
    let mut attempts = vec![0u64; layers];
    let mut errors = vec![0u64; layers];
    let poisson = if cfg.arrival_rate > 0.0 {
        Some(Poisson::new(cfg.arrival_rate).expect("positive rate"))
    } else {
        None
    };

    for round in 0..cfg.rounds {
        let mut rng = ns_stream(cfg.seed, ns::MULTILAYER, round);
        let arrivals = match &poisson {
            Some(p) => p.sample(&mut rng) as u64,
            None => 0,
        };
        let mut sets: Vec<Vec<MessageId>> = vec![Vec::new(); layers];
        for _ in 0..arrivals {
            offered += 1;
            let gain = match cfg.fading {
                Fading::Rayleigh => rng.sample::<f64, _>(Exp1),
                Fading::Constant(g) => g,
            };
            let user = UserState { channel_gain: gain, p_max_tx: cfg.p_max_tx };
            match select_layer(&cfg.policy, &user, plan, &mut rng) {
                LayerChoice::Outage => outages += 1,
                LayerChoice::Layer(j) => {
                    let m = rng.gen_range(1..=n as u16);
                    sets[j].push(m);
                }
            }
        }
        if sets.iter().all(|s| s.is_empty()) {
            continue;
        }
        let clean = synth_layers(plan, &sets)?;
        let block = ReceivedBlock {
            chips: awgn_add(&clean, cfg.noise_var, &mut rng),
            amplitude: 1.0,
            noise_var: cfg.noise_var,
        };
        let decoded = sic_receive(&block, plan, SicDetector::Bma)?;
        for (j, set) in sets.iter().enumerate() {
            attempts[j] += set.len() as u64;
            for m in set {
                let ok = decoded[j].status == DecodeStatus::Success
                    && decoded[j].messages.contains(m);
                if !ok {
                    errors[j] += 1;
                }
            }
        }
    }

    let recovered: u64 = attempts.iter().sum::<u64>() - errors.iter().sum::<u64>();
    Ok(MultilayerMetrics {
        rounds: cfg.rounds,
        offered_packets: offered,
        outage_count: outages,
        outage_probability: if offered == 0 {
            f64::NAN
        } else {
            outages as f64 / offered as f64
        },
        per_layer_bler: attempts
            .iter()
            .zip(&errors)
            .map(|(&a, &e)| if a == 0 { f64::NAN } else { e as f64 / a as f64 })
            .collect(),
        per_layer_attempts: attempts,
        per_layer_errors: errors,
        recovered_total: recovered,
        goodput: recovered as f64 / cfg.rounds as f64,
    })
}
