//! Cell-level grant-free access simulation.
//!
//! Users arrive per frame, pick a grant-free resource unit (GFRU) and a
//! signature uniformly at random inside their cluster's partition, and
//! transmit once with no retransmission. Two adjudication modes share
//! the same arrival realizations:
//!
//! * `Abstract`: a packet succeeds iff its signature is unique within
//!   its GFRU and the GFRU holds at most `T` packets.
//! * `FullPhy`: the packets in each GFRU are superposed at a configured
//!   signal-to-noise operating point and run through the actual
//!   multiuser detector; a packet succeeds iff its message appears in
//!   the decoded set. Duplicate signatures can still be recovered as a
//!   single message here, so full-physics success dominates the
//!   abstract count.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use thiserror::Error;

use crate::detectors::{joint_activity_bma, DecodeStatus, DetectorError};
use crate::galois::FieldTables;
use crate::phy::{awgn_add, ebn0_to_noise_var, synth_superposition, DecisionMode, ReceivedBlock};
use crate::rng::{ns, ns_stream};
use crate::signatures::{BchSignatureCode, MessageId, SignatureError};

#[derive(Debug, Error, PartialEq)]
pub enum SysimError {
    #[error("cluster id {0} appears more than once")]
    DuplicateCluster(u32),
    #[error("traffic references unknown cluster id {0}")]
    UnknownCluster(u32),
    #[error("cluster {cluster}: arrival rate {rate} invalid for population {population}")]
    RateExceedsPopulation { cluster: u32, rate: f64, population: u64 },
    #[error("cluster {cluster}: gfru_count must be positive")]
    NoGfrus { cluster: u32 },
    #[error("cluster {cluster}: pool size {pool} is not 2^k - 1 for k in 2..=16")]
    PoolNotFieldSized { cluster: u32, pool: usize },
    #[error("frame_count must be positive")]
    NoFrames,
    #[error(transparent)]
    Galois(#[from] crate::galois::GaloisError),
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// One cluster's slice of the grant-free resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NomaPartition {
    pub cluster_id: u32,
    /// Grant-free resource units dedicated to this cluster.
    pub gfru_count: usize,
    /// Signatures users draw from (messages `1..=pool`).
    pub signature_pool_size: usize,
    /// Per-GFRU multiuser capability of the receiver.
    pub capability: usize,
}

/// Static resource split. `oma_block_count` records how many scheduled
/// blocks the cell keeps aside; those carry no grant-free traffic and
/// only matter for capacity bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourcePoolConfig {
    pub noma_partitions: Vec<NomaPartition>,
    pub oma_block_count: usize,
    pub frame_count: u64,
}

/// Mean arrivals per frame for one cluster. With a finite `population`
/// of N users each user transmits independently with probability
/// `arrival_rate / N`; otherwise arrivals are Poisson.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTraffic {
    pub cluster_id: u32,
    pub arrival_rate: f64,
    pub population: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrafficConfig {
    pub clusters: Vec<ClusterTraffic>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimMode {
    Abstract,
    FullPhy { ebn0_db: f64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMetrics {
    pub cluster_id: u32,
    pub frames: u64,
    pub offered: u64,
    pub successes: u64,
    /// Packets whose signature was also drawn by another packet in the
    /// same GFRU and frame.
    pub collisions: u64,
    /// Offered packets per frame.
    pub offered_load: f64,
    /// Successful packets per frame.
    pub throughput: f64,
    /// Successes over offered; NaN when nothing was offered.
    pub success_prob: f64,
    pub collision_rate: f64,
    /// `occupancy_histogram[l]` counts (GFRU, frame) cells that held
    /// exactly `l` packets.
    pub occupancy_histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SystemReport {
    pub clusters: Vec<ClusterMetrics>,
}

/// Success probability of a tagged packet when the other packets on its
/// GFRU arrive as Poisson with mean `other_rate` and draw from `pool`
/// signatures: the GFRU must stay within capability and nobody else may
/// draw the tagged signature.
pub fn analytic_success_probability(other_rate: f64, pool: usize, capability: usize) -> f64 {
    let miss = (pool as f64 - 1.0) / pool as f64;
    let mut term = (-other_rate).exp();
    let mut total = 0.0;
    for l in 0..capability {
        total += term * miss.powi(l as i32);
        term *= other_rate / (l + 1) as f64;
    }
    total
}

struct Packet {
    gfru: usize,
    signature: usize,
}

fn validate(
    pools: &ResourcePoolConfig,
    traffic: &TrafficConfig,
    mode: &SimMode,
) -> Result<(), SysimError> {
    if pools.frame_count == 0 {
        return Err(SysimError::NoFrames);
    }
    let mut seen = Vec::new();
    for p in &pools.noma_partitions {
        if seen.contains(&p.cluster_id) {
            return Err(SysimError::DuplicateCluster(p.cluster_id));
        }
        seen.push(p.cluster_id);
        if p.gfru_count == 0 {
            return Err(SysimError::NoGfrus { cluster: p.cluster_id });
        }
        if matches!(mode, SimMode::FullPhy { .. }) {
            let width = (p.signature_pool_size + 1).trailing_zeros();
            let field_sized = (p.signature_pool_size + 1).is_power_of_two()
                && (2..=16).contains(&width);
            if !field_sized {
                return Err(SysimError::PoolNotFieldSized {
                    cluster: p.cluster_id,
                    pool: p.signature_pool_size,
                });
            }
        }
    }
    for t in &traffic.clusters {
        if !seen.contains(&t.cluster_id) {
            return Err(SysimError::UnknownCluster(t.cluster_id));
        }
        if let Some(n) = t.population {
            if t.arrival_rate > n as f64 || t.arrival_rate < 0.0 {
                return Err(SysimError::RateExceedsPopulation {
                    cluster: t.cluster_id,
                    rate: t.arrival_rate,
                    population: n,
                });
            }
        }
    }
    Ok(())
}

/// Runs the frame loop. Each cluster consumes its own deterministic
/// random streams keyed by `(cluster index, frame)`, so adding or
/// reconfiguring one cluster never perturbs another cluster's sample
/// path, and both adjudication modes see identical arrivals because
/// packet draws happen before any mode-specific randomness.
pub fn run_system_sim(
    pools: &ResourcePoolConfig,
    traffic: &TrafficConfig,
    mode: &SimMode,
    seed: u64,
) -> Result<SystemReport, SysimError> {
    validate(pools, traffic, mode)?;
    let mut clusters = Vec::new();
    for part in &pools.noma_partitions {
        let demand = traffic
            .clusters
            .iter()
            .find(|t| t.cluster_id == part.cluster_id);
        let code = match mode {
            SimMode::FullPhy { .. } => {
                let k = (part.signature_pool_size + 1).trailing_zeros();
                Some(BchSignatureCode::new(
                    FieldTables::with_default_poly(k)?,
                    part.capability,
                )?)
            }
            SimMode::Abstract => None,
        };
        clusters.push(simulate_cluster(
            part,
            demand,
            mode,
            code.as_ref(),
            seed,
            pools.frame_count,
        )?);
    }
    Ok(SystemReport { clusters })
}

#[allow(clippy::too_many_arguments)]
fn simulate_cluster(
    part: &NomaPartition,
    demand: Option<&ClusterTraffic>,
    mode: &SimMode,
    code: Option<&BchSignatureCode>,
    seed: u64,
    frames: u64,
) -> Result<ClusterMetrics, SysimError> {
    // streams are keyed by the cluster's identity, not its list
    // position, so reconfiguring one cluster leaves the others'
    // sample paths untouched
    debug_assert!(part.cluster_id < (1 << 24));
    let rate = demand.map(|d| d.arrival_rate).unwrap_or(0.0);
    let population = demand.and_then(|d| d.population);
    let poisson = if population.is_none() && rate > 0.0 {
        Some(Poisson::new(rate).expect("positive rate"))
    } else {
        None
    };
    let binomial = population.and_then(|n| {
        if n == 0 || rate <= 0.0 {
            None
        } else {
            Some(Binomial::new(n, rate / n as f64).expect("probability in range"))
        }
    });

    let mut offered = 0u64;
    let mut successes = 0u64;
    let mut collisions = 0u64;
    let mut histogram: Vec<u64> = Vec::new();
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); part.gfru_count];

    for frame in 0..frames {
        let mut rng = ns_stream(seed, ns::SYSTEM, (part.cluster_id as u64) << 32 | frame);
        let arrivals = match (&poisson, &binomial) {
            (Some(p), _) => p.sample(&mut rng) as u64,
            (_, Some(b)) => b.sample(&mut rng),
            _ => 0,
        };
        let mut packets = Vec::with_capacity(arrivals as usize);
        for _ in 0..arrivals {
            packets.push(Packet {
                gfru: rng.gen_range(0..part.gfru_count),
                signature: rng.gen_range(1..=part.signature_pool_size),
            });
        }
        offered += arrivals;

        for cell in &mut cells {
            cell.clear();
        }
        for p in &packets {
            cells[p.gfru].push(p.signature);
        }
        for cell in &cells {
            let l = cell.len();
            if histogram.len() <= l {
                histogram.resize(l + 1, 0);
            }
            histogram[l] += 1;
        }

        for cell in &cells {
            if cell.is_empty() {
                continue;
            }
            for (i, sig) in cell.iter().enumerate() {
                let duplicated = cell
                    .iter()
                    .enumerate()
                    .any(|(j, other)| j != i && other == sig);
                if duplicated {
                    collisions += 1;
                }
            }
            match mode {
                SimMode::Abstract => {
                    if cell.len() <= part.capability {
                        for (i, sig) in cell.iter().enumerate() {
                            let unique = !cell
                                .iter()
                                .enumerate()
                                .any(|(j, other)| j != i && other == sig);
                            if unique {
                                successes += 1;
                            }
                        }
                    }
                }
                SimMode::FullPhy { ebn0_db, amplitude } => {
                    let code = code.expect("full-physics mode builds a code");
                    let messages: Vec<MessageId> =
                        cell.iter().map(|&s| s as MessageId).collect();
                    let clean = synth_superposition(code, None, &messages, *amplitude)
                        .map_err(DetectorError::from)?;
                    let noise_var = ebn0_to_noise_var(
                        *ebn0_db,
                        *amplitude,
                        code.capability(),
                        crate::phy::OuterRate::Unity,
                    );
                    let block = ReceivedBlock {
                        chips: awgn_add(&clean, noise_var, &mut rng),
                        amplitude: *amplitude,
                        noise_var,
                    };
                    let decoded = joint_activity_bma(
                        code,
                        None,
                        DecisionMode::Hard,
                        &block,
                        code.capability(),
                    )?;
                    if decoded.status == DecodeStatus::Success {
                        for m in &messages {
                            if decoded.messages.contains(m) {
                                successes += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok(ClusterMetrics {
        cluster_id: part.cluster_id,
        frames,
        offered,
        successes,
        collisions,
        offered_load: offered as f64 / frames as f64,
        throughput: successes as f64 / frames as f64,
        success_prob: if offered == 0 {
            f64::NAN
        } else {
            successes as f64 / offered as f64
        },
        collision_rate: if offered == 0 {
            f64::NAN
        } else {
            collisions as f64 / offered as f64
        },
        occupancy_histogram: histogram,
    })
}

/// Serializes per-cluster metrics as CSV with a fixed column order.
pub fn metrics_csv(report: &SystemReport, frame_count: u64) -> String {
    let mut out = String::from(
        "cluster_id,frames,offered_load,throughput,success_prob,collision_rate\n",
    );
    for c in &report.clusters {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6}\n",
            c.cluster_id, frame_count, c.offered_load, c.throughput, c.success_prob,
            c.collision_rate
        ));
    }
    out
}
