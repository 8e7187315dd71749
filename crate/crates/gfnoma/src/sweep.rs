//! Monte Carlo block error rate engine.
//!
//! A sweep walks a grid of (signal quality, active user count) cells.
//! Each cell repeats independent trials: draw distinct messages, build
//! the noisy superposed block, run the configured detector, and count
//! per-message misses and phantom messages. Every trial owns a random
//! stream keyed by its cell and index, so the numbers are identical for
//! any worker count, and a cell stops early once enough error events
//! have accumulated for a tight interval.

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, DetectorChoice, ScenarioConfig};
use crate::detectors::{joint_activity_bma, mld_decode, DecodeStatus, DetectorError};
use crate::neural::checkpoint::{load_model, CheckpointError};
use crate::neural::{dl_detect, Model};
use crate::phy::{
    awgn_add, ebn0_to_noise_var_ratio, synth_superposition, DecisionMode, OuterCode,
    OuterRate, ReceivedBlock,
};
use crate::rng::{ns, ns_stream, trial_stream};
use crate::signatures::{BchSignatureCode, MessageId};

/// Trials grouped per stopping-rule check. Cells always complete whole
/// chunks so the early-stop point is a pure function of the counts.
const CHUNK_TRIALS: u64 = 256;

/// Two-sided 95% normal quantile used by the confidence intervals.
const WILSON_Z: f64 = 1.959963984540054;

/// Score threshold above which the learned detector declares a message.
pub const DL_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model checkpoint {0} is missing")]
    CheckpointMissing(PathBuf),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// One measured grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub ebn0_db: f64,
    pub active_users: usize,
    pub trials: u64,
    pub message_errors: u64,
    pub false_alarms: u64,
    /// Fraction of transmitted messages missing from the decoded set.
    pub bler: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Phantom decoded messages per trial.
    pub false_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub points: Vec<CurvePoint>,
}

/// 95% Wilson score interval for `errors` out of `n` Bernoulli draws.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // at the boundaries center and half agree analytically; rounding
    // must not leave a denormal sliver behind
    let low = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if p == 1.0 { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

enum Engine {
    Classical {
        code: BchSignatureCode,
        outer: Option<OuterCode>,
        kind: DetectorChoice,
    },
    Learned {
        model: Model,
        t_max: usize,
    },
}

impl Engine {
    fn message_count(&self) -> usize {
        match self {
            Engine::Classical { code, .. } => code.message_count(),
            Engine::Learned { model, .. } => model.message_count(),
        }
    }

    fn noise_var(&self, ebn0_db: f64, amplitude: f64) -> f64 {
        let chips_per_bit = match self {
            Engine::Classical { code, outer, .. } => {
                let rate = if outer.is_some() { 0.5 } else { 1.0 };
                code.capability() as f64 / rate
            }
            Engine::Learned { model, .. } => model.chips_per_bit(),
        };
        ebn0_to_noise_var_ratio(ebn0_db, amplitude, chips_per_bit)
    }

    /// Runs one trial and returns (missed messages, phantom messages).
    fn trial(
        &self,
        sent: &[MessageId],
        amplitude: f64,
        noise_var: f64,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<(u64, u64), DetectorError> {
        let decoded = match self {
            Engine::Classical { code, outer, kind } => {
                let clean = synth_superposition(code, outer.as_ref(), sent, amplitude)?;
                let block = ReceivedBlock {
                    chips: awgn_add(&clean, noise_var, rng),
                    amplitude,
                    noise_var,
                };
                match kind {
                    DetectorChoice::Bma => {
                        let out = joint_activity_bma(
                            code,
                            outer.as_ref(),
                            DecisionMode::Hard,
                            &block,
                            code.capability(),
                        )?;
                        if out.status == DecodeStatus::Success {
                            out.messages
                        } else {
                            Vec::new()
                        }
                    }
                    DetectorChoice::Mld => {
                        mld_decode(code, outer.as_ref(), &block, code.capability(), None)?
                            .messages
                    }
                    DetectorChoice::Dl => unreachable!("learned engine handles dl"),
                }
            }
            Engine::Learned { model, t_max } => {
                let mut chips = vec![0.0; model.chip_count()];
                for &m in sent {
                    let user = model.encode_hard((m - 1) as usize);
                    for (c, u) in chips.iter_mut().zip(user) {
                        *c += u;
                    }
                }
                let block = ReceivedBlock {
                    chips: awgn_add(&chips, noise_var, rng),
                    amplitude,
                    noise_var,
                };
                let out = dl_detect(model, &block, DL_THRESHOLD, *t_max);
                if out.status == DecodeStatus::Success {
                    out.messages
                } else {
                    Vec::new()
                }
            }
        };
        let misses = sent.iter().filter(|m| !decoded.contains(m)).count() as u64;
        let alarms = decoded.iter().filter(|m| !sent.contains(m)).count() as u64;
        Ok((misses, alarms))
    }
}

fn build_engine(cfg: &ScenarioConfig) -> Result<Engine, SweepError> {
    let code = cfg.code.build()?;
    match cfg.detector {
        DetectorChoice::Dl => {
            let path = cfg
                .model_path
                .as_ref()
                .ok_or(ConfigError::MissingModelPath)?;
            if !path.exists() {
                return Err(SweepError::CheckpointMissing(path.clone()));
            }
            let model = load_model(path)?;
            if model.message_count() != code.message_count() {
                return Err(ConfigError::Invalid(format!(
                    "model covers {} messages but the code has {}",
                    model.message_count(),
                    code.message_count()
                ))
                .into());
            }
            Ok(Engine::Learned { model, t_max: code.capability() })
        }
        kind => {
            let outer = match cfg.outer_rate_enum()? {
                OuterRate::Unity => None,
                OuterRate::Half => Some(OuterCode::standard()),
            };
            Ok(Engine::Classical { code, outer, kind })
        }
    }
}

/// Runs the whole grid. Rows come back sorted by (signal quality,
/// active users); the trial streams are keyed by the cell's position in
/// the configured grid, so reordering the grid reorders work without
/// changing any cell's result.
pub fn run_bler_sweep(cfg: &ScenarioConfig) -> Result<SweepTable, SweepError> {
    cfg.validate()?;
    let engine = build_engine(cfg)?;
    let n = engine.message_count();

    let mut cells = Vec::new();
    for &ebn0_db in &cfg.ebn0_grid_db {
        for &users in &cfg.activity.user_counts() {
            cells.push((ebn0_db, users));
        }
    }

    let mut points = Vec::with_capacity(cells.len());
    for (cell_index, &(ebn0_db, users)) in cells.iter().enumerate() {
        let noise_var = engine.noise_var(ebn0_db, cfg.amplitude);
        let mut trials = 0u64;
        let mut message_errors = 0u64;
        let mut false_alarms = 0u64;
        while trials < cfg.trials_per_point {
            let chunk = CHUNK_TRIALS.min(cfg.trials_per_point - trials);
            let (miss, alarm) = (0..chunk)
                .into_par_iter()
                .map(|i| {
                    let trial = trials + i;
                    let mut rng = ns_stream(
                        cfg.seed,
                        ns::SWEEP,
                        trial_stream(cell_index as u64, trial),
                    );
                    let mut sent: Vec<MessageId> =
                        rand::seq::index::sample(&mut rng, n, users)
                            .into_iter()
                            .map(|i| (i + 1) as MessageId)
                            .collect();
                    sent.sort_unstable();
                    engine.trial(&sent, cfg.amplitude, noise_var, &mut rng)
                })
                .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
            trials += chunk;
            message_errors += miss;
            false_alarms += alarm;
            if message_errors >= cfg.min_error_events {
                break;
            }
        }
        let attempts = trials * users as u64;
        let (ci_low, ci_high) = wilson_interval(message_errors, attempts);
        points.push(CurvePoint {
            ebn0_db,
            active_users: users,
            trials,
            message_errors,
            false_alarms,
            bler: message_errors as f64 / attempts as f64,
            ci_low,
            ci_high,
            false_alarm_rate: false_alarms as f64 / trials as f64,
        });
    }
    points.sort_by(|a, b| {
        a.ebn0_db
            .total_cmp(&b.ebn0_db)
            .then(a.active_users.cmp(&b.active_users))
    });
    Ok(SweepTable { points })
}

impl SweepTable {
    /// Deterministic CSV. The header pins the configuration digest and
    /// the exact noise calibration so a curve can never be separated
    /// from its energy convention.
    pub fn to_csv(&self, cfg: &ScenarioConfig) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_sha256 = {}\n", cfg.digest()));
        out.push_str(
            "# calibration: noise_var = amplitude^2 * chips_per_bit / (2 * 10^(ebn0_db/10)), \
             chips_per_bit = T / R for algebraic chains or model chips per message bit\n",
        );
        out.push_str(
            "scenario_id,detector,ebn0_db,active_users,trials,message_errors,false_alarms,bler,ci_low,ci_high\n",
        );
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                cfg.scenario_id,
                cfg.detector.label(),
                p.ebn0_db,
                p.active_users,
                p.trials,
                p.message_errors,
                p.false_alarms,
                p.bler,
                p.ci_low,
                p.ci_high
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ActivityModel, CodeConfig};

    fn base_config() -> ScenarioConfig {
        ScenarioConfig {
            scenario_id: "test".into(),
            code: CodeConfig { k: 4, t: 2, primitive_poly: None },
            outer_rate: 1.0,
            detector: DetectorChoice::Bma,
            model_path: None,
            amplitude: 1.0,
            ebn0_grid_db: vec![6.0],
            activity: ActivityModel::Fixed(2),
            trials_per_point: 512,
            // effectively "never stop early" while staying in the range
            // the config serializer can represent
            min_error_events: 1 << 62,
            seed: 5,
            workers: 0,
        }
    }

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.0370).abs() < 5e-4, "hi {hi}");
        let (lo, hi) = wilson_interval(50, 100);
        assert!((lo - 0.4038).abs() < 5e-4, "lo {lo}");
        assert!((hi - 0.5962).abs() < 5e-4, "hi {hi}");
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn interval_width_scales_like_root_n() {
        // same error fraction, twice the sample: width shrinks by about
        // 1/sqrt(2), comfortably within 20%
        let width = |e, n| {
            let (lo, hi) = wilson_interval(e, n);
            hi - lo
        };
        let ratio = width(64, 2048) / width(32, 1024);
        assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.2 * ratio, "ratio {ratio}");
    }

    #[test]
    fn effectively_noiseless_grid_point_has_zero_errors() {
        let mut cfg = base_config();
        cfg.ebn0_grid_db = vec![200.0];
        let table = run_bler_sweep(&cfg).unwrap();
        let p = &table.points[0];
        assert_eq!(p.trials, 512);
        assert_eq!(p.message_errors, 0);
        assert_eq!(p.false_alarms, 0);
        assert_eq!(p.bler, 0.0);
        assert_eq!(p.ci_low, 0.0);
    }

    #[test]
    fn csv_is_identical_across_worker_counts() {
        let mut cfg = base_config();
        cfg.ebn0_grid_db = vec![4.0, 6.0];
        let run_with = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_bler_sweep(&cfg).unwrap().to_csv(&cfg))
        };
        let single = run_with(1);
        let multi = run_with(4);
        assert_eq!(single, multi);
        assert!(single.contains(&format!("# config_sha256 = {}", cfg.digest())));
    }

    #[test]
    fn early_stop_lands_on_a_chunk_boundary() {
        let mut cfg = base_config();
        cfg.ebn0_grid_db = vec![0.0];
        cfg.trials_per_point = 1_000_000;
        cfg.min_error_events = 100;
        let table = run_bler_sweep(&cfg).unwrap();
        let p = &table.points[0];
        assert!(p.message_errors >= 100);
        assert!(p.trials < 1_000_000);
        assert_eq!(p.trials % CHUNK_TRIALS, 0);
    }

    #[test]
    fn rows_sorted_and_stratified() {
        let mut cfg = base_config();
        cfg.ebn0_grid_db = vec![8.0, 4.0];
        cfg.activity = ActivityModel::UniformUpTo(2);
        cfg.trials_per_point = 256;
        let table = run_bler_sweep(&cfg).unwrap();
        let key: Vec<(f64, usize)> =
            table.points.iter().map(|p| (p.ebn0_db, p.active_users)).collect();
        assert_eq!(key, vec![(4.0, 1), (4.0, 2), (8.0, 1), (8.0, 2)]);
        let csv = table.to_csv(&cfg);
        let header = csv.lines().nth(2).unwrap();
        assert_eq!(
            header,
            "scenario_id,detector,ebn0_db,active_users,trials,message_errors,false_alarms,bler,ci_low,ci_high"
        );
        assert_eq!(csv.lines().count(), 3 + 4);
        assert!(csv.lines().nth(3).unwrap().starts_with("test,bma,4,1,256,"));
    }

    #[test]
    fn bler_declines_along_the_grid() {
        let mut cfg = base_config();
        cfg.ebn0_grid_db = vec![2.0, 6.0, 10.0];
        cfg.trials_per_point = 2048;
        let table = run_bler_sweep(&cfg).unwrap();
        let blers: Vec<f64> = table.points.iter().map(|p| p.bler).collect();
        assert!(blers[0] > blers[2], "no decline across 8 dB: {blers:?}");
        for w in blers.windows(2) {
            assert!(w[1] <= w[0], "bler increased along the grid: {blers:?}");
        }
    }

    #[test]
    fn mld_never_loses_to_bma_on_the_small_code() {
        let mut cfg = base_config();
        cfg.ebn0_grid_db = vec![4.0];
        cfg.trials_per_point = 768;
        let bma = run_bler_sweep(&cfg).unwrap().points[0].clone();
        cfg.detector = DetectorChoice::Mld;
        let mld = run_bler_sweep(&cfg).unwrap().points[0].clone();
        // identical trial streams, so the comparison is paired
        assert!(mld.message_errors <= bma.message_errors);
    }

    #[test]
    fn learned_detector_path_round_trips() {
        use crate::neural::checkpoint::save_model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.bin");
        let model = Model::init(
            crate::neural::MlpSpec::new(vec![15, 24, 8]).unwrap(),
            crate::neural::MlpSpec::new(vec![8, 24, 15]).unwrap(),
            1.0,
            3,
        )
        .unwrap();
        save_model(&path, &model).unwrap();

        let mut cfg = base_config();
        cfg.detector = DetectorChoice::Dl;
        cfg.model_path = Some(path);
        cfg.trials_per_point = 256;
        let table = run_bler_sweep(&cfg).unwrap();
        // an untrained net is a terrible detector; only the plumbing and
        // the accounting are under test here
        let p = &table.points[0];
        assert_eq!(p.trials, 256);
        assert!(p.bler >= 0.0 && p.bler <= 1.0);

        cfg.model_path = Some(dir.path().join("absent.bin"));
        assert!(matches!(
            run_bler_sweep(&cfg).unwrap_err(),
            SweepError::CheckpointMissing(_)
        ));
    }

    #[test]
    fn learned_detector_rejects_mismatched_code() {
        use crate::neural::checkpoint::save_model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wide.bin");
        let model = Model::init(
            crate::neural::MlpSpec::new(vec![63, 16, 24]).unwrap(),
            crate::neural::MlpSpec::new(vec![24, 16, 63]).unwrap(),
            1.0,
            9,
        )
        .unwrap();
        save_model(&path, &model).unwrap();
        let mut cfg = base_config();
        cfg.detector = DetectorChoice::Dl;
        cfg.model_path = Some(path);
        let err = run_bler_sweep(&cfg).unwrap_err();
        assert!(matches!(err, SweepError::Config(ConfigError::Invalid(_))), "{err}");
    }
}
