//! Command line front end.
//!
//! One binary, seven tools: `field-check` (arithmetic self-test),
//! `bler` (error-rate sweep plus plot script), `train` (autoencoder
//! fit), `detect` (single-block decode with the hypothesis table),
//! `power-opt` (layer power search), `sysim` (cell simulation) and
//! `zc-analyze` (sequence correlation report). Exit codes: 0 success,
//! 1 configuration problem, 2 runtime failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{load_config, AppConfig, ConfigError, ScenarioConfig, TrainSection, ZcSection};
use crate::detectors::joint_activity_trace;
use crate::galois::FieldTables;
use crate::multilayer::{optimize_power_allocation, MultilayerError, PowerOptResult};
use crate::neural::checkpoint::save_model;
use crate::neural::{Model, MlpSpec, TrainConfig, TrainError};
use crate::phy::{awgn_add, ebn0_to_noise_var, synth_superposition, DecisionMode, OuterCode, OuterRate, ReceivedBlock};
use crate::plot::emit_plot_script;
use crate::rng::{ns, ns_stream};
use crate::signatures::{periodic_correlation, zc_generate, MessageId, ZcParams};
use crate::sweep::{run_bler_sweep, SweepError};
use crate::sysim::{
    run_system_sim, ClusterTraffic, NomaPartition, ResourcePoolConfig, SimMode, SysimError,
    TrafficConfig,
};

#[derive(Parser, Debug)]
#[command(name = "gfnoma", version, about = "Grant-free multiuser coding toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed found in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 or absent lets the runtime decide.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory for CSV files, scripts and checkpoints.
    #[arg(long, global = true, default_value = "./results")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exhaustively checks table arithmetic against polynomial division.
    FieldCheck {
        /// Field widths to verify.
        #[arg(long, value_delimiter = ',', default_values_t = vec![3u32, 4, 5, 6])]
        widths: Vec<u32>,
    },
    /// Runs the configured error-rate sweep and emits CSV plus a plot script.
    Bler,
    /// Trains the configured autoencoder and saves a checkpoint.
    Train,
    /// Decodes one crafted block and prints the hypothesis table.
    Detect {
        /// Messages to superpose, e.g. --messages 3,7.
        #[arg(long, value_delimiter = ',', required = true)]
        messages: Vec<u16>,
        /// Operating point; omit for a noiseless block.
        #[arg(long)]
        ebn0_db: Option<f64>,
    },
    /// Searches layer powers minimizing the worst per-layer error rate.
    PowerOpt,
    /// Simulates grant-free access at cell scale.
    Sysim,
    /// Reports constant-amplitude sequence correlations.
    ZcAnalyze,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Config(inner) => CliError::Config(inner.to_string()),
            SweepError::CheckpointMissing(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::DivergenceDetected { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<MultilayerError> for CliError {
    fn from(e: MultilayerError) -> Self {
        match e {
            MultilayerError::Detector(inner) => CliError::Runtime(inner.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SysimError> for CliError {
    fn from(e: SysimError) -> Self {
        match e {
            SysimError::Detector(inner) => CliError::Runtime(inner.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

/// Parses `argv` and runs the selected tool, returning the process exit
/// code instead of exiting, which keeps the dispatcher testable.
pub fn cli_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => Some(load_config(path)?),
        None => None,
    };
    match &cli.command {
        Command::FieldCheck { widths } => field_check(widths),
        Command::Bler => bler(&cli, config.as_ref()),
        Command::Train => train_cmd(&cli, config.as_ref()),
        Command::Detect { messages, ebn0_db } => {
            detect(&cli, config.as_ref(), messages, *ebn0_db)
        }
        Command::PowerOpt => power_opt(&cli, config.as_ref()),
        Command::Sysim => sysim_cmd(&cli, config.as_ref()),
        Command::ZcAnalyze => zc_analyze(config.as_ref()),
    }
}

fn section<'c, S>(
    config: Option<&'c AppConfig>,
    pick: impl Fn(&'c AppConfig) -> Option<&'c S>,
    name: &'static str,
) -> Result<&'c S, CliError> {
    config
        .and_then(pick)
        .ok_or(CliError::Config(format!("this command needs a --config file with a [{name}] table")))
}

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)?;
    Ok(())
}

/// Degree of a carryless polynomial, or 0 for the zero polynomial.
fn poly_degree(x: u64) -> u32 {
    63 - x.leading_zeros()
}

/// Multiplication in GF(2^k) done the slow, independent way: carryless
/// schoolbook product followed by long division by the field modulus.
fn oracle_mul(a: u32, b: u32, poly: u32, k: u32) -> u32 {
    let mut acc: u64 = 0;
    let a = a as u64;
    for i in 0..32 {
        if (b >> i) & 1 == 1 {
            acc ^= a << i;
        }
    }
    let poly = poly as u64;
    while acc >= 1 << k {
        let shift = poly_degree(acc) - k;
        acc ^= poly << shift;
    }
    acc as u32
}

fn field_check(widths: &[u32]) -> Result<(), CliError> {
    for &k in widths {
        let field = FieldTables::with_default_poly(k)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let order = field.order() as u32;
        let poly = field.primitive_poly();
        let exhaustive = k <= 8;
        let mut checked = 0u64;
        let mut verify = |a: u32, b: u32| -> Result<(), CliError> {
            let got = field.mul(a as u16, b as u16);
            let want = oracle_mul(a, b, poly, k) as u16;
            if got != want {
                return Err(CliError::Runtime(format!(
                    "GF(2^{k}): {a} * {b} = {got}, oracle says {want}"
                )));
            }
            checked += 1;
            Ok(())
        };
        if exhaustive {
            for a in 0..=order {
                for b in 0..=order {
                    verify(a, b)?;
                }
            }
        } else {
            use rand::Rng;
            let mut rng = ns_stream(0, ns::EVAL, k as u64);
            for _ in 0..20_000 {
                verify(rng.gen_range(0..=order), rng.gen_range(0..=order))?;
            }
        }
        for a in 1..=order {
            let inv = field
                .inv(a as u16)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            if field.mul(a as u16, inv) != 1 {
                return Err(CliError::Runtime(format!(
                    "GF(2^{k}): {a} * inv({a}) != 1"
                )));
            }
        }
        println!(
            "GF(2^{k}) poly {poly:#x}: {checked} products match the division oracle, inverses ok"
        );
    }
    Ok(())
}

fn effective_workers(cli: &Cli, from_config: usize) -> usize {
    cli.workers.unwrap_or(from_config)
}

fn with_pool<R>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, CliError>
where
    R: Send,
{
    if workers == 0 {
        Ok(f())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(pool.install(f))
    }
}

fn bler(cli: &Cli, config: Option<&AppConfig>) -> Result<(), CliError> {
    let mut scenario: ScenarioConfig =
        section(config, |c| c.scenario.as_ref(), "scenario")?.clone();
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    let workers = effective_workers(cli, scenario.workers);
    ensure_out_dir(&cli.out)?;
    let table = with_pool(workers, || run_bler_sweep(&scenario))??;
    let csv = table.to_csv(&scenario);
    let csv_path = cli.out.join(format!("{}.csv", scenario.scenario_id));
    std::fs::write(&csv_path, &csv)?;
    let script_path = cli.out.join(format!("{}.py", scenario.scenario_id));
    emit_plot_script(&csv_path, &script_path)?;
    println!("wrote {} ({} rows) and {}", csv_path.display(), table.points.len(), script_path.display());
    Ok(())
}

fn train_config_from(section: &TrainSection, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::desk_preset(seed);
    if let Some(v) = section.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = section.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = section.minibatch_size {
        cfg.minibatch_size = v;
    }
    if let Some(v) = section.train_size {
        cfg.train_size = v;
    }
    if let Some(v) = section.val_size {
        cfg.val_size = v;
    }
    if let Some(v) = &section.train_ebn0_db {
        cfg.train_ebn0_db = v.clone();
    }
    cfg.activity_max = section.activity_max.unwrap_or(section.code.t);
    cfg
}

fn train_cmd(cli: &Cli, config: Option<&AppConfig>) -> Result<(), CliError> {
    let sec = section(config, |c| c.train.as_ref(), "train")?;
    let code = sec.code.build()?;
    let n = code.message_count();
    let seed = cli.seed.unwrap_or(sec.seed);
    let cfg = train_config_from(sec, seed);

    let encoder = MlpSpec::uniform(n, sec.hidden_width, sec.hidden_layers, sec.chip_count)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let decoder = MlpSpec::uniform(sec.chip_count, sec.hidden_width, sec.hidden_layers, n)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut model = Model::init(encoder, decoder, sec.amplitude, seed)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let report = crate::neural::train(&mut model, &cfg)?;

    ensure_out_dir(&cli.out)?;
    let ckpt_path = cli.out.join(&sec.checkpoint_name);
    save_model(&ckpt_path, &model).map_err(|e| CliError::Runtime(e.to_string()))?;
    let loss_path = cli.out.join(format!(
        "{}_loss.csv",
        Path::new(&sec.checkpoint_name)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    ));
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for e in &report.epochs {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss));
    }
    std::fs::write(&loss_path, csv)?;
    if let (Some(first), Some(last)) = (report.epochs.first(), report.epochs.last()) {
        println!(
            "trained {} epochs: val loss {} -> {}; checkpoint {}",
            report.epochs.len(),
            first.val_loss,
            last.val_loss,
            ckpt_path.display()
        );
    }
    Ok(())
}

fn detect(
    cli: &Cli,
    config: Option<&AppConfig>,
    messages: &[u16],
    ebn0_db: Option<f64>,
) -> Result<(), CliError> {
    let scenario = section(config, |c| c.scenario.as_ref(), "scenario")?;
    let code = scenario.code.build()?;
    let rate = scenario.outer_rate_enum()?;
    let outer = match rate {
        OuterRate::Unity => None,
        OuterRate::Half => Some(OuterCode::standard()),
    };
    let sent: Vec<MessageId> = messages.to_vec();
    for &m in &sent {
        if m == 0 || m as usize > code.message_count() {
            return Err(CliError::Config(format!(
                "message {m} outside 1..={}",
                code.message_count()
            )));
        }
    }
    let clean = synth_superposition(&code, outer.as_ref(), &sent, scenario.amplitude)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let noise_var = match ebn0_db {
        Some(db) => ebn0_to_noise_var(db, scenario.amplitude, code.capability(), rate),
        None => 0.0,
    };
    let seed = cli.seed.unwrap_or(scenario.seed);
    let mut rng = ns_stream(seed, ns::EVAL, 0);
    let block = ReceivedBlock {
        chips: awgn_add(&clean, noise_var, &mut rng),
        amplitude: scenario.amplitude,
        noise_var,
    };
    let (decoded, trace) = joint_activity_trace(
        &code,
        outer.as_ref(),
        DecisionMode::Hard,
        &block,
        code.capability(),
    )
    .map_err(|e| CliError::Runtime(e.to_string()))?;

    println!(
        "block: {} chips, amplitude {}, noise_var {noise_var}",
        block.len(),
        scenario.amplitude
    );
    println!("sent: {sent:?}");
    println!("{:<14}{:<12}{:<24}metric", "active_users", "status", "messages");
    for row in &trace {
        let (status, msgs, metric) = match (&row.candidate, row.metric) {
            (Some(c), Some(m)) => ("candidate", format!("{c:?}"), format!("{m:.6}")),
            _ => ("rejected", "-".to_string(), "-".to_string()),
        };
        let marker = if row.selected { "  <- selected" } else { "" };
        println!("{:<14}{status:<12}{msgs:<24}{metric}{marker}", row.active_users);
    }
    println!(
        "decoded: {:?} ({:?}, {} field ops)",
        decoded.messages, decoded.status, decoded.field_ops
    );
    Ok(())
}

fn power_grid_csv(result: &PowerOptResult) -> String {
    let layers = result.plan.layer_count();
    let mut csv = String::new();
    match layers {
        1 => csv.push_str("p1,bler_layer1,minmax\n"),
        _ => csv.push_str("p1,p2,bler_layer1,bler_layer2,minmax\n"),
    }
    for point in &result.grid {
        let powers: Vec<String> = point.powers.iter().map(|p| p.to_string()).collect();
        let blers: Vec<String> =
            point.per_layer_bler.iter().map(|b| b.to_string()).collect();
        csv.push_str(&format!(
            "{},{},{}\n",
            powers.join(","),
            blers.join(","),
            point.minmax_bler
        ));
    }
    csv
}

fn power_opt(cli: &Cli, config: Option<&AppConfig>) -> Result<(), CliError> {
    let sec = section(config, |c| c.power.as_ref(), "power")?;
    let code = sec.code.build()?;
    let seed = cli.seed.unwrap_or(sec.seed);
    let workers = effective_workers(cli, 0);
    let result = with_pool(workers, || {
        optimize_power_allocation(
            &code,
            sec.layer_count,
            sec.p_max,
            sec.noise_var,
            sec.users_per_layer,
            sec.trials,
            seed,
            sec.levels,
        )
    })??;
    ensure_out_dir(&cli.out)?;
    let grid_path = cli.out.join("power_grid.csv");
    std::fs::write(&grid_path, power_grid_csv(&result))?;
    println!(
        "best powers {:?} with worst-layer error rate {}; grid in {}",
        result.plan.powers(),
        result.minmax_bler,
        grid_path.display()
    );
    Ok(())
}

fn sysim_cmd(cli: &Cli, config: Option<&AppConfig>) -> Result<(), CliError> {
    let sec = section(config, |c| c.sysim.as_ref(), "sysim")?;
    let pools = ResourcePoolConfig {
        noma_partitions: sec
            .clusters
            .iter()
            .map(|c| NomaPartition {
                cluster_id: c.cluster_id,
                gfru_count: c.gfru_count,
                signature_pool_size: c.signature_pool_size,
                capability: c.capability,
            })
            .collect(),
        oma_block_count: sec.oma_block_count,
        frame_count: sec.frame_count,
    };
    let traffic = TrafficConfig {
        clusters: sec
            .clusters
            .iter()
            .map(|c| ClusterTraffic {
                cluster_id: c.cluster_id,
                arrival_rate: c.arrival_rate,
                population: c.population,
            })
            .collect(),
    };
    let mode = if sec.full_phy {
        SimMode::FullPhy { ebn0_db: sec.ebn0_db, amplitude: sec.amplitude }
    } else {
        SimMode::Abstract
    };
    let seed = cli.seed.unwrap_or(sec.seed);
    let report = run_system_sim(&pools, &traffic, &mode, seed)?;
    ensure_out_dir(&cli.out)?;
    let csv_path = cli.out.join("sysim.csv");
    std::fs::write(&csv_path, crate::sysim::metrics_csv(&report, sec.frame_count))?;
    for (metrics, part) in report.clusters.iter().zip(&pools.noma_partitions) {
        let per_gfru_rate = traffic
            .clusters
            .iter()
            .find(|t| t.cluster_id == metrics.cluster_id)
            .map(|t| t.arrival_rate / part.gfru_count as f64)
            .unwrap_or(0.0);
        let analytic = crate::sysim::analytic_success_probability(
            per_gfru_rate,
            part.signature_pool_size,
            part.capability,
        );
        println!(
            "cluster {}: offered {:.3}/frame, throughput {:.3}/frame, success {:.4} (analytic {:.4}), collisions {:.4}",
            metrics.cluster_id,
            metrics.offered_load,
            metrics.throughput,
            metrics.success_prob,
            analytic,
            metrics.collision_rate
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn zc_analyze(config: Option<&AppConfig>) -> Result<(), CliError> {
    let default_section = ZcSection::default();
    let sec = config.and_then(|c| c.zc.as_ref()).unwrap_or(&default_section);
    for &q in &sec.lengths {
        let mut sequences = Vec::new();
        for &root in &sec.roots {
            let params =
                ZcParams::new(root, q).map_err(|e| CliError::Config(e.to_string()))?;
            sequences.push((root, zc_generate(params)));
        }
        for (root, seq) in &sequences {
            let worst_modulus = seq
                .iter()
                .map(|z| (z.norm() - 1.0).abs())
                .fold(0.0, f64::max);
            let worst_off_peak = (1..q)
                .map(|lag| {
                    periodic_correlation(seq, seq, lag).expect("equal lengths").norm()
                })
                .fold(0.0, f64::max);
            println!(
                "q={q} root={root}: max modulus error {worst_modulus:.3e}, max off-peak autocorrelation {worst_off_peak:.3e}"
            );
        }
        for i in 0..sequences.len() {
            for j in i + 1..sequences.len() {
                let (ra, a) = &sequences[i];
                let (rb, b) = &sequences[j];
                let cross = periodic_correlation(a, b, 0).expect("equal lengths").norm();
                println!(
                    "q={q} roots ({ra},{rb}): cross-correlation magnitude {cross:.6} (sqrt q = {:.6})",
                    (q as f64).sqrt()
                );
            }
        }
    }
    Ok(())
}
